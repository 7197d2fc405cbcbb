"""Scenario-level analyses: turn a run record into the numbers each figure is about.

Every function takes the :class:`~ecramsim.protocol.RunRecord` and the
:class:`~ecramsim.config.Setup` it came from and returns a JSON-ready dict.
"""

from __future__ import annotations

import math

import numpy as np

from .analysis import arrhenius_fit, convergence_time, gq_collapse, switching_metrics, tangent_extrapolation
from .errors import EcramError
from .protocol import Drive, Hold, SetTemperature

__all__ = [
    "arrhenius_report",
    "conservation_report",
    "gq_report",
    "rebound_report",
    "retention_tangents_report",
    "run_analyses",
    "settled_states_report",
    "switching_report",
]

HOUR = 3600.0


def _span(record, k):
    """First and last sample index of top-level step ``k`` and the index just before it."""
    idx = np.flatnonzero(record.select(k))
    if idx.size == 0:
        return None
    first, last = int(idx[0]), int(idx[-1])
    return max(first - 1, 0), first, last


def _finite(v):
    return None if v is None or not math.isfinite(v) else float(v)


def switching_report(record, setup, k_sigma: float = 3.0) -> dict:
    reads = record.read_arrays()
    m = switching_metrics(reads["g"], reads["branch"], reads["sigma"], k_sigma)
    return {
        "n_reads": int(reads["g"].size),
        "n_distinct": m.n_distinct,
        "k_sigma": k_sigma,
        "linearity_r2": m.linearity_r2,
        "branch_r2": m.branch_r2,
        "symmetry_ratio": m.symmetry_ratio,
    }


def rebound_report(record, setup, settle_window: float = HOUR) -> dict:
    """Charge moved by each drive and given back during the hold that follows it."""
    pairs = []
    for k, (a, b) in enumerate(zip(setup.protocol, setup.protocol[1:])):
        if not (isinstance(a, Drive) and isinstance(b, Hold)):
            continue
        before, _, end_drive = _span(record, k)
        _, hold_first, end_hold = _span(record, k + 1)
        q = record.q
        drive_q = float(q[end_drive] - q[before])
        rebound_q = float(q[end_hold] - q[end_drive])
        settled_q = float(q[end_hold] - q[before])
        i_end, i_hold = record.i_gate[end_drive], record.i_gate[hold_first]
        t_hold = record.t[hold_first - 1:end_hold + 1]
        tail = np.flatnonzero(t_hold >= t_hold[-1] - settle_window)
        tail_dq = float(q[hold_first - 1 + tail[-1]] - q[hold_first - 1 + tail[0]])
        ratio = abs(rebound_q) / abs(drive_q) if drive_q else None
        pairs.append({
            "drive_step": k,
            "v_gate": a.v_gate,
            "drive_charge_C": drive_q,
            "rebound_charge_C": rebound_q,
            "settled_charge_C": settled_q,
            "rebound_ratio": ratio,
            "current_end_of_drive_A": float(i_end),
            "current_start_of_hold_A": float(i_hold),
            "sign_reversal": bool(i_end * i_hold < 0),
            "settled_between": bool(drive_q != 0 and 0 < settled_q / drive_q < 1),
            "tail_charge_C": tail_dq,
            "tail_fraction_of_rebound": abs(tail_dq) / abs(rebound_q) if rebound_q else None,
        })
    return {"pairs": pairs}


def settled_states_report(record, setup) -> dict:
    """Conductance at the end of every hold, and how far apart those values are."""
    g_end, t_end = [], []
    for k, step in enumerate(setup.protocol):
        if isinstance(step, Hold):
            _, _, last = _span(record, k)
            g_end.append(float(record.g[last]))
            t_end.append(float(record.t[last]))
    g = np.array(g_end)
    g_range = float(np.ptp(record.g))
    sigma = np.array([setup.read.sigma_of_mean(v) for v in g])
    out = {
        "t_s": t_end,
        "g_S": g_end,
        "read_sigma_S": sigma.tolist(),
        "g_range_S": g_range,
        "spread_S": float(np.ptp(g)) if g.size else 0.0,
    }
    out["spread_fraction"] = out["spread_S"] / g_range if g_range > 0 else 0.0
    if g.size >= 2:
        order = np.argsort(g)
        sep = np.diff(g[order])
        # compare each gap with the larger of the two neighbouring resolutions
        res = np.maximum(sigma[order][1:], sigma[order][:-1])
        out["min_separation_S"] = float(sep.min())
        out["min_separation_sigmas"] = _finite(float(np.min(sep / res))) if np.all(res > 0) else None
    return out


def retention_tangents_report(record, setup, window: float = 300.0, checkpoints=(0.125, 0.25, 0.5, 1.0)) -> dict:
    """Trailing tangent lines of G at fractions of every hold, and where the final ones cross."""
    holds = []
    finals = []
    for k, step in enumerate(setup.protocol):
        if not isinstance(step, Hold):
            continue
        _, first, last = _span(record, k)
        t = record.t[first:last + 1]
        g = record.g[first:last + 1]
        lines = []
        for frac in checkpoints:
            stop = np.searchsorted(t, t[0] + frac * (t[-1] - t[0]), side="right")
            try:
                line = tangent_extrapolation(t[:stop], g[:stop], window)
            except EcramError:
                continue
            lines.append({"t_end_s": line.fit_window[1], "slope_S_per_s": line.slope,
                          "intercept_S": line.intercept, "rms_residual_S": line.rms_residual})
        slopes = [abs(x["slope_S_per_s"]) for x in lines]
        holds.append({"step": k, "tangents": lines,
                      "slopes_decay": bool(all(b <= a for a, b in zip(slopes, slopes[1:])))})
        finals.append(tangent_extrapolation(t, g, window))
    crossings = []
    for a, b in zip(finals, finals[1:]):
        tc = convergence_time(a, b)
        crossings.append({"t_s": tc, "hours": None if tc is None else tc / HOUR})
    return {"window_s": window, "holds": holds, "convergence": crossings}


def arrhenius_report(record, setup) -> dict:
    """Mean current of the first positive drive after every temperature change."""
    temps, amps = [], []
    for k, step in enumerate(setup.protocol):
        if not isinstance(step, SetTemperature):
            continue
        for j in range(k + 1, len(setup.protocol)):
            nxt = setup.protocol[j]
            if isinstance(nxt, SetTemperature):
                break
            if isinstance(nxt, Drive) and nxt.v_gate > 0:
                before, _, last = _span(record, j)
                temps.append(step.kelvin)
                amps.append(float(record.q[last] - record.q[before]) / nxt.duration)
                break
    fit = arrhenius_fit(temps, amps)
    configured = setup.circuit.ea_ion
    return {
        "temperatures_K": temps,
        "currents_A": amps,
        "fit": fit.to_dict(),
        "configured_ea": configured,
        "relative_error": abs(fit.ea - configured) / configured,
    }


def gq_report(record, setup) -> dict:
    """G against gate charge over every protocol step, pooled."""
    parts = []
    for k in range(len(setup.protocol)):
        m = record.select(k)
        if m.any():
            parts.append((record.q[m], record.g[m]))
    res = gq_collapse(parts)
    return {"n_segments": len(parts), "max_residual_fraction": res.max_residual_fraction,
            "isothermal": bool(np.ptp(record.temperature) == 0)}


def conservation_report(record, setup) -> dict:
    ions = record.ions
    drift = np.abs(ions - ions[0]) / ions[0]
    return {"max_relative_drift": float(drift.max()), "leak": setup.circuit.oxidation_rate > 0}


REPORTS = {
    "switching": switching_report,
    "rebound": rebound_report,
    "settled_states": settled_states_report,
    "retention_tangents": retention_tangents_report,
    "arrhenius": arrhenius_report,
    "gq_collapse": gq_report,
    "conservation": conservation_report,
}


def run_analyses(record, setup, names=None) -> dict:
    """Run the named analyses (default: those the setup declares)."""
    names = setup.analyses if names is None else names
    return {name: REPORTS[name](record, setup) for name in names}

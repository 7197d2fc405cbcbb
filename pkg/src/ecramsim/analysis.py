"""Post-processing of run records: charge, retention fits and switching quality."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import isotonic_regression
from scipy.stats import linregress

from .constants import HOURS_PER_YEAR, K_B_EV, SECONDS_PER_HOUR
from .errors import (
    DomainError,
    DuplicateTemperature,
    InsufficientData,
    NonMonotonicTime,
    NonPositiveCurrent,
    WindowTooShort,
)

__all__ = [
    "ArrheniusFit",
    "CollapseResult",
    "SwitchingMetrics",
    "TangentLine",
    "arrhenius_fit",
    "convergence_time",
    "gq_collapse",
    "integrate_charge",
    "retention_report",
    "retention_scale",
    "switching_metrics",
    "tangent_extrapolation",
    "write_curve_csv",
]


def _strictly_increasing(t):
    t = np.asarray(t, dtype=float)
    if t.ndim != 1:
        raise NonMonotonicTime("time must be one-dimensional")
    if t.size > 1 and not np.all(np.diff(t) > 0):
        k = int(np.flatnonzero(np.diff(t) <= 0)[0])
        raise NonMonotonicTime(f"time not strictly increasing at index {k + 1}")
    return t


def integrate_charge(t, current) -> np.ndarray:
    """Cumulative trapezoid integral of current, starting from zero."""
    t = _strictly_increasing(t)
    i = np.asarray(current, dtype=float)
    if i.shape != t.shape:
        raise ValueError("time and current must have the same length")
    if t.size == 0:
        return np.zeros(0)
    return cumulative_trapezoid(i, t, initial=0.0)


# -- tangent lines ---------------------------------------------------------------

@dataclass(frozen=True)
class TangentLine:
    """Straight line ``value = intercept + slope * t`` fitted over ``fit_window``."""

    slope: float
    intercept: float
    fit_window: tuple
    rms_residual: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.slope):
            raise DomainError("slope must be finite")
        if not self.fit_window[1] >= self.fit_window[0]:
            raise DomainError("fit window must not be reversed")

    def __call__(self, t):
        return self.intercept + self.slope * np.asarray(t, dtype=float)


def tangent_extrapolation(t, values, window: float = 300.0) -> TangentLine:
    """Least-squares line through the samples in the trailing ``window`` seconds."""
    t = _strictly_increasing(t)
    v = np.asarray(values, dtype=float)
    if t.size == 0:
        raise WindowTooShort("empty series")
    mask = t >= t[-1] - window
    if np.count_nonzero(mask) < 2:
        raise WindowTooShort(f"fewer than two samples in the trailing {window} s")
    tw, vw = t[mask], v[mask]
    slope, intercept = np.polyfit(tw, vw, 1)
    rms = float(np.sqrt(np.mean((vw - (intercept + slope * tw)) ** 2)))
    return TangentLine(float(slope), float(intercept), (float(tw[0]), float(tw[-1])), rms)


def convergence_time(a: TangentLine, b: TangentLine):
    """Time where two tangent lines cross, or ``None``.

    ``None`` means the lines are parallel or crossed before the later of the
    two fit windows ended, so they do not converge in the future.
    """
    if a.slope == b.slope:
        return None
    t = (b.intercept - a.intercept) / (a.slope - b.slope)
    if t < max(a.fit_window[1], b.fit_window[1]):
        return None
    return float(t)


# -- Arrhenius -------------------------------------------------------------------------

@dataclass(frozen=True)
class ArrheniusFit:
    ea: float
    ln_prefactor: float
    r_squared: float
    n_points: int

    def to_dict(self):
        return asdict(self)


def arrhenius_fit(temperatures, currents) -> ArrheniusFit:
    """Fit ``ln I = ln A - ea / (k T)`` by least squares."""
    temps = np.asarray(temperatures, dtype=float)
    amps = np.asarray(currents, dtype=float)
    if temps.shape != amps.shape or temps.ndim != 1:
        raise InsufficientData("temperatures and currents must be matching 1-D sequences")
    if temps.size < 2:
        raise InsufficientData("need at least two points")
    if np.any(temps <= 0):
        raise DomainError("temperatures must be positive")
    bad = np.flatnonzero(~(amps > 0))
    if bad.size:
        raise NonPositiveCurrent(f"current at index {int(bad[0])} is not positive: {amps[bad[0]]}")
    if np.unique(temps).size != temps.size:
        raise DuplicateTemperature("temperatures must be distinct")
    fit = linregress(1.0 / temps, np.log(amps))
    r2 = 1.0 if temps.size == 2 else float(min(1.0, fit.rvalue**2))
    return ArrheniusFit(float(-fit.slope * K_B_EV), float(fit.intercept), r2, int(temps.size))


def retention_scale(t_ref: float, temp_ref: float, temp_target: float, ea: float) -> float:
    """Project a retention time measured at ``temp_ref`` to ``temp_target``."""
    if not (temp_ref > 0 and temp_target > 0):
        raise DomainError("temperatures must be positive")
    if t_ref < 0:
        raise DomainError("reference time must be non-negative")
    if ea == 0 or temp_ref == temp_target:
        return float(t_ref)
    return float(t_ref * math.exp((ea / K_B_EV) * (1.0 / temp_target - 1.0 / temp_ref)))


def retention_report(t_ref: float, temp_ref: float, temp_target: float, ea: float) -> dict:
    t = retention_scale(t_ref, temp_ref, temp_target, ea)
    hours = t / SECONDS_PER_HOUR
    return {"seconds": t, "hours": hours, "years": hours / HOURS_PER_YEAR}


# -- G-Q collapse ------------------------------------------------------------------

@dataclass(frozen=True)
class CollapseResult:
    max_residual_fraction: float
    q_curve: np.ndarray = field(repr=False)
    g_curve: np.ndarray = field(repr=False)

    def __call__(self, q):
        return _interp_linear_ends(q, self.q_curve, self.g_curve)


def _interp_linear_ends(q, xs, ys):
    """Piecewise-linear interpolation continued linearly past both ends."""
    q = np.asarray(q, dtype=float)
    out = np.interp(q, xs, ys)
    lo = q < xs[0]
    hi = q > xs[-1]
    out[lo] = ys[0] + (q[lo] - xs[0]) * (ys[1] - ys[0]) / (xs[1] - xs[0])
    out[hi] = ys[-1] + (q[hi] - xs[-1]) * (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    return out


def _qg(record):
    if isinstance(record, tuple):
        q, g = record
    else:
        q, g = record.q, record.g
    return np.asarray(q, dtype=float), np.asarray(g, dtype=float)


def gq_collapse(records, n_bins: int = 200) -> CollapseResult:
    """Fit one increasing curve G(q) through every sample of every record.

    Samples are pooled, split into ``n_bins`` equal-width q bins, reduced to
    bin means, and the bin means are made monotone by weighted isotonic
    regression.  The residual is the largest vertical distance from any
    sample to the interpolated curve, as a fraction of the pooled G range.
    """
    parts = [_qg(r) for r in records]
    if not parts:
        raise InsufficientData("no records")
    q = np.concatenate([p[0] for p in parts])
    g = np.concatenate([p[1] for p in parts])
    span = float(np.max(g) - np.min(g)) if g.size else 0.0
    if g.size < 2 or span <= 0 or np.ptp(q) <= 0:
        raise InsufficientData("need samples spanning a non-zero range of q and G")
    edges = np.linspace(q.min(), q.max(), n_bins + 1)
    idx = np.clip(np.searchsorted(edges, q, side="right") - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    used = counts > 0
    qm = np.bincount(idx, weights=q, minlength=n_bins)[used] / counts[used]
    gm = np.bincount(idx, weights=g, minlength=n_bins)[used] / counts[used]
    if qm.size < 2:
        raise InsufficientData("all samples fell in one q bin")
    curve = isotonic_regression(gm, weights=counts[used].astype(float), increasing=True).x
    resid = np.abs(g - _interp_linear_ends(q, qm, curve))
    return CollapseResult(float(np.max(resid) / span), qm, curve)


def write_curve_csv(path, result: CollapseResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["q_C", "g_S"])
        for a, b in zip(result.q_curve, result.g_curve):
            w.writerow([repr(float(a)), repr(float(b))])


# -- switching staircase ----------------------------------------------------------------

@dataclass(frozen=True)
class SwitchingMetrics:
    n_distinct: int
    linearity_r2: float
    symmetry_ratio: float | None
    branch_r2: dict

    def to_dict(self):
        return asdict(self)


def _r2(y):
    if y.size < 3 or np.ptp(y) == 0:
        return 1.0
    return float(linregress(np.arange(y.size), y).rvalue ** 2)


def switching_metrics(g, branch, sigma=0.0, k_sigma: float = 3.0) -> SwitchingMetrics:
    """Quality of a read staircase.

    ``g`` are read conductances in order, ``branch`` is +1 for reads after
    a potentiating pulse and -1 after a depressing one, ``sigma`` is the
    read resolution (scalar or per read).  A read counts as a new state when
    it differs from the previous read by more than ``k_sigma * sigma``; the
    first read always counts.  Linearity is the smallest per-branch r^2 of
    G against pulse index, and symmetry compares the mean step sizes.
    """
    g = np.asarray(g, dtype=float)
    branch = np.asarray(branch)
    if g.size < 2 or branch.shape != g.shape:
        raise InsufficientData("need at least two reads with a branch label each")
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), g.shape)
    step = np.diff(g)
    n = 1 + int(np.count_nonzero(np.abs(step) > k_sigma * sigma[1:]))

    r2 = {}
    mean_step = {}
    for sign, name in ((1, "potentiation"), (-1, "depression")):
        mask = branch == sign
        if not mask.any():
            continue
        r2[name] = _r2(g[mask])
        steps = step[mask[1:]]
        if steps.size:
            mean_step[name] = float(np.mean(steps))
    if not r2:
        raise InsufficientData("no read carries a branch label of +1 or -1")
    symmetry = None
    if "potentiation" in mean_step and "depression" in mean_step and mean_step["depression"] != 0:
        symmetry = abs(mean_step["potentiation"]) / abs(mean_step["depression"])
    return SwitchingMetrics(n, min(r2.values()), symmetry, r2)


def dump_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

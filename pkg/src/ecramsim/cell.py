"""Lumped two-reservoir ECRAM cell.

Channel (1) and gate (2) are ion reservoirs of ``n1``/``n2`` sites joined by
an electrolyte of ionic resistance R(T).  With gate voltage ``v`` applied,

    V_oc  = [mu_eq(x2) - mu_eq(x1)] / z
    I_G   = (v + V_oc) / R(T)                  positive: ions into the channel
    dx1/dt =  I_G / (z e n1) - k_ox (x1 - x_amb)
    dx2/dt = -I_G / (z e n2)
    dq/dt  =  I_G + I_dl

``mu_eq`` is the convexified chemical potential, so two electrodes sitting
inside the same miscibility gap carry no current.  The optional double-layer
branch charges a capacitor ``c_dl`` through the same electrolyte resistance:
``I_dl = (v + V_oc - v_dl) / R`` and ``dv_dl/dt = I_dl / c_dl``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import E_CHARGE, K_B_EV
from .errors import DomainError, StiffnessFailure
from .thermo import (
    FreeEnergyModel,
    chemical_potential,
    common_tangent,
    convexified_free_energy,
    convexified_mu,
)


@dataclass(frozen=True)
class CellState:
    x1: float
    x2: float
    n1: float
    n2: float
    temperature: float
    q_accum: float = 0.0
    v_dl: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.x1 < 1.0 and 0.0 < self.x2 < 1.0):
            raise DomainError(f"ion fractions must lie in (0, 1): x1={self.x1}, x2={self.x2}")
        if not (self.n1 > 0 and self.n2 > 0):
            raise DomainError("site capacities must be positive")
        if not self.temperature > 0:
            raise DomainError(f"temperature must be > 0 K, got {self.temperature}")

    @property
    def ions(self) -> float:
        """Total ion count n1*x1 + n2*x2."""
        return self.n1 * self.x1 + self.n2 * self.x2


@dataclass(frozen=True)
class CircuitParams:
    r_ref: float
    t_ref: float
    ea_ion: float
    z: float = 2.0
    c_dl: float = 0.0
    oxidation_rate: float = 0.0
    x_ambient: float = 0.0

    def __post_init__(self):
        if not self.r_ref > 0:
            raise DomainError("r_ref must be > 0")
        if not self.t_ref > 0:
            raise DomainError("t_ref must be > 0")
        if self.ea_ion < 0:
            raise DomainError("ea_ion must be >= 0")
        if self.z < 1:
            raise DomainError("z must be >= 1")
        if self.c_dl < 0:
            raise DomainError("c_dl must be >= 0")
        if self.oxidation_rate < 0:
            raise DomainError("oxidation_rate must be >= 0")
        if not 0.0 <= self.x_ambient < 1.0:
            raise DomainError("x_ambient must lie in [0, 1)")


@dataclass(frozen=True)
class IntegratorOptions:
    """Error control for the cell integrator.

    ``rtol`` bounds the local relative error per substep.  Absolute floors
    are 1e-12 of each component's natural scale (unit fraction, the charge
    of a full channel, one volt).  ``h_min`` is the hard substep floor.
    """

    rtol: float = 1e-9
    h_min: float = 1e-9
    max_substeps: int = 2_000_000
    smoothing: float = 0.0


DEFAULT_OPTIONS = IntegratorOptions()


@dataclass(frozen=True)
class Sample:
    t: float
    v_gate: float
    i_gate: float
    q: float
    x1: float
    x2: float
    temperature: float


@dataclass
class SegmentRecord:
    """Sampled series emitted by :func:`run_segment`."""

    t: np.ndarray
    v_gate: np.ndarray
    i_gate: np.ndarray
    q: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    temperature: np.ndarray
    v_dl: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.t)


def ionic_resistance(circuit: CircuitParams, temperature) -> float:
    """Arrhenius electrolyte resistance R(T) = r_ref exp[(Ea/k)(1/T - 1/t_ref)]."""
    if np.any(np.asarray(temperature) <= 0):
        raise DomainError(f"temperature must be > 0 K, got {temperature}")
    if temperature == circuit.t_ref:
        return circuit.r_ref
    return circuit.r_ref * np.exp(circuit.ea_ion / K_B_EV * (1.0 / temperature - 1.0 / circuit.t_ref))


@functools.lru_cache(maxsize=256)
def _gap(model: FreeEnergyModel, temperature: float):
    return common_tangent(model, temperature)


def equilibrium_mu(model: FreeEnergyModel, x, temperature, smoothing=0.0):
    """Convexified chemical potential with the gap looked up once per (model, T)."""
    return convexified_mu(model, _gap(model, temperature), x, temperature, smoothing=smoothing)


def open_circuit_voltage(state: CellState, model: FreeEnergyModel, circuit: CircuitParams | None = None, smoothing=0.0) -> float:
    z = 2.0 if circuit is None else circuit.z
    T = state.temperature
    return (equilibrium_mu(model, state.x2, T, smoothing) - equilibrium_mu(model, state.x1, T, smoothing)) / z


def gate_current(state: CellState, circuit: CircuitParams, model: FreeEnergyModel, v_gate: float, smoothing=0.0) -> float:
    """Faradaic gate current (v_gate + V_oc)/R; positive moves ions into the channel."""
    voc = open_circuit_voltage(state, model, circuit, smoothing)
    return (v_gate + voc) / ionic_resistance(circuit, state.temperature)


def cell_free_energy(state: CellState, model: FreeEnergyModel) -> float:
    """n1 g_eq(x1) + n2 g_eq(x2) using the convex hull of g, eV."""
    T = state.temperature
    gap = _gap(model, T)
    return state.n1 * convexified_free_energy(model, gap, state.x1, T) + state.n2 * convexified_free_energy(model, gap, state.x2, T)


class _OutOfDomain(Exception):
    pass


class _Dynamics:
    """Right-hand side for one (model, circuit, temperature, v_gate) segment."""

    def __init__(self, model, circuit, state, v_gate, options):
        T = state.temperature
        self.model = model
        self.T = T
        self.gap = _gap(model, T)
        self.smoothing = options.smoothing
        self.v = float(v_gate)
        self.z = float(circuit.z)
        self.R = float(ionic_resistance(circuit, T))
        self.inv1 = 1.0 / (self.z * E_CHARGE * state.n1)
        self.inv2 = 1.0 / (self.z * E_CHARGE * state.n2)
        self.k_ox = float(circuit.oxidation_rate)
        self.x_amb = float(circuit.x_ambient)
        self.c_dl = float(circuit.c_dl)
        q_scale = self.z * E_CHARGE * state.n1
        self.atol = (1e-12, 1e-12, 1e-12 * q_scale, 1e-12)
        self.kT = K_B_EV * T
        gap = self.gap
        self._plain = gap is None and self.smoothing == 0.0
        if self.smoothing > 0.0 and gap is not None:
            hump = chemical_potential(model, gap.spinodal_lo, T) - gap.mu_plateau
            if self.smoothing >= hump:
                raise DomainError(f"smoothing {self.smoothing} eV exceeds the plateau hump height {hump:.4g} eV")

    def mu(self, x):
        if not 0.0 < x < 1.0:
            raise _OutOfDomain
        gap = self.gap
        if self.smoothing == 0.0 and gap is not None and gap.x_alpha <= x <= gap.x_beta:
            return gap.mu_plateau
        if self.smoothing == 0.0 or gap is None:
            m = self.model
            return m.mu0 + self.kT * math.log(x / (1.0 - x)) + m.interaction * (1.0 - 2.0 * x)
        return convexified_mu(self.model, gap, x, self.T, smoothing=self.smoothing)

    def currents(self, y):
        x1, x2, _, vdl = y
        drive = self.v + (self.mu(x2) - self.mu(x1)) / self.z
        i_far = drive / self.R
        i_cap = (drive - vdl) / self.R if self.c_dl > 0.0 else 0.0
        return i_far, i_cap

    def __call__(self, y):
        i_far, i_cap = self.currents(y)
        dx1 = i_far * self.inv1
        if self.k_ox:
            dx1 -= self.k_ox * (y[0] - self.x_amb)
        dv = i_cap / self.c_dl if self.c_dl > 0.0 else 0.0
        return (dx1, -i_far * self.inv2, i_far + i_cap, dv)


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (
    71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
)


def _dopri_step(f, y, h, k1):
    ks = [k1]
    n = len(y)
    for i in range(1, 7):
        a = _A[i]
        yi = tuple(y[j] + h * sum(a[s] * ks[s][j] for s in range(i)) for j in range(n))
        ks.append(f(yi))
    y_new = tuple(y[j] + h * sum(_B[s] * ks[s][j] for s in range(6)) for j in range(n))
    err = tuple(h * sum(_E[s] * ks[s][j] for s in range(7)) for j in range(n))
    # stage 7 is evaluated at y_new (FSAL)
    return y_new, err, ks[6]


def _advance(f: _Dynamics, y, dt, h, options: IntegratorOptions, t0=0.0):
    """Integrate ``y`` over ``dt`` with adaptive substeps; returns (y, h_next)."""
    rtol = options.rtol
    atol = f.atol
    t = 0.0
    k1 = f(y)
    h = min(h if h else dt, dt)
    count = 0
    while t < dt:
        if dt - t <= h * (1 + 1e-12):
            h = dt - t
            last = True
        else:
            last = False
        count += 1
        if count > options.max_substeps:
            raise StiffnessFailure(
                f"exceeded {options.max_substeps} substeps at t={t0 + t:.6g} s", time=t0 + t, state=y
            )
        try:
            y_new, err, k_last = _dopri_step(f, y, h, k1)
            if not (0.0 < y_new[0] < 1.0 and 0.0 < y_new[1] < 1.0):
                raise _OutOfDomain
        except _OutOfDomain:
            h *= 0.25
            if h < options.h_min:
                raise StiffnessFailure(
                    f"minimum substep reached near a composition limit at t={t0 + t:.6g} s", time=t0 + t, state=y
                )
            continue
        norm = 0.0
        for j in range(len(y)):
            sc = atol[j] + rtol * max(abs(y[j]), abs(y_new[j]))
            norm = max(norm, abs(err[j]) / sc)
        if norm <= 1.0:
            t = dt if last else t + h
            y = y_new
            k1 = k_last
            fac = 5.0 if norm == 0.0 else min(5.0, max(0.2, 0.9 * norm ** -0.2))
            h_next = h * fac
            if last:
                # keep the controller's suggestion, not the truncated final step
                return y, max(h_next, h)
            h = h_next
        else:
            h *= max(0.1, 0.9 * norm ** -0.2)
            if h < options.h_min:
                raise StiffnessFailure(
                    f"minimum substep {options.h_min:g} s reached at t={t0 + t:.6g} s "
                    f"(x1={y[0]:.6g}, x2={y[1]:.6g})",
                    time=t0 + t,
                    state=y,
                )
    return y, h


def _pack(state):
    return (state.x1, state.x2, state.q_accum, state.v_dl)


def _unpack(state, y):
    return replace(state, x1=y[0], x2=y[1], q_accum=y[2], v_dl=y[3])


def _sample(f: _Dynamics, y, t):
    i_far, i_cap = f.currents(y)
    return Sample(t=t, v_gate=f.v, i_gate=i_far + i_cap, q=y[2], x1=y[0], x2=y[1], temperature=f.T)


def step(state: CellState, model: FreeEnergyModel, circuit: CircuitParams, v_gate: float, dt: float,
         options: IntegratorOptions = DEFAULT_OPTIONS, t: float = 0.0):
    """Advance the cell by ``dt`` seconds at constant ``v_gate``.

    Returns the new state and a :class:`Sample` of the end point (``t + dt``).
    Raises :class:`StiffnessFailure` if the substep floor is reached.
    """
    if not dt > 0:
        raise DomainError(f"dt must be > 0, got {dt}")
    f = _Dynamics(model, circuit, state, v_gate, options)
    y, _ = _advance(f, _pack(state), dt, None, options, t0=t)
    return _unpack(state, y), _sample(f, y, t + dt)


def sample_count(duration: float, sample_interval: float) -> int:
    """ceil(duration / interval) + 1, tolerant of round-off in the ratio."""
    ratio = duration / sample_interval
    n = math.ceil(ratio)
    if n - ratio > 1.0 - 1e-9:
        n -= 1
    return max(n, 1) + 1


def run_times(state: CellState, model: FreeEnergyModel, circuit: CircuitParams, v_gate: float,
              times, options: IntegratorOptions = DEFAULT_OPTIONS):
    """Hold ``v_gate`` and sample at each of ``times``; ``times[0]`` is now.

    The adaptive substep carries over between samples, so dense sampling
    does not restart the step-size controller.
    """
    ts = np.asarray(times, dtype=float)
    if ts.ndim != 1 or ts.size < 2 or not np.all(np.diff(ts) > 0):
        raise DomainError("sample times must be strictly increasing with at least two entries")
    f = _Dynamics(model, circuit, state, v_gate, options)
    n = ts.size
    cols = np.empty((n, 5))
    y = _pack(state)
    h = None
    for k in range(n):
        if k:
            y, h = _advance(f, y, ts[k] - ts[k - 1], h, options, t0=ts[k - 1])
        i_gate = _sample(f, y, ts[k]).i_gate
        cols[k] = (i_gate, y[2], y[0], y[1], y[3])
    rec = SegmentRecord(
        t=ts.copy(),
        v_gate=np.full(n, f.v),
        i_gate=cols[:, 0].copy(),
        q=cols[:, 1].copy(),
        x1=cols[:, 2].copy(),
        x2=cols[:, 3].copy(),
        temperature=np.full(n, f.T),
        v_dl=cols[:, 4].copy(),
    )
    return _unpack(state, y), rec


def segment_times(t0: float, duration: float, sample_interval: float) -> np.ndarray:
    """Sample grid ``t0, t0 + dt, ...`` whose last interval lands on ``t0 + duration``."""
    n = sample_count(duration, sample_interval)
    ts = t0 + np.minimum(np.arange(n) * sample_interval, duration)
    ts[-1] = t0 + duration
    return ts


def run_segment(state: CellState, model: FreeEnergyModel, circuit: CircuitParams, v_gate: float,
                duration: float, sample_interval: float, t0: float = 0.0,
                options: IntegratorOptions = DEFAULT_OPTIONS):
    """Hold ``v_gate`` for ``duration`` seconds, sampling every ``sample_interval``.

    The record holds ``ceil(duration/sample_interval) + 1`` samples including
    both endpoints; the final interval is shortened to land on ``t0 + duration``.
    """
    if not duration > 0:
        raise DomainError(f"duration must be > 0, got {duration}")
    if not sample_interval > 0:
        raise DomainError(f"sample_interval must be > 0, got {sample_interval}")
    return run_times(state, model, circuit, v_gate, segment_times(t0, duration, sample_interval), options)


@dataclass(frozen=True)
class EquilibrationResult:
    state: CellState
    converged: bool
    elapsed: float
    current: float


def equilibrate(state: CellState, model: FreeEnergyModel, circuit: CircuitParams,
                current_tolerance: float, max_time: float,
                options: IntegratorOptions = DEFAULT_OPTIONS) -> EquilibrationResult:
    """Short-circuit the cell until |I_G| <= ``current_tolerance`` or ``max_time``.

    ``converged`` tells which condition ended the run.
    """
    if not current_tolerance > 0:
        raise DomainError("current_tolerance must be > 0")
    f = _Dynamics(model, circuit, state, 0.0, options)
    y = _pack(state)
    elapsed = 0.0
    i_far, i_cap = f.currents(y)
    current = i_far + i_cap
    # check interval grows geometrically from the cell's own RC/ionic timescale
    interval = min(max_time, 1.0)
    h = None
    while abs(current) > current_tolerance and elapsed < max_time:
        dt = min(interval, max_time - elapsed)
        y, h = _advance(f, y, dt, h, options, t0=elapsed)
        elapsed += dt
        i_far, i_cap = f.currents(y)
        current = i_far + i_cap
        interval *= 1.5
    return EquilibrationResult(_unpack(state, y), abs(current) <= current_tolerance, elapsed, current)

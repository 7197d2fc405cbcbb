"""Measurement protocols and the executor that turns them into run records."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
from scipy.integrate import trapezoid

from .analysis import integrate_charge
from .cell import (
    DEFAULT_OPTIONS,
    CellState,
    CircuitParams,
    IntegratorOptions,
    run_times,
    segment_times,
)
from .conductance import ConductanceModel, ReadConfig, conductance, emulate_read
from .errors import ConfigError, DomainError, EcramError, ProtocolError
from .thermo import FreeEnergyModel

__all__ = [
    "Drive",
    "Hold",
    "Models",
    "PulseTrain",
    "Read",
    "ReadEvent",
    "ResetCharge",
    "RunRecord",
    "Sampling",
    "SetTemperature",
    "execute",
    "expand",
    "scenario",
]

RECORD_COLUMNS = ("t_s", "v_gate_V", "i_gate_A", "q_C", "g_S", "x1", "x2", "T_K")
READ_COLUMNS = ("t_s", "g_S", "g_true_S", "sigma_S", "branch", "step_index")


# -- steps -------------------------------------------------------------------------

def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class SetTemperature:
    kelvin: float

    def __post_init__(self):
        _positive("kelvin", self.kelvin)


@dataclass(frozen=True)
class Drive:
    v_gate: float
    duration: float

    def __post_init__(self):
        _positive("duration", self.duration)


@dataclass(frozen=True)
class Hold:
    """Gate shorted to the channel (0 V) for ``duration`` seconds."""

    duration: float

    def __post_init__(self):
        _positive("duration", self.duration)


@dataclass(frozen=True)
class Read:
    """Alternating-polarity read; ``config`` falls back to the run default."""

    config: ReadConfig | None = None


@dataclass(frozen=True)
class PulseTrain:
    count: int
    v_gate: float
    pulse_duration: float
    rest_duration: float
    read_between: bool = True

    def __post_init__(self):
        if not (isinstance(self.count, int) and self.count >= 1):
            raise DomainError(f"count must be an integer >= 1, got {self.count!r}")
        _positive("pulse_duration", self.pulse_duration)
        _positive("rest_duration", self.rest_duration)


@dataclass(frozen=True)
class ResetCharge:
    """Start a new charge origin: the record's q restarts at zero."""


Step = Union[SetTemperature, Drive, Hold, Read, PulseTrain, ResetCharge]


def expand(step: Step, read: ReadConfig) -> list:
    """Primitive steps a composite step stands for."""
    if not isinstance(step, PulseTrain):
        return [step]
    out = []
    window = read.window
    for _ in range(step.count):
        out.append(Drive(step.v_gate, step.pulse_duration))
        if not step.read_between:
            out.append(Hold(step.rest_duration))
            continue
        settle = step.rest_duration - window
        if settle < -1e-9 * step.rest_duration:
            raise ConfigError(
                f"rest_duration {step.rest_duration} s is shorter than the {window} s read window", key="rest_duration"
            )
        if settle > 1e-9 * step.rest_duration:
            out.append(Hold(settle))
        out.append(Read())
    return out


# -- run configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class Models:
    free_energy: FreeEnergyModel
    conductance: ConductanceModel


@dataclass(frozen=True)
class Sampling:
    """Record spacing and the integrator settings used for every segment.

    ``edge`` is the offset of the extra sample taken just after each step
    boundary, so current jumps are resolved without repeating a time stamp.
    """

    interval: float = 1.0
    edge: float = 1e-3
    options: IntegratorOptions = DEFAULT_OPTIONS

    def __post_init__(self):
        _positive("interval", self.interval)
        _positive("edge", self.edge)


# -- records ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReadEvent:
    t: float
    g: float
    g_true: float
    sigma: float
    branch: int
    step_index: int


@dataclass
class RunRecord:
    t: np.ndarray
    v_gate: np.ndarray
    i_gate: np.ndarray
    q: np.ndarray
    g: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    temperature: np.ndarray
    step_index: np.ndarray
    reads: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    final_state: CellState | None = None
    ions: np.ndarray | None = None

    def __len__(self):
        return self.t.size

    def columns(self):
        return (self.t, self.v_gate, self.i_gate, self.q, self.g, self.x1, self.x2, self.temperature)

    def select(self, step_index: int) -> np.ndarray:
        """Boolean mask of samples produced by top-level step ``step_index``."""
        return self.step_index == step_index

    def read_arrays(self):
        if not self.reads:
            return {k: np.zeros(0) for k in ("t", "g", "g_true", "sigma", "branch", "step_index")}
        return {k: np.array([getattr(r, k) for r in self.reads]) for k in ReadEvent.__dataclass_fields__}

    def write_csv(self, path) -> None:
        """Samples with full round-trip precision (``repr`` of each float)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RECORD_COLUMNS)
            for row in zip(*self.columns()):
                w.writerow([repr(float(v)) for v in row])

    def write_reads_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(READ_COLUMNS)
            for r in self.reads:
                w.writerow([repr(r.t), repr(r.g), repr(r.g_true), repr(r.sigma), r.branch, r.step_index])


# -- executor ----------------------------------------------------------------------------

class _Recorder:
    def __init__(self):
        self.chunks = []
        self.resets = []

    def add(self, seg, index, start):
        self.chunks.append((seg, np.full(len(seg.t) - start, index), start))

    def reset_here(self):
        self.resets.append(sum(len(c[0].t) - c[2] for c in self.chunks))

    def build(self, cond: ConductanceModel, n1, n2):
        def cat(name):
            return np.concatenate([getattr(c[0], name)[c[2]:] for c in self.chunks])

        t = cat("t")
        i_gate = cat("i_gate")
        x1 = cat("x1")
        x2 = cat("x2")
        temp = cat("temperature")
        q = integrate_charge(t, i_gate)
        # samples after a reset count charge from the reset time, which is
        # the time of the sample just before
        for r in self.resets:
            if 0 < r < q.size:
                q[r:] -= q[r - 1]
        g = np.array([conductance(a, b, cond) for a, b in zip(x1, temp)])
        steps = np.concatenate([c[1] for c in self.chunks])
        return dict(t=t, v_gate=cat("v_gate"), i_gate=i_gate, q=q, g=g, x1=x1, x2=x2,
                    temperature=temp, step_index=steps, ions=n1 * x1 + n2 * x2)


def _segment(state, models, circuit, v, duration, t0, sampling, first):
    grid = segment_times(t0, duration, sampling.interval)
    if first:
        return run_times(state, models.free_energy, circuit, v, grid, sampling.options), 0
    # extra sample just after the boundary; the boundary sample itself is
    # already the last sample of the previous segment
    edge = min(sampling.edge, 0.5 * (grid[1] - grid[0]))
    grid = np.concatenate([[grid[0], grid[0] + edge], grid[1:]])
    return run_times(state, models.free_energy, circuit, v, grid, sampling.options), 1


def execute(protocol, initial: CellState, models: Models, circuit: CircuitParams,
            sampling: Sampling = Sampling(), read: ReadConfig = ReadConfig(), *,
            meta: dict | None = None) -> RunRecord:
    """Run ``protocol`` from ``initial`` and return the sampled record.

    Any failure inside step ``k`` is re-raised as :class:`ProtocolError`
    carrying ``k``.
    """
    state = initial
    t = 0.0
    rec = _Recorder()
    reads = []
    last_drive = 0
    n_reads = 0

    for index, top in enumerate(protocol):
        try:
            for step in expand(top, read):
                if isinstance(step, SetTemperature):
                    state = replace(state, temperature=float(step.kelvin))
                elif isinstance(step, ResetCharge):
                    state = replace(state, q_accum=0.0)
                    rec.reset_here()
                elif isinstance(step, (Drive, Hold)):
                    v = step.v_gate if isinstance(step, Drive) else 0.0
                    if isinstance(step, Drive) and v != 0:
                        last_drive = 1 if v > 0 else -1
                    (state, seg), start = _segment(state, models, circuit, v, step.duration, t, sampling,
                                                   first=not rec.chunks)
                    rec.add(seg, index, start)
                    t += step.duration
                elif isinstance(step, Read):
                    cfg = step.config or read
                    state, ev, chunks = _read(state, models, circuit, cfg, t, sampling, n_reads, not rec.chunks)
                    for seg, start in chunks:
                        rec.add(seg, index, start)
                    reads.append(ReadEvent(ev[0], ev[1], ev[2], ev[3], last_drive, index))
                    n_reads += 1
                    t += cfg.window
                else:
                    raise ConfigError(f"unknown step {step!r}")
        except ConfigError:
            raise
        except (EcramError, ValueError, ArithmeticError) as exc:
            raise ProtocolError(f"step {index} ({type(top).__name__}) failed at state {state}: {exc}",
                                index, exc) from exc

    if not rec.chunks:
        raise ConfigError("protocol produced no samples; add at least one drive, hold or read")
    cols = rec.build(models.conductance, initial.n1, initial.n2)
    ions = cols.pop("ions")
    return RunRecord(**cols, reads=reads, meta=dict(meta or {}), final_state=state, ions=ions)


def _read(state, models, circuit, cfg: ReadConfig, t0, sampling, index, first):
    """Hold the read bias over one window and average the true conductance."""
    if cfg.perturbative:
        legs = [cfg.amplitude if k % 2 == 0 else -cfg.amplitude for k in range(2 * cfg.n_cycles)]
        durations = [cfg.half_period] * len(legs)
    else:
        legs = [0.0]
        durations = [cfg.window]
    chunks = []
    t = t0
    for v, d in zip(legs, durations):
        (state, seg), start = _segment(state, models, circuit, v, d, t, sampling, first and not chunks)
        chunks.append((seg, start))
        t += d
    ts = np.concatenate([s.t[k:] for s, k in chunks])
    gs = np.array([conductance(a, b, models.conductance)
                   for s, k in chunks for a, b in zip(s.x1[k:], s.temperature[k:])])
    if ts.size > 1 and ts[-1] > ts[0]:
        g_true = float(trapezoid(gs, ts) / (ts[-1] - ts[0]))
    else:
        g_true = float(gs[-1])
    g_read = emulate_read(g_true, cfg, index)
    return state, (t, g_read, g_true, cfg.sigma_of_mean(g_true)), chunks


def scenario(name: str):
    """Canned setup reproducing one figure; see :mod:`ecramsim.config`."""
    from .config import load_scenario

    return load_scenario(name)

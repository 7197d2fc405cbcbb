"""Channel conductance as a function of vacancy content and temperature.

The local law is affine in composition and thermally activated:

    G = aspect * g_ref * exp(-(ea_el / k) * (1/T - 1/t_ref_el)) * (c0 + c1 * x)

Because the law is affine, applying it to the mean of a composition profile
is the same as averaging it over parallel conducting strips.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import K_B_EV
from .errors import DomainError

__all__ = [
    "ConductanceModel",
    "ReadConfig",
    "activation_for_ratio",
    "conductance",
    "emulate_read",
    "read_samples",
]


@dataclass(frozen=True)
class ConductanceModel:
    g_ref: float
    t_ref_el: float
    ea_el: float
    c0: float = 0.0
    c1: float = 1.0
    aspect: float = 1.0

    def __post_init__(self):
        if not self.g_ref > 0:
            raise DomainError(f"g_ref must be positive, got {self.g_ref}")
        if not self.t_ref_el > 0:
            raise DomainError(f"t_ref_el must be positive, got {self.t_ref_el}")
        if not self.c1 > 0:
            raise DomainError(f"c1 must be positive, got {self.c1}")
        if not self.aspect > 0:
            raise DomainError(f"aspect must be positive, got {self.aspect}")

    def thermal_factor(self, temperature: float) -> float:
        if not temperature > 0:
            raise DomainError(f"temperature must be positive, got {temperature}")
        return math.exp(-(self.ea_el / K_B_EV) * (1.0 / temperature - 1.0 / self.t_ref_el))

    @classmethod
    def calibrated(cls, target: float, x: float, temperature: float, *, ea_el: float, c0: float = 0.0,
                   c1: float = 1.0, aspect: float = 1.0, t_ref_el: float | None = None) -> "ConductanceModel":
        """Choose g_ref so that composition ``x`` at ``temperature`` reads ``target`` siemens."""
        t_ref_el = temperature if t_ref_el is None else t_ref_el
        probe = cls(1.0, t_ref_el, ea_el, c0, c1, aspect)
        unit = conductance(x, temperature, probe)
        if not unit > 0:
            raise DomainError("calibration point has non-positive conductance")
        return cls(target / unit, t_ref_el, ea_el, c0, c1, aspect)


def conductance(x, temperature: float, model: ConductanceModel):
    """Conductance in siemens for mean channel composition ``x`` (scalar or array)."""
    scale = model.aspect * model.g_ref * model.thermal_factor(temperature)
    if np.isscalar(x):
        if not 0.0 <= x < 1.0:
            raise DomainError(f"composition must lie in [0, 1), got {x}")
        return scale * (model.c0 + model.c1 * x)
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0.0) | (arr >= 1.0)):
        raise DomainError("composition must lie in [0, 1)")
    return scale * (model.c0 + model.c1 * arr)


def activation_for_ratio(ratio: float, t_low: float, t_high: float) -> float:
    """Electronic activation energy giving G(t_low) / G(t_high) == ratio."""
    if not (ratio > 0 and t_low > 0 and t_high > 0) or t_low == t_high:
        raise DomainError("need positive ratio and two distinct positive temperatures")
    return -K_B_EV * math.log(ratio) / (1.0 / t_low - 1.0 / t_high)


@dataclass(frozen=True)
class ReadConfig:
    """Alternating-polarity read: +amplitude, -amplitude, repeated n_cycles times."""

    amplitude: float = 0.01
    half_period: float = 30.0
    n_cycles: int = 2
    noise_sigma: float = 0.0
    seed: int = 0
    sample_rate: float = 1.0
    perturbative: bool = False

    def __post_init__(self):
        if not self.amplitude > 0:
            raise DomainError(f"read amplitude must be positive, got {self.amplitude}")
        if not self.half_period > 0:
            raise DomainError(f"half_period must be positive, got {self.half_period}")
        if self.n_cycles < 1:
            raise DomainError(f"n_cycles must be at least 1, got {self.n_cycles}")
        if self.noise_sigma < 0:
            raise DomainError(f"noise_sigma must be non-negative, got {self.noise_sigma}")
        if not self.sample_rate > 0:
            raise DomainError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def window(self) -> float:
        return 2.0 * self.half_period * self.n_cycles

    @property
    def n_samples(self) -> int:
        return max(2, int(round(self.window * self.sample_rate)))

    def sigma_of_mean(self, g: float) -> float:
        return self.noise_sigma * abs(g) / math.sqrt(self.n_samples)


def read_samples(g: float, cfg: ReadConfig, index: int = 0) -> np.ndarray:
    """Instantaneous |I| / amplitude samples across one read window."""
    n = cfg.n_samples
    times = (np.arange(n) + 0.5) / cfg.sample_rate
    polarity = np.where((times // cfg.half_period) % 2 == 0, 1.0, -1.0)
    current = polarity * cfg.amplitude * g
    if cfg.noise_sigma > 0:
        rng = np.random.default_rng([cfg.seed, index])
        current = current * (1.0 + cfg.noise_sigma * rng.standard_normal(n))
    return np.abs(current) / cfg.amplitude


def emulate_read(g: float, cfg: ReadConfig, index: int = 0) -> float:
    """Average absolute read current over the window divided by the amplitude.

    Noise-free reads of an ohmic channel return ``g`` exactly.  ``index``
    selects an independent noise stream for the same seed.
    """
    if cfg.noise_sigma == 0:
        return float(g)
    return float(np.mean(read_samples(g, cfg, index)))

"""Free-energy models for the electrode material.

Compositions ``x`` are site fractions in (0, 1); energies are in eV per
site (free energy) or eV per ion (chemical potential).  The regular-solution
model

    g(x) = mu0*x + omega*x*(1-x) + kT*[x ln x + (1-x) ln(1-x)]
    mu(x) = dg/dx = mu0 + kT ln(x/(1-x)) + omega*(1-2x)

phase-separates when ``omega > 2kT``.  Lumped electrodes use the convex hull
of ``g`` (flat ``mu`` across the miscibility gap); the phase-field module
uses the raw, non-convex ``mu``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .constants import K_B_EV
from .errors import ConvergenceFailure, DomainError


class SolutionKind(str, enum.Enum):
    IDEAL = "ideal"
    REGULAR = "regular"


@dataclass(frozen=True)
class FreeEnergyModel:
    """Thermodynamic description of one electrode material.

    Parameters
    ----------
    kind : SolutionKind or str
        ``"ideal"`` or ``"regular"``.
    mu0 : float
        Reference chemical potential, eV per ion.
    omega : float
        Regular-solution interaction parameter, eV per ion.  Ignored (treated
        as zero) for ideal solutions.
    kappa : float
        Gradient-energy coefficient, eV * (grid length)^2 per ion.  Only the
        phase-field module reads it.
    """

    kind: SolutionKind = SolutionKind.REGULAR
    mu0: float = 0.0
    omega: float = 0.0
    kappa: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SolutionKind(self.kind))
        if self.omega < 0:
            raise DomainError(f"omega must be >= 0, got {self.omega}")
        if self.kappa < 0:
            raise DomainError(f"kappa must be >= 0, got {self.kappa}")

    @property
    def interaction(self) -> float:
        """Omega actually used in the formulas (0 for ideal solutions)."""
        return 0.0 if self.kind is SolutionKind.IDEAL else float(self.omega)

    @classmethod
    def ideal(cls, mu0=0.0, kappa=0.0):
        return cls(SolutionKind.IDEAL, mu0, 0.0, kappa)

    @classmethod
    def regular_kT(cls, omega_over_kT, temperature, mu0=0.0, kappa=0.0):
        """Regular solution with omega given in units of kT at ``temperature``."""
        return cls(SolutionKind.REGULAR, mu0, omega_over_kT * K_B_EV * temperature, kappa)


@dataclass(frozen=True)
class MiscibilityGap:
    x_alpha: float
    x_beta: float
    mu_plateau: float
    spinodal_lo: float
    spinodal_hi: float

    def contains(self, x) -> bool:
        return self.x_alpha <= x <= self.x_beta


def thermal_energy(temperature: float) -> float:
    """kT in eV."""
    _check_temperature(temperature)
    return K_B_EV * temperature


def _check_temperature(temperature):
    if not temperature > 0:
        raise DomainError(f"temperature must be > 0 K, got {temperature}")


def _check_fraction(x):
    if np.ndim(x) == 0:
        if not 0.0 < x < 1.0:
            raise DomainError(f"composition must lie in (0, 1), got {x}")
        return float(x)
    arr = np.asarray(x, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        bad = arr[~((arr > 0.0) & (arr < 1.0))]
        raise DomainError(f"composition must lie in (0, 1), got {bad[:5]}")
    return arr


def chemical_potential(model: FreeEnergyModel, x, temperature):
    """Raw chemical potential mu(x), eV per ion.  Accepts scalars or arrays."""
    _check_temperature(temperature)
    x = _check_fraction(x)
    kT = K_B_EV * temperature
    if isinstance(x, float):
        return model.mu0 + kT * math.log(x / (1.0 - x)) + model.interaction * (1.0 - 2.0 * x)
    return model.mu0 + kT * np.log(x / (1.0 - x)) + model.interaction * (1.0 - 2.0 * x)


def chemical_potential_slope(model: FreeEnergyModel, x, temperature):
    """d(mu)/dx = d2g/dx2."""
    _check_temperature(temperature)
    x = _check_fraction(x)
    return K_B_EV * temperature / (x * (1.0 - x)) - 2.0 * model.interaction


def free_energy_density(model: FreeEnergyModel, x, temperature):
    """Free energy of mixing g(x), eV per site."""
    _check_temperature(temperature)
    x = _check_fraction(x)
    kT = K_B_EV * temperature
    if isinstance(x, float):
        entropy = x * math.log(x) + (1.0 - x) * math.log1p(-x)
    else:
        entropy = x * np.log(x) + (1.0 - x) * np.log1p(-x)
    return model.mu0 * x + model.interaction * x * (1.0 - x) + kT * entropy


def spinodal(model: FreeEnergyModel, temperature):
    """Roots of d2g/dx2 = 0 as ``(lo, hi)``, or ``None`` if g is convex.

    For the regular solution these satisfy x(1-x) = kT/(2*omega).  At the
    critical point omega = 2kT the pair degenerates to (0.5, 0.5).
    """
    kT = thermal_energy(temperature)
    omega = model.interaction
    if omega <= 0.0:
        return None
    disc = 1.0 - 2.0 * kT / omega
    # tolerate round-off right at the critical point
    if disc < 0.0:
        if disc > -1e-14:
            disc = 0.0
        else:
            return None
    root = math.sqrt(disc)
    return 0.5 * (1.0 - root), 0.5 * (1.0 + root)


def _softplus(u):
    # ln(1 + e^u) without overflow
    return max(u, 0.0) + math.log1p(math.exp(-abs(u)))


def _logit_terms(model, u, kT):
    """x, mu, g and dmu/du evaluated from the logit u = ln(x/(1-x)).

    Working in logits keeps both x and 1-x at full relative precision, which
    matters for strongly interacting models whose binodals sit within
    1e-9 of the composition limits.
    """
    x = _expit(u)
    x_one_minus_x = _expit(u) * _expit(-u)
    omega = model.interaction
    mu = model.mu0 + kT * u + omega * (_expit(-u) - x)
    ln_one_minus_x = -_softplus(u)
    g = model.mu0 * x + omega * x_one_minus_x + kT * (x * u + ln_one_minus_x)
    dmu_du = kT - 2.0 * omega * x_one_minus_x
    return x, mu, g, dmu_du


def _logit(x):
    return math.log(x / (1.0 - x))


def _expit(u):
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def refine_tangent(model, a0, b0, temperature, tol=1e-12, max_iter=100):
    """Newton solve of the two-point tangency conditions from a starting pair.

    Solves mu(a) = mu(b) and g(b) - g(a) = mu(a)*(b - a).  Unknowns are the
    logits of both compositions so iterates never leave (0, 1).  Returns
    ``(x_alpha, x_beta, mu_plateau)``.
    """
    _check_temperature(temperature)
    kT = K_B_EV * temperature
    u, v = _logit(a0), _logit(b0)
    limit = 2.0 + abs(u) + abs(v)

    def residual(u, v):
        a, mu_a, g_a, _ = _logit_terms(model, u, kT)
        b, mu_b, g_b, _ = _logit_terms(model, v, kT)
        # b - a computed from the complements keeps precision when both are near 1
        width = _expit(-u) - _expit(-v) if a > 0.5 else b - a
        return mu_a - mu_b, (g_b - g_a) - mu_a * width

    best = math.inf
    polish = 0
    for _ in range(max_iter):
        f1, f2 = residual(u, v)
        res = max(abs(f1), abs(f2))
        if res <= tol:
            polish += 1
        if res <= tol and (polish > 1 or res == 0.0):
            a, mu_a, _, _ = _logit_terms(model, u, kT)
            b, mu_b, _, _ = _logit_terms(model, v, kT)
            return a, b, 0.5 * (mu_a + mu_b)
        best = min(best, res)
        a, mu_a, _, ka = _logit_terms(model, u, kT)
        b, mu_b, _, kb = _logit_terms(model, v, kT)
        width = b - a
        # d(mu)/du and d(x)/du = x(1-x); dF2/da = -mu'(a)(b-a)
        j11, j12 = ka, -kb
        j21, j22 = -ka * width, (mu_b - mu_a) * b * (1.0 - b)
        det = j11 * j22 - j12 * j21
        if det == 0.0 or not math.isfinite(det):
            break
        du = (f1 * j22 - f2 * j12) / det
        dv = (j11 * f2 - j21 * f1) / det
        lam = 1.0
        scale = max(abs(du), abs(dv))
        if scale > limit:
            lam = limit / scale
        while lam > 1e-8:
            un, vn = u - lam * du, v - lam * dv
            if un < vn:
                g1, g2 = residual(un, vn)
                if max(abs(g1), abs(g2)) < res or res < 1e3 * tol:
                    break
            lam *= 0.5
        u, v = u - lam * du, v - lam * dv
    raise ConvergenceFailure(
        f"common tangent did not converge: best residual {best:.3e} eV after "
        f"{max_iter} iterations (kT={kT:.6g} eV)"
    )


def tangency_residuals(model, gap: "MiscibilityGap", temperature):
    """(mu(a) - p, mu(b) - p, g(b) - g(a) - p*(b - a)) for a solved gap."""
    a, b, p = gap.x_alpha, gap.x_beta, gap.mu_plateau
    mu_a = chemical_potential(model, a, temperature)
    mu_b = chemical_potential(model, b, temperature)
    g_a = free_energy_density(model, a, temperature)
    g_b = free_energy_density(model, b, temperature)
    return mu_a - p, mu_b - p, (g_b - g_a) - p * (b - a)


def _hull_bridges(xs, gs, curvature):
    """Lower convex hull of sampled (x, g); yield index pairs it bridges
    over a region where g is actually concave."""
    hull = []
    for i in range(len(xs)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            cross = (xs[i1] - xs[i0]) * (gs[i] - gs[i0]) - (gs[i1] - gs[i0]) * (xs[i] - xs[i0])
            if cross <= 0.0:
                hull.pop()
            else:
                break
        hull.append(i)
    for i0, i1 in zip(hull, hull[1:]):
        if i1 - i0 > 1 and np.any(curvature[i0:i1 + 1] < 0.0):
            yield i0, i1


def miscibility_gaps(model: FreeEnergyModel, temperature, tol=1e-12, n_grid=4001) -> tuple:
    """All miscibility gaps of ``model`` at ``temperature``, lowest first.

    Candidate gaps come from the convex hull of g sampled on a logit-spaced
    grid; each is then polished by :func:`refine_tangent`.  The regular
    solution has at most one gap.
    """
    _check_temperature(temperature)
    spin = spinodal(model, temperature)
    if spin is None or spin[0] >= spin[1]:
        return ()
    # logit grid reaches exponentially dilute binodals of strongly
    # interacting systems
    span = max(40.0, 4.0 * model.interaction / (K_B_EV * temperature))
    u = np.linspace(-span, span, n_grid)
    xs = 1.0 / (1.0 + np.exp(-u))
    keep = (xs > 0.0) & (xs < 1.0)
    xs = np.unique(xs[keep])
    gs = free_energy_density(model, xs, temperature)
    curvature = chemical_potential_slope(model, xs, temperature)
    gaps = []
    for i0, i1 in _hull_bridges(xs, gs, curvature):
        a, b, mu_p = refine_tangent(model, xs[i0], xs[i1], temperature, tol=tol)
        if not 0.0 < a < b < 1.0:
            raise DomainError(
                f"binodal ({a!r}, {b!r}) is not representable in double precision"
            )
        inside = [s for s in spin if a < s < b]
        lo, hi = (min(inside), max(inside)) if inside else (a, b)
        gaps.append(MiscibilityGap(a, b, mu_p, lo, hi))
    return tuple(gaps)


def common_tangent(model: FreeEnergyModel, temperature, tol=1e-12):
    """The (single) miscibility gap, or ``None`` when g is convex."""
    gaps = miscibility_gaps(model, temperature, tol=tol)
    return gaps[0] if gaps else None


def _as_gaps(gap) -> tuple:
    if gap is None:
        return ()
    if isinstance(gap, MiscibilityGap):
        return (gap,)
    return tuple(gap)


def _smooth_min(a, b, width):
    # compact quadratic smooth-min; non-decreasing in both arguments
    d = abs(a - b)
    if d >= width:
        return min(a, b)
    return min(a, b) - (width - d) ** 2 / (4.0 * width)


def _convexified_scalar(model, gaps, x, temperature, smoothing):
    mu = chemical_potential(model, x, temperature)
    for gap in gaps:
        p = gap.mu_plateau
        if smoothing > 0.0:
            # below the lower spinodal the hull is min(mu, p); above the upper
            # one it is max(mu, p)
            if x <= gap.spinodal_lo and (x >= gap.x_alpha or p - mu < smoothing):
                return _smooth_min(mu, p, smoothing)
            if x >= gap.spinodal_hi and (x <= gap.x_beta or mu - p < smoothing):
                return -_smooth_min(-mu, -p, smoothing)
        if gap.x_alpha <= x <= gap.x_beta:
            return p
    return mu


def convexified_mu(model: FreeEnergyModel, gap, x, temperature, smoothing: float = 0.0):
    """Chemical potential of the convex hull of g (the lumped-electrode law).

    Equal to the raw ``mu`` outside every gap and to the plateau value inside.
    ``gap`` may be ``None``, one :class:`MiscibilityGap`, or a sequence of
    them.  ``smoothing`` (eV) rounds the plateau corners with a monotone
    smooth-min of width ``smoothing``; 0 keeps the exact corners.  The width
    must stay below the height of the raw-mu hump at the spinodal.
    """
    _check_temperature(temperature)
    gaps = _as_gaps(gap)
    if smoothing < 0.0:
        raise DomainError("smoothing must be >= 0")
    if np.ndim(x) == 0:
        return _convexified_scalar(model, gaps, _check_fraction(x), temperature, smoothing)
    arr = _check_fraction(x)
    return np.array([_convexified_scalar(model, gaps, float(v), temperature, smoothing) for v in arr.ravel()]).reshape(arr.shape)


def convexified_free_energy(model: FreeEnergyModel, gap, x, temperature):
    """Convex hull of g: the common-tangent chord across each gap."""
    gaps = _as_gaps(gap)
    g = free_energy_density(model, x, temperature)
    if np.ndim(x) == 0:
        for gp in gaps:
            if gp.x_alpha <= x <= gp.x_beta:
                g_a = free_energy_density(model, gp.x_alpha, temperature)
                return g_a + gp.mu_plateau * (x - gp.x_alpha)
        return g
    g = np.array(g, dtype=float)
    xa = np.asarray(x, dtype=float)
    for gp in gaps:
        inside = (xa >= gp.x_alpha) & (xa <= gp.x_beta)
        g_a = free_energy_density(model, gp.x_alpha, temperature)
        g[inside] = g_a + gp.mu_plateau * (xa[inside] - gp.x_alpha)
    return g


def symmetric_binodal_condition(x, omega_over_kT):
    """ln(x/(1-x)) + (omega/kT)(1-2x); zero at the binodal of a symmetric
    regular solution with mu0 = 0."""
    return math.log(x / (1.0 - x)) + omega_over_kT * (1.0 - 2.0 * x)


def sample_monotone(values: Iterable[float]) -> bool:
    """True if a sampled sequence never decreases."""
    arr = np.asarray(list(values), dtype=float)
    return bool(np.all(np.diff(arr) >= 0.0))


__all__: Sequence[str] = (
    "SolutionKind",
    "FreeEnergyModel",
    "MiscibilityGap",
    "thermal_energy",
    "chemical_potential",
    "chemical_potential_slope",
    "free_energy_density",
    "spinodal",
    "refine_tangent",
    "tangency_residuals",
    "miscibility_gaps",
    "common_tangent",
    "convexified_mu",
    "convexified_free_energy",
    "symmetric_binodal_condition",
)

"""One-dimensional Cahn-Hilliard model of the channel film.

The film is a line of ``N`` finite-volume cells.  Ions move down the gradient
of the local chemical potential

    mu_i = g'(x_i) - kappa * lap(x)_i

with face mobility ``M * xbar * (1 - xbar)``.  Mass enters or leaves only
through the left face (the electrolyte side); the right face is sealed.
Two time steppers are provided.  The explicit one is forward Euler under a
declared step bound, see :func:`stable_dt`.  The semi-implicit one treats
the gradient term and a stabilizing linear term implicitly with the
mobility lagged, which keeps it energy stable for any ``dt``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from .constants import E_CHARGE
from .errors import DomainError, StabilityFailure
from .thermo import FreeEnergyModel, MiscibilityGap, chemical_potential, free_energy_density, thermal_energy

SCHEMES = ("explicit", "semi-implicit")

__all__ = [
    "DomainStats",
    "FieldProfile",
    "PhaseFieldRun",
    "boundary_flux_from_current",
    "chemical_potential_field",
    "domain_statistics",
    "read_profile_csv",
    "simulate",
    "stable_dt",
    "step_ch",
    "total_free_energy",
    "write_diagnostics_csv",
    "write_profile_csv",
]


@dataclass(frozen=True, eq=False)
class FieldProfile:
    x: np.ndarray
    dx: float = 1.0
    mobility: float = 1.0

    def __post_init__(self):
        arr = np.array(self.x, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise DomainError("profile must be a 1-D array of at least two cells")
        if not (self.dx > 0 and self.mobility > 0):
            raise DomainError("dx and mobility must be positive")
        if not np.all((arr > 0.0) & (arr < 1.0)):
            raise DomainError("every cell must lie strictly inside (0, 1)")
        arr.setflags(write=False)
        object.__setattr__(self, "x", arr)

    def __len__(self):
        return self.x.size

    @property
    def mass(self) -> float:
        return float(np.sum(self.x) * self.dx)

    @property
    def mean(self) -> float:
        return float(np.mean(self.x))

    @property
    def positions(self) -> np.ndarray:
        return (np.arange(self.x.size) + 0.5) * self.dx

    def with_values(self, x) -> "FieldProfile":
        return FieldProfile(x, self.dx, self.mobility)

    @classmethod
    def uniform(cls, n: int, x0: float, *, dx: float = 1.0, mobility: float = 1.0,
                noise: float = 0.0, seed: int | None = None) -> "FieldProfile":
        """Uniform composition ``x0`` plus optional seeded Gaussian noise."""
        x = np.full(n, float(x0))
        if noise > 0:
            x = x + noise * np.random.default_rng(seed).standard_normal(n)
        return cls(x, dx, mobility)


def _laplacian(x, dx):
    padded = np.pad(x, 1, mode="edge")
    return (padded[:-2] - 2.0 * x + padded[2:]) / dx**2


def chemical_potential_field(profile: FieldProfile, model: FreeEnergyModel, temperature: float) -> np.ndarray:
    """Raw local chemical potential minus the gradient-energy term, eV per ion."""
    return chemical_potential(model, profile.x, temperature) - model.kappa * _laplacian(profile.x, profile.dx)


def stable_dt(profile: FieldProfile, model: FreeEnergyModel, temperature: float) -> float:
    """Largest explicit step accepted by :func:`step_ch`.

    Linearizing about any composition, the fastest decaying grid mode has
    rate at most ``4 D / dx^2 + 4 M kappa / dx^4`` where
    ``D = M max(kT, |kT - omega/2|)`` bounds ``M x(1-x) g''``.  The step
    keeps that rate times ``dt`` at or below one, where forward Euler is a
    contraction along every mode and the discrete energy cannot rise.
    """
    kT = thermal_energy(temperature)
    m = profile.mobility
    dx = profile.dx
    diff = m * max(kT, abs(kT - model.interaction / 2.0))
    rate = 4.0 * diff / dx**2 + 4.0 * m * model.kappa / dx**4
    return 1.0 / rate


def _fluxes(profile, model, temperature, boundary_flux):
    x = profile.x
    mu = chemical_potential_field(profile, model, temperature)
    xbar = 0.5 * (x[1:] + x[:-1])
    face = profile.mobility * xbar * (1.0 - xbar)
    flux = np.empty(x.size + 1)
    flux[0] = boundary_flux
    flux[1:-1] = -face * np.diff(mu) / profile.dx
    flux[-1] = 0.0
    return flux


def _tridiag(face, dx):
    """Sub, main and super diagonals of the Neumann operator -div(face * grad)."""
    n = face.size + 1
    lo = np.zeros(n)
    up = np.zeros(n)
    main = np.zeros(n)
    lo[1:] = -face
    up[:-1] = -face
    main[:-1] += face
    main[1:] += face
    return lo / dx**2, main / dx**2, up / dx**2


def _tri_matvec(a, v):
    lo, main, up = a
    out = main * v
    out[1:] += lo[1:] * v[:-1]
    out[:-1] += up[:-1] * v[1:]
    return out


def _tri_product_banded(a, b):
    """Banded (2, 2) storage of the product of two tridiagonal matrices."""
    la, da, ua = a
    lb, db, ub = b
    n = da.size
    ab = np.zeros((5, n))
    # ab[2 + i - j, j] holds C[i, j]
    ab[0, 2:] = ua[:-2] * ub[1:-1]
    ab[1, 1:] = da[:-1] * ub[:-1] + ua[:-1] * db[1:]
    ab[2] = da * db
    ab[2, 1:] += la[1:] * ub[:-1]
    ab[2, :-1] += ua[:-1] * lb[1:]
    ab[3, :-1] = la[1:] * db[:-1] + da[1:] * lb[1:]
    ab[4, :-2] = la[2:] * lb[1:-1]
    return ab


def _semi_implicit(profile, model, temperature, dt, boundary_flux, stabilization):
    x = profile.x
    dx = profile.dx
    kT = thermal_energy(temperature)
    if stabilization is None:
        stabilization = 0.5 * float(np.max(np.abs(kT / (x * (1.0 - x)) - 2.0 * model.interaction)))
    xbar = 0.5 * (x[1:] + x[:-1])
    a_m = _tridiag(profile.mobility * xbar * (1.0 - xbar), dx)
    lap = _tridiag(np.ones(x.size - 1), dx)
    ab = model.kappa * _tri_product_banded(a_m, lap)
    ab[1, 1:] += stabilization * a_m[2][:-1]
    ab[2] += stabilization * a_m[1]
    ab[3, :-1] += stabilization * a_m[0][1:]
    ab *= dt
    ab[2] += 1.0
    rhs = x - dt * _tri_matvec(a_m, chemical_potential(model, x, temperature) - stabilization * x)
    rhs[0] += dt * boundary_flux / dx
    return solve_banded((2, 2), ab, rhs)


def step_ch(profile: FieldProfile, model: FreeEnergyModel, temperature: float, dt: float,
            boundary_flux: float = 0.0, *, scheme: str = "explicit",
            stabilization: float | None = None) -> FieldProfile:
    """Advance one step.

    ``boundary_flux`` is the rate of mass entry (sum of x times dx per unit
    time) through the left face; positive adds ions.  The explicit scheme
    rejects ``dt`` above :func:`stable_dt`.  The semi-implicit scheme takes
    any positive ``dt``; ``stabilization`` defaults to half the largest
    ``|g''|`` on the current profile.
    """
    if scheme == "explicit":
        limit = stable_dt(profile, model, temperature)
        if not 0 < dt <= limit:
            raise StabilityFailure(f"dt={dt:.6g} outside (0, {limit:.6g}]", dt=dt)
        flux = _fluxes(profile, model, temperature, boundary_flux)
        x = profile.x - dt * np.diff(flux) / profile.dx
    elif scheme == "semi-implicit":
        if not dt > 0:
            raise StabilityFailure(f"dt={dt:.6g} must be positive", dt=dt)
        x = _semi_implicit(profile, model, temperature, dt, boundary_flux, stabilization)
    else:
        raise DomainError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if not np.all((x > 0.0) & (x < 1.0)):
        raise StabilityFailure(f"a cell left (0, 1) with dt={dt:.6g}", dt=dt)
    return profile.with_values(x)


def total_free_energy(profile: FieldProfile, model: FreeEnergyModel, temperature: float) -> float:
    x = profile.x
    bulk = free_energy_density(model, x, temperature)
    grad = np.diff(x) / profile.dx
    return float((np.sum(bulk) + 0.5 * model.kappa * np.sum(grad**2)) * profile.dx)


@dataclass(frozen=True)
class DomainStats:
    domain_count: int
    phase_means: tuple
    interface_count: int
    cores: tuple = ()


def domain_statistics(profile: FieldProfile, gap: MiscibilityGap) -> DomainStats:
    """Label each cell by its nearer binodal branch and count runs.

    A domain's composition is its core value: the minimum over an ion-poor
    run or the maximum over an ion-rich one, where interface tails are
    smallest.  ``phase_means`` averages those cores per phase (``None`` for
    an absent phase) and ``cores`` lists them in spatial order.
    """
    x = profile.x
    beta = np.abs(x - gap.x_beta) < np.abs(x - gap.x_alpha)
    edges = np.flatnonzero(beta[1:] != beta[:-1]) + 1
    cores = []
    for run in np.split(np.arange(x.size), edges):
        cores.append(float(x[run].max() if beta[run[0]] else x[run].min()))
    lo = [c for c in cores if abs(c - gap.x_alpha) <= abs(c - gap.x_beta)]
    hi = [c for c in cores if abs(c - gap.x_alpha) > abs(c - gap.x_beta)]
    means = tuple(float(np.mean(v)) if v else None for v in (lo, hi))
    return DomainStats(len(cores), means, len(cores) - 1, tuple(cores))


def boundary_flux_from_current(current: float, z: int, sites_per_cell: float, dx: float = 1.0) -> float:
    """Convert a gate current in amperes into the mass rate used by :func:`step_ch`."""
    if not (sites_per_cell > 0 and z > 0):
        raise DomainError("sites_per_cell and z must be positive")
    return current / (z * E_CHARGE) / sites_per_cell * dx


@dataclass
class PhaseFieldRun:
    profile: FieldProfile
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    interface_count: np.ndarray
    snapshots: list = field(default_factory=list)


def simulate(profile: FieldProfile, model: FreeEnergyModel, temperature: float, dt: float, n_steps: int,
             *, sample_every: int = 100, gap: MiscibilityGap | None = None, boundary_flux: float = 0.0,
             scheme: str = "explicit", keep_snapshots: bool = False, t0: float = 0.0) -> PhaseFieldRun:
    """Run ``n_steps`` steps, recording diagnostics every ``sample_every`` steps."""
    if n_steps < 0 or sample_every < 1:
        raise DomainError("n_steps must be non-negative and sample_every positive")
    rows = []
    snaps = []

    def record(k, p):
        count = domain_statistics(p, gap).interface_count if gap is not None else -1
        rows.append((t0 + k * dt, p.mass, total_free_energy(p, model, temperature), count))
        if keep_snapshots:
            snaps.append((t0 + k * dt, p))

    record(0, profile)
    for k in range(1, n_steps + 1):
        profile = step_ch(profile, model, temperature, dt, boundary_flux, scheme=scheme)
        if k % sample_every == 0 or k == n_steps:
            record(k, profile)
    t, m, e, c = (np.array(col) for col in zip(*rows))
    return PhaseFieldRun(profile, t, m, e, c.astype(int), snaps)


def write_profile_csv(path, profile: FieldProfile) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_index", "position", "x"])
        for i, (pos, val) in enumerate(zip(profile.positions, profile.x)):
            w.writerow([i, repr(float(pos)), repr(float(val))])


def read_profile_csv(path, *, mobility: float = 1.0) -> FieldProfile:
    data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
    pos = data[:, 1]
    dx = float(pos[1] - pos[0]) if len(pos) > 1 else 1.0
    return FieldProfile(data[:, 2], dx, mobility)


def write_diagnostics_csv(path, run: PhaseFieldRun) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mass", "energy", "interface_count"])
        for row in zip(run.times, run.mass, run.energy, run.interface_count):
            w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])

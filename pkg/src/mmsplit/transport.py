"""Exact quadratic optimal transport on a finite metric measure space.

The cost is ``d^2`` for plans and ``d^2 / 2`` for potentials, so that the
dual identity reads ``sum phi dmu + sum phi^c dnu = cost / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from ._simplex import transport_simplex
from .space import default_geo_ceiling, geodesic_points
from .validation import check_field, check_index, check_same_space

MASS_TOL = 1e-12
MARGINAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ProbMeasure:
    """Probability measure ``rho * m`` given by its density against the weights."""

    space: object
    density: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        rho = check_field(self.space, self.density, "density").copy()
        if np.any(rho < 0):
            raise ValueError("density must be nonnegative")
        total = float(rho @ self.space.weight)
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"density integrates to {total!r}, expected 1")
        rho.setflags(write=False)
        object.__setattr__(self, "density", rho)

    @classmethod
    def from_masses(cls, space, masses, info=None):
        """Normalise nonnegative point masses to a probability measure."""
        masses = check_field(space, masses, "masses")
        if np.any(masses < 0) or masses.sum() <= 0:
            raise ValueError("masses must be nonnegative with positive total")
        masses = masses / masses.sum()
        return cls(space, masses / space.weight, info or {})

    @classmethod
    def dirac(cls, space, i):
        i = check_index(space, i)
        masses = np.zeros(space.n)
        masses[i] = 1.0
        return cls.from_masses(space, masses)

    @classmethod
    def uniform(cls, space, indices=None):
        """Normalised restriction of the reference measure to ``indices``."""
        masses = np.zeros(space.n)
        idx = np.arange(space.n) if indices is None else np.asarray(indices, dtype=int)
        if idx.size == 0:
            raise ValueError("uniform measure needs at least one point")
        masses[idx] = space.weight[idx]
        return cls.from_masses(space, masses)

    @property
    def masses(self) -> np.ndarray:
        return self.density * self.space.weight

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.density > 0)


@dataclass(frozen=True, eq=False)
class Coupling:
    """Transport plan between two measures; ``matrix[x, y]`` is the mass sent x -> y."""

    matrix: np.ndarray
    marginals: tuple
    degenerate: bool = False

    def __post_init__(self):
        mu, nu = self.marginals
        check_same_space(mu, nu)
        P = np.asarray(self.matrix, dtype=float)
        if P.shape != (mu.space.n, mu.space.n) or np.any(P < 0):
            raise ValueError("coupling must be a nonnegative n x n matrix")
        if np.abs(P.sum(1) - mu.masses).max() > MARGINAL_TOL or np.abs(P.sum(0) - nu.masses).max() > MARGINAL_TOL:
            raise ValueError("coupling marginals do not match")
        P = P.copy()
        P.setflags(write=False)
        object.__setattr__(self, "matrix", P)

    @property
    def space(self):
        return self.marginals[0].space

    @cached_property
    def cost(self) -> float:
        return float((self.matrix * self.space.dist**2).sum())

    def triplets(self):
        """Sparse (i, j, mass) rows of the plan."""
        i, j = np.nonzero(self.matrix)
        return [(int(a), int(b), float(self.matrix[a, b])) for a, b in zip(i, j)]


@dataclass(frozen=True, eq=False)
class Potential:
    """Kantorovich pair ``(phi, phi^c)`` with its slack matrix."""

    space: object
    phi: np.ndarray
    phic: np.ndarray

    @cached_property
    def slack(self) -> np.ndarray:
        return self.space.half_sq - self.phi[:, None] - self.phic[None, :]

    def superdifferential(self, tol=1e-9):
        """Pairs ``(x, y)`` with slack at most ``tol``."""
        return np.argwhere(self.slack <= tol)


def c_transform(space, phi) -> np.ndarray:
    """``phi^c(y) = min_x d(x, y)^2 / 2 - phi(x)``."""
    phi = check_field(space, phi, "phi")
    return (space.half_sq - phi[:, None]).min(axis=0)


class CConcavity(NamedTuple):
    is_c_concave: bool
    superdifferential: np.ndarray
    defect: float


def c_concavity_check(space, phi, tol=1e-9) -> CConcavity:
    """Compare ``phi^cc`` with ``phi`` and list the zero-slack pairs of ``(phi, phi^c)``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    phi = check_field(space, phi, "phi")
    phic = c_transform(space, phi)
    phicc = c_transform(space, phic)
    defect = float(np.abs(phicc - phi).max())
    pot = Potential(space, phi, phic)
    return CConcavity(defect <= tol, pot.superdifferential(tol), defect)


class TransportResult(NamedTuple):
    value: float
    plan: Coupling
    potential: Potential


def w2_solve(mu: ProbMeasure, nu: ProbMeasure) -> TransportResult:
    """Exact W2 distance, an optimal plan and a c-concave Kantorovich potential."""
    check_same_space(mu, nu)
    space = mu.space
    si, sj = mu.support, nu.support
    a, b = mu.masses[si], nu.masses[sj]
    b = b * (a.sum() / b.sum())
    C = space.half_sq[np.ix_(si, sj)]
    res = transport_simplex(a, b, C)
    P = np.zeros((space.n, space.n))
    P[np.ix_(si, sj)] = res.flow
    plan = Coupling(P, (mu, nu), degenerate=res.alternative_optimum)
    # extend the column duals to a c-concave phi on the whole space
    phi = (space.half_sq[:, sj] - res.v[None, :]).min(axis=1)
    phic = c_transform(space, phi)
    shift = phi.min()
    potential = Potential(space, phi - shift, phic + shift)
    return TransportResult(float(np.sqrt(max(plan.cost, 0.0))), plan, potential)


def duality_gap(plan: Coupling, potential: Potential) -> float:
    mu, nu = plan.marginals
    return float(potential.phi @ mu.masses + potential.phic @ nu.masses - 0.5 * plan.cost)


class Routes(NamedTuple):
    src: np.ndarray
    dst: np.ndarray
    mid: np.ndarray
    mass: np.ndarray
    deviation: np.ndarray
    t: float


def interpolation_routes(plan: Coupling, t, steps=None) -> Routes:
    """Where each coupled pair sends its mass at time ``t``."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if steps is not None:
        if int(steps) < 1:
            raise ValueError("steps must be >= 1")
        t = round(t * steps) / steps
    src, dst = np.nonzero(plan.matrix)
    mass = plan.matrix[src, dst]
    if t == 0.0:
        return Routes(src, dst, src.copy(), mass, np.zeros(len(src)), t)
    if t == 1.0:
        return Routes(src, dst, dst.copy(), mass, np.zeros(len(src)), t)
    mid, dev = geodesic_points(plan.space, src, dst, t)
    return Routes(src, dst, mid, mass, dev, t)


def displacement_interpolation(plan: Coupling, t, steps=None, ceiling=None) -> ProbMeasure:
    """Time-``t`` marginal of the plan lifted along discrete geodesics.

    With ``steps`` the time is snapped to the grid ``k / steps``. The result's
    ``info`` records the largest routing deviation and whether it exceeds the
    geodesic ceiling of the space.
    """
    mu, nu = plan.marginals
    t = float(t)
    if t == 0.0:
        return mu
    if t == 1.0:
        return nu
    r = interpolation_routes(plan, t, steps)
    space = plan.space
    masses = np.bincount(r.mid, weights=r.mass, minlength=space.n)
    ceiling = default_geo_ceiling(space) if ceiling is None else float(ceiling)
    max_dev = float(r.deviation.max()) if r.deviation.size else 0.0
    info = {"t": r.t, "max_deviation": max_dev, "ceiling": ceiling, "over_tolerance": max_dev > ceiling}
    return ProbMeasure.from_masses(space, masses, info)

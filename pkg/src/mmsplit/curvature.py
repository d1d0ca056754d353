"""Entropy functionals and curvature-dimension checks along Wasserstein geodesics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .transport import ProbMeasure, displacement_interpolation, interpolation_routes, w2_solve
from .validation import check_dimension, check_time_grid

DEFAULT_T_GRID = tuple(np.linspace(0.0, 1.0, 11))
CD_TOL_FLOOR = 1e-9
# Relative slack for the pointwise density comparison after smoothing over
# two lattice cells; snapping routes to lattice points moves about one cell
# of mass into or out of each smoothing window.
DENSITY_RTOL = 0.25


def entropy(mu: ProbMeasure, N) -> float:
    """Renyi-type entropy ``U_N`` of ``mu`` against the reference weights.

    ``N = 1`` gives the mass of the support, ``N = inf`` the Boltzmann
    entropy and intermediate ``N`` the sum ``-sum rho^(1 - 1/N) w``. Measures
    on a finite full-support space have no singular part, so no extra term
    appears.
    """
    N = check_dimension(N)
    rho, w = mu.density, mu.space.weight
    pos = rho > 0
    if N == 1:
        return float(w[pos].sum())
    if math.isinf(N):
        return float((rho[pos] * np.log(rho[pos]) * w[pos]).sum())
    return float(-(rho[pos] ** (1.0 - 1.0 / N) * w[pos]).sum())


def _fmt_n(N):
    return "inf" if math.isinf(N) else f"{N:g}"


@dataclass
class EntropyReport:
    """Entropy along an interpolation and its convexity defect per dimension parameter."""

    N_values: list
    t_grid: np.ndarray
    values: np.ndarray
    defects: np.ndarray
    verdicts: list
    cd_tol: float
    w2: float
    degenerate: bool
    over_tolerance: bool
    max_deviation: float
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v == "pass" for v in self.verdicts)

    @property
    def verdict(self) -> str:
        for v in ("fail", "inconclusive"):
            if v in self.verdicts:
                return v
        return "pass"

    def to_dict(self):
        return {
            "N_values": [_fmt_n(N) for N in self.N_values],
            "t_grid": [float(t) for t in self.t_grid],
            "values": [[float(x) for x in row] for row in self.values],
            "defects": [float(d) for d in self.defects],
            "verdicts": list(self.verdicts),
            "cd_tol": self.cd_tol,
            "w2": self.w2,
            "degenerate": self.degenerate,
            "over_tolerance": self.over_tolerance,
            "max_deviation": self.max_deviation,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        """Plot data: one row per time, one column per dimension parameter."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + [f"U_{_fmt_n(N)}" for N in self.N_values])
        for k, t in enumerate(self.t_grid):
            writer.writerow([repr(float(t))] + [repr(float(row[k])) for row in self.values])
        return buf.getvalue()


def default_cd_tol(space, support, max_deviation=0.0) -> float:
    """Three lattice cells times the diameter of the union of the supports."""
    h = space.h if space.h is not None else max_deviation
    support = np.asarray(support)
    diam = float(space.dist[np.ix_(support, support)].max()) if support.size else 0.0
    return max(3.0 * h * diam, CD_TOL_FLOOR)


def cd_convexity_check(mu0, mu1, N, t_grid=DEFAULT_T_GRID, steps=None, N_values=None, cd_tol=None, ceiling=None):
    """Convexity of ``U_N'`` along the displacement interpolation of an optimal plan.

    The defect for each ``N'`` is ``max_t U(mu_t) - (1-t) U(mu_0) - t U(mu_1)``.
    A verdict passes iff the defect is at most ``cd_tol``; over-tolerance
    geodesic routing makes every verdict inconclusive.
    """
    N = check_dimension(N)
    ts = check_time_grid(t_grid)
    if N_values is None:
        N_values = [N] if math.isinf(N) else [N, 2 * N, math.inf]
    N_values = [check_dimension(x) for x in N_values]
    value, plan, _ = w2_solve(mu0, mu1)
    space = mu0.space
    curve = [displacement_interpolation(plan, t, steps, ceiling) for t in ts]
    max_dev = max((m.info.get("max_deviation", 0.0) for m in curve), default=0.0)
    over = any(m.info.get("over_tolerance", False) for m in curve)
    if cd_tol is None:
        support = np.union1d(mu0.support, mu1.support)
        cd_tol = default_cd_tol(space, support, max_dev)
    values = np.array([[entropy(m, Np) for m in curve] for Np in N_values])
    defects = []
    verdicts = []
    for Np, row in zip(N_values, values):
        u0, u1 = entropy(mu0, Np), entropy(mu1, Np)
        d = float(np.max(row - (u0 + ts * (u1 - u0))))
        defects.append(d)
        if over:
            verdicts.append("inconclusive")
        else:
            verdicts.append("pass" if d <= cd_tol else "fail")
    return EntropyReport(
        N_values=N_values,
        t_grid=ts,
        values=values,
        defects=np.array(defects),
        verdicts=verdicts,
        cd_tol=float(cd_tol),
        w2=value,
        degenerate=plan.degenerate,
        over_tolerance=over,
        max_deviation=max_dev,
    )


@dataclass
class DensityBoundReport:
    """Pointwise density comparison along an interpolation."""

    N: float
    t_grid: np.ndarray
    violation: np.ndarray
    concentration: np.ndarray
    tol: float

    @property
    def max_violation(self) -> float:
        return float(self.violation.max()) if self.violation.size else 0.0

    @property
    def max_concentration(self) -> float:
        return float(self.concentration.max()) if self.concentration.size else 0.0

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def _smoothed_density(space, masses, radius):
    if radius <= 0:
        return masses / space.weight
    # average over the support only, so the edges of a support are not diluted
    near = space.dist <= radius * (1 + 1e-9)
    occupied = np.where(masses > 0, space.weight, 0.0)
    out = np.zeros(space.n)
    vol = near @ occupied
    np.divide(near @ masses, vol, out=out, where=vol > 0)
    return out


def density_bound_check(plan, N, t_grid=DEFAULT_T_GRID, steps=None, min_mass=1e-6, radius=0.0, tol=DENSITY_RTOL):
    """Compare ``rho_t(gamma_t)^(-1/N)`` with the interpolated endpoint values.

    For every coupled pair ``(x, y)`` with mass at least ``min_mass`` the
    violation is ``(1-t) rho_0(x)^(-1/N) + t rho_1(y)^(-1/N) - rho_t(z)^(-1/N)``
    at the routed point ``z``, relative to the first two terms. Densities may be averaged over balls of
    ``radius`` first, which removes the collisions produced by snapping
    routes to lattice points. ``concentration`` records
    ``max rho_t * (1-t)^N / max rho_0`` per time.
    """
    N = check_dimension(N, allow_inf=False)
    ts = check_time_grid(t_grid)
    space = plan.space
    mu, nu = plan.marginals
    rho0 = _smoothed_density(space, mu.masses, radius)
    rho1 = _smoothed_density(space, nu.masses, radius)
    viol, conc = [], []
    for t in ts:
        r = interpolation_routes(plan, t, steps)
        masses = np.bincount(r.mid, weights=r.mass, minlength=space.n)
        rhot = _smoothed_density(space, masses, radius)
        keep = r.mass >= min_mass
        lhs = rhot[r.mid[keep]] ** (-1.0 / N)
        rhs = (1 - r.t) * rho0[r.src[keep]] ** (-1.0 / N) + r.t * rho1[r.dst[keep]] ** (-1.0 / N)
        viol.append(float(((rhs - lhs) / rhs).max()) if keep.any() else 0.0)
        conc.append(float((masses / space.weight).max() * (1 - r.t) ** N / mu.density.max()))
    return DensityBoundReport(N, ts, np.array(viol), np.array(conc), float(tol))


def product_density_check(space, base_mu0, base_mu1, N, factors=(0.5, 1.0, 2.0), t_grid=DEFAULT_T_GRID, radius=None):
    """Density comparison for product measures on a product grid.

    ``base_mu0`` and ``base_mu1`` are point masses on the base factor. For
    every pair of fibre lengths ``alpha, beta`` in ``factors`` the base
    measures are multiplied by the normalised fibre measure on an interval of
    that length, centred in the fibre, and :func:`density_bound_check` runs on
    the optimal plan between the two products. Returns ``{(alpha, beta): report}``.
    """
    nb, nt = space.meta["factor_sizes"]
    t_coords = np.asarray(space.meta["fiber_coords"])
    centre = 0.5 * (t_coords[0] + t_coords[-1])
    h = space.meta.get("h", space.resolution())
    radius = 2 * h if radius is None else radius
    base_mu0 = np.asarray(base_mu0, dtype=float)
    base_mu1 = np.asarray(base_mu1, dtype=float)
    out = {}
    for alpha in factors:
        for beta in factors:
            def lift(base, length):
                fib = (np.abs(t_coords - centre) <= length / 2 + 1e-9 * h).astype(float)
                if fib.sum() == 0 or t_coords[-1] - t_coords[0] < length - 1e-9:
                    raise ValueError(f"fibre too short for an interval of length {length}")
                return ProbMeasure.from_masses(space, np.kron(base, fib))

            mu0, mu1 = lift(base_mu0, alpha), lift(base_mu1, beta)
            _, plan, _ = w2_solve(mu0, mu1)
            out[(alpha, beta)] = density_bound_check(plan, N, t_grid, radius=radius)
    return out


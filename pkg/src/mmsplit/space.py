"""Finite metric measure spaces: data model, generators, validation and geodesics.

A space is a distance matrix together with strictly positive point weights.
Lattice generators also record their spacing ``h``, the topological dimension
and integer lattice coordinates, which the calculus module uses to build
stencil graphs.
"""

from __future__ import annotations

import math
from dataclasses import InitVar, dataclass, field
from functools import cached_property
from typing import Any, NamedTuple

import numpy as np

from .validation import InvalidSpaceError, check_dimension, check_index, check_positive

# Collinear lattice triples violate the triangle inequality by an ulp or two
# once distances are rounded by sqrt; the check allows this rounding and no more.
TRIANGLE_ULPS = 4.0
# Ball membership slack: lattice radii such as 3 * 0.1 land one ulp outside.
BALL_RTOL = 1e-9


class Violation(NamedTuple):
    kind: str
    index: tuple
    detail: str


@dataclass(frozen=True, eq=False)
class MetricMeasureSpace:
    """Finite point set with distance matrix ``dist`` and positive ``weight``.

    Instances are immutable: the arrays are stored read-only. Construction
    validates the metric axioms unless ``validate=False`` is passed, which the
    built-in generators do because their distances are valid by construction.
    """

    dist: np.ndarray
    weight: np.ndarray
    points: np.ndarray | None = None
    label: str = ""
    meta: dict = field(default_factory=dict)
    validate: InitVar[bool] = True

    def __post_init__(self, validate):
        dist = np.array(self.dist, dtype=float)
        weight = np.array(self.weight, dtype=float)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise InvalidSpaceError(f"dist must be a square matrix, got shape {dist.shape}")
        if weight.shape != (dist.shape[0],):
            raise InvalidSpaceError(
                f"weight must have length {dist.shape[0]}, got shape {weight.shape}"
            )
        dist.setflags(write=False)
        weight.setflags(write=False)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "weight", weight)
        if self.points is not None:
            pts = np.array(self.points, dtype=float)
            if pts.ndim == 1:
                pts = pts[:, None]
            pts.setflags(write=False)
            object.__setattr__(self, "points", pts)
        if validate:
            report = validate_space(self)
            if report:
                head = "; ".join(f"{v.kind} at {v.index}" for v in report[:5])
                raise InvalidSpaceError(
                    f"invalid metric measure space ({len(report)} violations): {head}", report
                )

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def h(self) -> float | None:
        """Lattice spacing when the space came from a generator, else None."""
        return self.meta.get("h")

    @property
    def dim(self) -> int | None:
        return self.meta.get("dim")

    @cached_property
    def half_sq(self) -> np.ndarray:
        """The transport cost matrix d^2/2."""
        out = 0.5 * self.dist**2
        out.setflags(write=False)
        return out

    @cached_property
    def diameter(self) -> float:
        return float(self.dist.max()) if self.n else 0.0

    @property
    def total_mass(self) -> float:
        return float(self.weight.sum())

    def resolution(self) -> float:
        """Spacing ``h`` if known, otherwise the smallest positive distance."""
        if self.h is not None:
            return float(self.h)
        pos = self.dist[self.dist > 0]
        return float(pos.min()) if pos.size else 0.0

    def __repr__(self):
        name = self.label or "space"
        return f"MetricMeasureSpace({name!r}, n={self.n})"


def validate_space(space, weight=None) -> list[Violation]:
    """List every violated metric measure axiom.

    Accepts a :class:`MetricMeasureSpace` or a raw distance matrix (plus an
    optional weight vector). Symmetry and the zero diagonal are compared
    bit-exactly; the triangle inequality allows ``TRIANGLE_ULPS`` units of
    rounding in the sum. Pairs are reported once, with ``i < j``.
    """
    if isinstance(space, MetricMeasureSpace):
        D, w = space.dist, space.weight
    else:
        D = np.asarray(space, dtype=float)
        w = None if weight is None else np.asarray(weight, dtype=float)
    report: list[Violation] = []
    n = D.shape[0]
    if not np.all(np.isfinite(D)):
        for i, j in np.argwhere(~np.isfinite(D)):
            report.append(Violation("non-finite", (int(i), int(j)), "distance is not finite"))
        return report
    for i in np.flatnonzero(np.diag(D) != 0):
        report.append(Violation("diagonal", (int(i),), f"d({i},{i}) = {float(D[i, i])!r}"))
    for i, j in np.argwhere(D < 0):
        if i < j or D[j, i] >= 0:
            report.append(Violation("negative", (int(i), int(j)), f"d = {float(D[i, j])!r}"))
    for i, j in np.argwhere(D != D.T):
        if i < j:
            report.append(
                Violation("symmetry", (int(i), int(j)), f"d({i},{j})={float(D[i, j])!r} != d({j},{i})={float(D[j, i])!r}")
            )
    for i, j in np.argwhere(np.triu(D == 0, k=1)):
        report.append(Violation("separation", (int(i), int(j)), "distinct points at distance 0"))
    rel = 1.0 + TRIANGLE_ULPS * np.finfo(float).eps
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    for k in range(n):
        via = (D[:, k, None] + D[None, k, :]) * rel
        bad = np.argwhere((D > via) & upper)
        for i, j in bad:
            report.append(
                Violation(
                    "triangle",
                    (int(i), int(j), k),
                    f"d({i},{j})={D[i, j]:.12g} > d({i},{k})+d({k},{j})={D[i, k] + D[k, j]:.12g}",
                )
            )
    if w is not None:
        if w.shape != (n,):
            report.append(Violation("weight-shape", (), f"expected {n} weights, got {w.shape}"))
        else:
            for i in np.flatnonzero(~(w > 0) | ~np.isfinite(w)):
                report.append(Violation("weight", (int(i),), f"weight {float(w[i])!r} is not positive"))
    return report


# ----------------------------------------------------------------------------
# generators


def _check_count(count, name):
    if count < 2:
        raise ValueError(f"{name} must have at least 2 points per axis, got {count}")
    return int(count)


def _steps(extent, h, name):
    if not np.isfinite(extent) or extent <= 0:
        raise ValueError(f"{name} must have a positive extent, got {extent}")
    k = extent / h
    kr = round(k)
    if abs(k - kr) > 1e-6 * max(1.0, k):
        raise ValueError(f"{name} extent {extent} is not a multiple of the spacing {h}")
    return _check_count(kr + 1, name)


def _lattice_index(shape):
    return np.indices(shape).reshape(len(shape), -1).T


def euclidean_grid(dims, h=1.0, label=None) -> MetricMeasureSpace:
    """Regular lattice with ``dims[k]`` points along axis ``k`` and Euclidean distance."""
    h = check_positive(h, "spacing h")
    dims = [_check_count(int(c), f"axis {k}") for k, c in enumerate(np.atleast_1d(dims))]
    idx = _lattice_index(dims)
    pts = idx * h
    diff = pts[:, None, :] - pts[None, :, :]
    D = np.sqrt((diff**2).sum(-1))
    w = np.full(len(pts), h ** len(dims))
    spec = {"kind": "euclidean_grid", "dims": list(dims), "h": h}
    meta = {
        "generator": spec,
        "h": h,
        "dim": len(dims),
        "shape": tuple(dims),
        "axis_h": (h,) * len(dims),
        "lattice_index": idx,
        "periodic": (False,) * len(dims),
        "norm": "euclidean",
    }
    return MetricMeasureSpace(D, w, pts, label or f"grid{dims}", meta, validate=False)


def normed_plane(p, side, h=1.0, label=None) -> MetricMeasureSpace:
    """Square lattice ``[0, side]^2`` carrying the l^p distance, ``p`` in [1, inf]."""
    p = float(p)
    if not (p >= 1):
        raise ValueError(f"p must lie in [1, inf], got {p}")
    h = check_positive(h, "spacing h")
    count = _steps(float(side), h, "side")
    idx = _lattice_index((count, count))
    pts = idx * h
    diff = np.abs(pts[:, None, :] - pts[None, :, :])
    if np.isinf(p):
        D = diff.max(-1)
    elif p == 1:
        D = diff.sum(-1)
    else:
        D = (diff**p).sum(-1) ** (1.0 / p)
    w = np.full(len(pts), h * h)
    spec = {"kind": "normed_plane", "p": "inf" if np.isinf(p) else p, "side": float(side), "h": h}
    meta = {
        "generator": spec,
        "h": h,
        "dim": 2,
        "shape": (count, count),
        "axis_h": (h, h),
        "lattice_index": idx,
        "periodic": (False, False),
        "norm": f"l{'inf' if np.isinf(p) else p:g}" if not np.isinf(p) else "linf",
    }
    return MetricMeasureSpace(D, w, pts, label or f"l{spec['p']}-plane", meta, validate=False)


def cylinder(radius, length, h=1.0, label=None) -> MetricMeasureSpace:
    """Flat cylinder: circle of ``radius`` times ``[0, length]`` with intrinsic distance."""
    radius = check_positive(radius, "radius")
    h = check_positive(h, "spacing h")
    m = max(3, int(round(2 * math.pi * radius / h)))
    nz = _steps(float(length), h, "length")
    idx = _lattice_index((m, nz))
    ang = idx[:, 0] * (2 * math.pi / m)
    z = idx[:, 1] * h
    dang = np.abs(ang[:, None] - ang[None, :])
    dang = np.minimum(dang, 2 * math.pi - dang)
    D = np.sqrt((radius * dang) ** 2 + (z[:, None] - z[None, :]) ** 2)
    arc = 2 * math.pi * radius / m
    w = np.full(len(z), arc * h)
    pts = np.stack([radius * np.cos(ang), radius * np.sin(ang), z], axis=1)
    spec = {"kind": "cylinder", "radius": radius, "length": float(length), "h": h}
    meta = {
        "generator": spec,
        "h": h,
        "dim": 2,
        "shape": (m, nz),
        "axis_h": (arc, h),
        "lattice_index": idx,
        "periodic": (True, False),
        "norm": "euclidean",
    }
    return MetricMeasureSpace(D, w, pts, label or "cylinder", meta, validate=False)


def cone(angle, radius, h=1.0, label=None) -> MetricMeasureSpace:
    """Polar lattice on the flat cone of total angle ``angle`` (0 < angle <= 2 pi).

    Distances are intrinsic: two points whose angular separation on the
    unrolled sector is below pi are joined by a straight segment, otherwise
    the geodesic runs through the apex.
    """
    angle = check_positive(angle, "cone angle")
    if angle > 2 * math.pi + 1e-12:
        raise ValueError("cone angle must not exceed 2*pi")
    radius = check_positive(radius, "radius")
    h = check_positive(h, "spacing h")
    rings = _steps(radius, h, "radius") - 1
    m = max(3, int(round(angle * radius / h)))
    r = np.concatenate([[0.0], np.repeat(np.arange(1, rings + 1) * h, m)])
    a = np.concatenate([[0.0], np.tile(np.arange(m) * (angle / m), rings)])
    da = np.abs(a[:, None] - a[None, :])
    da = np.minimum(da, angle - da)
    straight = np.sqrt(np.maximum(r[:, None] ** 2 + r[None, :] ** 2 - 2 * np.outer(r, r) * np.cos(da), 0.0))
    D = np.where(da < math.pi, straight, r[:, None] + r[None, :])
    np.fill_diagonal(D, 0.0)
    D = np.minimum(D, D.T)
    w = np.concatenate([[angle * h * h / 8], r[1:] * (angle / m) * h])
    pts = np.stack([r * np.cos(a), r * np.sin(a)], axis=1)
    spec = {"kind": "cone", "angle": angle, "radius": radius, "h": h}
    meta = {"generator": spec, "h": h, "dim": 2, "polar": (r, a), "norm": "cone"}
    return MetricMeasureSpace(D, w, pts, label or "cone", meta, validate=False)


def product(base, interval, h=1.0, label=None) -> MetricMeasureSpace:
    """Product of ``base`` with a lattice on ``interval`` under the Pythagorean distance.

    Points are ordered base-major: index ``i * nt + k`` is base point ``i`` at
    the ``k``-th interval node.
    """
    if isinstance(base, dict):
        base = generate_space(base)
    h = check_positive(h, "spacing h")
    a, b = (float(v) for v in interval)
    nt = _steps(b - a, h, "interval")
    t = a + np.arange(nt) * h
    nb = base.n
    D = np.sqrt(np.kron(base.dist**2, np.ones((nt, nt))) + np.tile((t[:, None] - t[None, :]) ** 2, (nb, nb)))
    w = np.kron(base.weight, np.full(nt, h))
    bpts = base.points if base.points is not None else np.arange(nb, dtype=float)[:, None]
    pts = np.concatenate([np.repeat(bpts, nt, axis=0), np.tile(t, nb)[:, None]], axis=1)
    spec = {"kind": "product", "base": base.meta.get("generator"), "interval": [a, b], "h": h}
    meta = {
        "generator": spec,
        "h": h,
        "dim": (base.dim or 0) + 1,
        "factor_sizes": (nb, nt),
        "fiber_coords": t,
        "norm": "product",
    }
    if "lattice_index" in base.meta:
        bidx = base.meta["lattice_index"]
        meta.update(
            shape=tuple(base.meta["shape"]) + (nt,),
            axis_h=tuple(base.meta["axis_h"]) + (h,),
            lattice_index=np.concatenate([np.repeat(bidx, nt, axis=0), np.tile(np.arange(nt), nb)[:, None]], axis=1),
            periodic=tuple(base.meta["periodic"]) + (False,),
        )
        if base.h is not None and not math.isclose(base.h, h):
            meta["h"] = max(base.h, h)
    return MetricMeasureSpace(D, w, pts, label or f"{base.label}x[{a:g},{b:g}]", meta, validate=False)


GENERATORS = {
    "euclidean_grid": lambda s: euclidean_grid(s["dims"], s.get("h", 1.0)),
    "normed_plane": lambda s: normed_plane(
        math.inf if str(s["p"]).lower() in ("inf", "infinity") else float(s["p"]), s["side"], s.get("h", 1.0)
    ),
    "cylinder": lambda s: cylinder(s["radius"], s["length"], s.get("h", 1.0)),
    "product": lambda s: product(s["base"], s["interval"], s.get("h", 1.0)),
    "cone": lambda s: cone(s["angle"], s["radius"], s.get("h", 1.0)),
}


def generate_space(spec: dict[str, Any]) -> MetricMeasureSpace:
    """Build a space from a generator descriptor such as ``{"kind": "cone", ...}``."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("generator descriptor must be a mapping with a 'kind' key")
    try:
        build = GENERATORS[spec["kind"]]
    except KeyError:
        raise ValueError(f"unknown generator {spec['kind']!r}; expected one of {sorted(GENERATORS)}") from None
    try:
        return build(spec)
    except KeyError as exc:
        raise ValueError(f"generator {spec['kind']!r} is missing parameter {exc.args[0]!r}") from None


# ----------------------------------------------------------------------------
# geodesics


@dataclass(frozen=True)
class DiscreteGeodesic:
    indices: np.ndarray
    times: np.ndarray
    endpoints: tuple[int, int]
    speed: float
    max_deviation: float
    geo_tol: float
    ceiling: float
    over_tolerance: bool


def default_geo_ceiling(space) -> float:
    """Largest tolerated absolute deviation of a discrete geodesic."""
    return float(space.h) if space.h is not None else 1e-9


def geodesic_points(space, src, dst, t):
    """Best lattice approximation of the time-``t`` point on each geodesic ``src -> dst``.

    ``t`` may be a scalar or one time per pair. Returns the chosen indices and
    their scores ``max(|d(x,z) - t d|, |d(z,y) - (1-t) d|)``; ties go to the
    smallest index.
    """
    src = np.atleast_1d(np.asarray(src, dtype=int))
    dst = np.atleast_1d(np.asarray(dst, dtype=int))
    t = np.broadcast_to(np.asarray(t, dtype=float), src.shape)
    D = space.dist
    d = D[src, dst]
    score = np.maximum(
        np.abs(D[src, :] - (t * d)[:, None]),
        np.abs(D[:, dst].T - ((1 - t) * d)[:, None]),
    )
    z = np.argmin(score, axis=1)
    return z, score[np.arange(len(z)), z]


def discrete_geodesic(space, i, j, steps, ceiling=None) -> DiscreteGeodesic:
    """Chain of ``steps + 1`` points approximating the constant-speed geodesic from i to j."""
    i = check_index(space, i, "i")
    j = check_index(space, j, "j")
    steps = int(steps)
    if steps < 1:
        raise ValueError("steps must be >= 1")
    times = np.arange(steps + 1) / steps
    z, _ = geodesic_points(space, np.full(steps + 1, i), np.full(steps + 1, j), times)
    z[0], z[-1] = i, j
    d = float(space.dist[i, j])
    dev = np.abs(space.dist[np.ix_(z, z)] - np.abs(times[:, None] - times[None, :]) * d)
    max_dev = float(dev.max())
    ceiling = default_geo_ceiling(space) if ceiling is None else float(ceiling)
    return DiscreteGeodesic(
        indices=z,
        times=times,
        endpoints=(i, j),
        speed=d,
        max_deviation=max_dev,
        geo_tol=max_dev / d if d > 0 else 0.0,
        ceiling=ceiling,
        over_tolerance=max_dev > ceiling,
    )


# ----------------------------------------------------------------------------
# volume growth


class BGRow(NamedTuple):
    r: float
    R: float
    ratio: float
    bound: float
    passed: bool


def ball_mass(space, x0, r) -> float:
    x0 = check_index(space, x0, "x0")
    return float(space.weight[space.dist[x0] <= r * (1 + BALL_RTOL)].sum())


def bishop_gromov_profile(space, x0, radii, N, bg_tol=0.1, pairs="consecutive") -> list[BGRow]:
    """Volume ratios ``m(B_r)/m(B_R)`` against the comparison bound ``(r/R)^N``.

    ``pairs="consecutive"`` compares neighbouring radii, ``"all"`` every
    ``r <= R`` combination. A row passes iff ratio >= bound - bg_tol.
    """
    N = check_dimension(N, allow_inf=False)
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0 or np.any(radii <= 0):
        raise ValueError("radii must be a non-empty list of positive numbers")
    if np.any(np.diff(radii) < 0):
        raise ValueError("radii must be increasing")
    masses = [ball_mass(space, x0, r) for r in radii]
    if pairs == "consecutive":
        combos = [(k, k + 1) for k in range(len(radii) - 1)] or [(0, 0)]
    elif pairs == "all":
        combos = [(a, b) for a in range(len(radii)) for b in range(a, len(radii))]
    else:
        raise ValueError("pairs must be 'consecutive' or 'all'")
    rows = []
    for a, b in combos:
        ratio = masses[a] / masses[b]
        bound = float((radii[a] / radii[b]) ** N)
        rows.append(BGRow(float(radii[a]), float(radii[b]), ratio, bound, bool(ratio >= bound - bg_tol)))
    return rows

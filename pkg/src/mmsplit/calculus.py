"""Discrete Sobolev calculus on neighbour graphs.

Two gradient notions live side by side. Slopes (largest difference
quotients over a neighbourhood) drive the local Lipschitz constants, the
perturbative carre du champ and the Bakry-Emery check. A conductance-weighted
quadratic form drives the Laplacian, the Dirichlet energy and the heat flow.
Conductances are calibrated so that ``E(f) ~ 1/2 int |grad f|^2 dm`` for
smooth ``f``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import threading
import weakref
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .transport import ProbMeasure
from .validation import check_field, check_index

EIGH_MAX_N = 2000
EPS_MIN = 1e-12
DEFAULT_EPS = (1e-2, 1e-3, 1e-4)
GAUSSIAN_REFERENCE = 0.2
# Crank-Nicolson step in units of h^2; stiff boundary modes ring at larger steps.
CN_STEP = 0.25


@dataclass(frozen=True, eq=False)
class NeighborGraph:
    """Undirected graph on the points of a space, one entry per unordered edge."""

    space: object
    src: np.ndarray
    dst: np.ndarray
    conductance: np.ndarray
    rule: str
    interior: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.space.n

    @cached_property
    def length(self) -> np.ndarray:
        return self.space.dist[self.src, self.dst]

    @cached_property
    def degree(self) -> np.ndarray:
        return np.bincount(np.concatenate([self.src, self.dst]), minlength=self.n)

    @cached_property
    def laplacian_matrix(self):
        """Sparse ``L`` with ``(L g)[x] = sum_y c_xy (g(y) - g(x))``."""
        n = self.n
        c = self.conductance
        A = sparse.coo_matrix((np.concatenate([c, c]), (np.concatenate([self.src, self.dst]), np.concatenate([self.dst, self.src]))), shape=(n, n)).tocsr()
        return (A - sparse.diags(np.asarray(A.sum(axis=1)).ravel())).tocsr()

    def adjacency(self, x):
        """Neighbours of ``x`` with edge lengths."""
        mask_s, mask_d = self.src == x, self.dst == x
        nbrs = np.concatenate([self.dst[mask_s], self.src[mask_d]])
        return [(int(y), float(self.space.dist[x, y])) for y in nbrs]

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        A = sparse.coo_matrix((np.ones(len(self.src)), (self.src, self.dst)), shape=(self.n, self.n))
        return connected_components(A, directed=False)[0] == 1


_GRAPH_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
_EIGEN_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
_CACHE_LOCK = threading.Lock()


def _lattice_offsets(D, rule):
    if rule == "axis":
        return [tuple(int(k == a) for k in range(D)) for a in range(D)]
    offs = []
    for o in itertools.product((-1, 0, 1), repeat=D):
        # keep one representative of each +/- pair
        nz = [v for v in o if v != 0]
        if nz and nz[0] > 0:
            offs.append(o)
    return offs


def _lattice_edges(meta, offsets):
    idx = np.asarray(meta["lattice_index"])
    shape = np.asarray(meta["shape"])
    periodic = np.asarray(meta["periodic"])
    src, dst, kinds = [], [], []
    for o in offsets:
        tgt = idx + np.asarray(o)
        tgt = np.where(periodic, tgt % shape, tgt)
        ok = np.all((tgt >= 0) & (tgt < shape), axis=1)
        s = np.flatnonzero(ok)
        d = np.ravel_multi_index(tuple(tgt[ok].T), tuple(shape))
        src.append(s)
        dst.append(d)
        kinds.append(np.full(len(s), sum(abs(v) for v in o)))
    src, dst, kinds = np.concatenate(src), np.concatenate(dst), np.concatenate(kinds)
    keep = src != dst
    a, b = np.minimum(src[keep], dst[keep]), np.maximum(src[keep], dst[keep])
    pairs, first = np.unique(np.stack([a, b], 1), axis=0, return_index=True)
    return pairs[:, 0], pairs[:, 1], kinds[keep][first]


def _lattice_interior(meta, depth):
    idx = np.asarray(meta["lattice_index"])
    shape = np.asarray(meta["shape"])
    periodic = np.asarray(meta["periodic"])
    ok = (idx >= depth) & (idx <= shape - 1 - depth)
    return np.all(ok | periodic, axis=1)


def _generic_conductance(space, src, dst, dim):
    n = space.n
    d2 = space.dist[src, dst] ** 2
    tot = np.bincount(src, weights=d2, minlength=n) + np.bincount(dst, weights=d2, minlength=n)
    kappa = np.zeros(n)
    np.divide(2.0 * dim * space.weight, tot, out=kappa, where=tot > 0)
    return 0.5 * (kappa[src] + kappa[dst])


def estimate_dimension(space, radius) -> float:
    """Median doubling exponent ``log2(m(B_2r) / m(B_r))``."""
    D, w = space.dist, space.weight
    small = (D <= radius * (1 + 1e-9)) @ w
    big = (D <= 2 * radius * (1 + 1e-9)) @ w
    return float(np.median(np.log2(big / small)))


def neighbor_graph(space, rule=None, radius=None, k=None, dim=None, depth=1) -> NeighborGraph:
    """Build (and cache) a neighbour graph.

    ``rule`` is ``"axis"`` (lattice axis stencil), ``"box"`` (all lattice
    offsets in ``{-1, 0, 1}^D``, the 8-neighbour stencil in the plane),
    ``"radius"`` or ``"knn"``. The default is ``"box"`` on lattice spaces and
    ``"radius"`` elsewhere. Axis edges carry ``w / l^2``; the planar box
    stencil uses the isotropic weights ``2/3`` (axis) and ``1/3`` (diagonal);
    other graphs use ``c_xy = (kappa_x + kappa_y) / 2`` with
    ``kappa_x = 2 dim w_x / sum_y d(x, y)^2``, exact on linear functions for
    symmetric stencils.
    """
    lattice = "lattice_index" in space.meta
    rule = rule or ("box" if lattice else "radius")
    key = (rule, radius, k, dim, depth)
    with _CACHE_LOCK:
        cached = _GRAPH_CACHE.setdefault(space, {}).get(key)
    if cached is not None:
        return cached
    if rule in ("axis", "box"):
        if not lattice:
            raise ValueError(f"rule {rule!r} needs a lattice space")
        D = len(space.meta["shape"])
        src, dst, kinds = _lattice_edges(space.meta, _lattice_offsets(D, rule))
        ell2 = space.dist[src, dst] ** 2
        wbar = 0.5 * (space.weight[src] + space.weight[dst])
        if rule == "axis":
            cond = wbar / ell2
        elif D == 2:
            cond = np.where(kinds == 1, 2.0 / 3.0, 1.0 / 3.0) * wbar / ell2
        else:
            cond = _generic_conductance(space, src, dst, D)
        interior = _lattice_interior(space.meta, depth)
    elif rule in ("radius", "knn"):
        Dm = space.dist
        if rule == "radius":
            if radius is None:
                nn = np.where(np.eye(space.n, dtype=bool), np.inf, Dm).min(axis=1)
                radius = 1.5 * float(nn.max())
            adj = (Dm <= radius * (1 + 1e-9)) & ~np.eye(space.n, dtype=bool)
        else:
            k = int(k or 2 * (space.dim or 1))
            order = np.argsort(Dm, axis=1, kind="stable")[:, 1 : k + 1]
            adj = np.zeros_like(Dm, dtype=bool)
            adj[np.repeat(np.arange(space.n), k), order.ravel()] = True
            adj |= adj.T
        src, dst = np.nonzero(np.triu(adj, 1))
        if dim is None:
            dim = space.dim or estimate_dimension(space, radius or float(Dm[src, dst].max()))
        cond = _generic_conductance(space, src, dst, dim)
        deg = np.bincount(np.concatenate([src, dst]), minlength=space.n)
        interior = deg >= np.median(deg)
    else:
        raise ValueError(f"unknown neighbour rule {rule!r}")
    graph = NeighborGraph(space, src, dst, cond, rule, interior)
    if not graph.is_connected():
        raise ValueError("neighbour graph is disconnected; enlarge the radius or k")
    with _CACHE_LOCK:
        graph = _GRAPH_CACHE[space].setdefault(key, graph)
    return graph


def laplacian_graph(space) -> NeighborGraph:
    """Default carrier of the quadratic form: axis stencil on lattices."""
    return neighbor_graph(space, "axis" if "lattice_index" in space.meta else None)


def interior_mask(space, graph=None) -> np.ndarray:
    return (graph or neighbor_graph(space)).interior


# ----------------------------------------------------------------------------
# slopes and carre du champ


def slope_field(space, f, mode="lip", graph=None) -> np.ndarray:
    """Largest ascending (``lip_plus``), descending (``lip_minus``) or absolute slope."""
    f = check_field(space, f, "f")
    g = graph or neighbor_graph(space)
    q = (f[g.dst] - f[g.src]) / g.length
    up = np.zeros(space.n)
    down = np.zeros(space.n)
    # along src -> dst the ascent is q, along dst -> src it is -q
    np.maximum.at(up, g.src, np.maximum(q, 0.0))
    np.maximum.at(up, g.dst, np.maximum(-q, 0.0))
    np.maximum.at(down, g.src, np.maximum(-q, 0.0))
    np.maximum.at(down, g.dst, np.maximum(q, 0.0))
    if mode == "lip_plus":
        return up
    if mode == "lip_minus":
        return down
    if mode == "lip":
        return np.maximum(up, down)
    raise ValueError(f"unknown slope mode {mode!r}")


def _energy_norm(space, W, mask):
    return float((W[mask] ** 2) @ space.weight[mask])


def hilbert_defect(space, f, g, graph=None, mask=None) -> float:
    """Parallelogram defect of the squared slope norm.

    ``|N(f+g) + N(f-g) - 2 N(f) - 2 N(g)| / (2 N(f) + 2 N(g))`` with
    ``N(u) = sum lip(u)^2 m`` over ``mask`` (default: graph interior). Zero
    for a quadratic norm, one for the sup norm with coordinate probes.
    """
    f = check_field(space, f, "f")
    g = check_field(space, g, "g")
    gr = graph or neighbor_graph(space)
    mask = gr.interior if mask is None else np.asarray(mask, dtype=bool)
    norm = lambda u: _energy_norm(space, slope_field(space, u, "lip", gr), mask)
    nf, ng = norm(f), norm(g)
    denom = 2.0 * (nf + ng)
    if denom == 0:
        return 0.0
    return abs(norm(f + g) + norm(f - g) - denom) / denom


class CarreDuChamp(NamedTuple):
    field: np.ndarray
    hilbert_defect: float
    by_eps: dict


def carre_du_champ(space, f, g, eps_list=DEFAULT_EPS, regime="slope", graph=None) -> CarreDuChamp:
    """Gradient pairing of ``f`` and ``g``.

    ``regime="slope"`` evaluates ``(lip(g+ef)^2 - lip(g-ef)^2) / (4e)`` for
    each ``e`` in ``eps_list``, keeps the value at the smallest ``e`` and
    clamps it by ``lip(f) lip(g)``. ``regime="quadratic"`` returns the
    bilinear form ``(1/2m) sum_y c_xy df dg`` of the graph conductances.
    """
    f = check_field(space, f, "f")
    g = check_field(space, g, "g")
    gr = graph or neighbor_graph(space)
    eps = np.asarray(eps_list, dtype=float)
    if eps.ndim != 1 or eps.size == 0 or np.any(eps < EPS_MIN):
        raise ValueError(f"eps values must be at least {EPS_MIN}")
    if np.any(np.diff(eps) >= 0):
        raise ValueError("eps_list must be strictly decreasing")
    defect = hilbert_defect(space, f, g, gr)
    if regime == "quadratic":
        prod = gr.conductance * (f[gr.dst] - f[gr.src]) * (g[gr.dst] - g[gr.src])
        acc = np.bincount(gr.src, weights=prod, minlength=space.n) + np.bincount(gr.dst, weights=prod, minlength=space.n)
        return CarreDuChamp(acc / (2.0 * space.weight), defect, {})
    if regime != "slope":
        raise ValueError(f"unknown regime {regime!r}")
    by_eps = {}
    for e in eps:
        plus = slope_field(space, g + e * f, "lip", gr)
        minus = slope_field(space, g - e * f, "lip", gr)
        by_eps[float(e)] = (plus**2 - minus**2) / (4.0 * e)
    bound = slope_field(space, f, "lip", gr) * slope_field(space, g, "lip", gr)
    value = np.clip(by_eps[float(eps[-1])], -bound, bound)
    return CarreDuChamp(value, defect, by_eps)


# ----------------------------------------------------------------------------
# Laplacian and energy


def laplacian_measure(space, g, graph=None) -> np.ndarray:
    """Masses ``sum_y c_xy (g(y) - g(x))``; dividing by the weights gives the generator."""
    g = check_field(space, g, "g")
    gr = graph or laplacian_graph(space)
    return gr.laplacian_matrix @ g


def dirichlet_form(space, f, g=None, graph=None) -> float:
    """``E(f, g) = 1/2 sum over edges c_xy (f(y) - f(x)) (g(y) - g(x))``."""
    f = check_field(space, f, "f")
    g = f if g is None else check_field(space, g, "g")
    gr = graph or laplacian_graph(space)
    return 0.5 * float(gr.conductance @ ((f[gr.dst] - f[gr.src]) * (g[gr.dst] - g[gr.src])))


class ComparisonReport(NamedTuple):
    max_excess: float
    rel_excess: float
    n_points: int
    passed: bool
    rtol: float


def laplacian_comparison_check(space, x0, N, inner=None, outer=None, rtol=0.1, graph=None) -> ComparisonReport:
    """Compare ``Lap d(., x0) / m`` with ``N / d`` on an interior annulus.

    ``max_excess`` is ``max(Lap d / m - N / d)`` and ``rel_excess`` the same
    excess divided by ``N / d``; the check passes iff ``rel_excess <= rtol``.
    The annulus defaults to ``3h < d`` out to the nearest non-interior point.
    """
    x0 = check_index(space, x0, "x0")
    gr = graph or laplacian_graph(space)
    d = space.dist[x0]
    lap = laplacian_measure(space, d, gr) / space.weight
    h = space.resolution()
    inner = 3 * h if inner is None else inner
    if outer is None:
        edge = d[~gr.interior]
        outer = float(edge.min()) if edge.size else float(d.max())
    ring = (d > inner) & (d < outer) & gr.interior
    if not ring.any():
        raise ValueError("comparison annulus is empty")
    excess = lap[ring] - N / d[ring]
    rel = excess / (N / d[ring])
    return ComparisonReport(float(excess.max()), float(rel.max()), int(ring.sum()), bool(rel.max() <= rtol), rtol)


def potential_comparison(space, phi, N, graph=None) -> float:
    """Largest interior value of ``Lap phi / m - N``; nonpositive for transport potentials in flat space."""
    gr = graph or laplacian_graph(space)
    lap = laplacian_measure(space, phi, gr) / space.weight
    return float((lap - N)[gr.interior].max())


# ----------------------------------------------------------------------------
# heat flow


class _Spectrum(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray
    sqrt_w: np.ndarray


def _spectrum(space, graph):
    with _CACHE_LOCK:
        spec = _EIGEN_CACHE.get(graph)
    if spec is not None:
        return spec
    s = np.sqrt(space.weight)
    L = graph.laplacian_matrix.toarray()
    S = L / s[:, None] / s[None, :]
    lam, V = np.linalg.eigh(0.5 * (S + S.T))
    spec = _Spectrum(np.minimum(lam, 0.0), V, s)
    with _CACHE_LOCK:
        spec = _EIGEN_CACHE.setdefault(graph, spec)
    return spec


def heat_flow(space, f, t, graph=None, method=None) -> np.ndarray:
    """``exp(t Lap) f`` with ``Lap = W^-1 L``.

    Uses the symmetric eigendecomposition of ``W^-1/2 L W^-1/2`` for up to
    ``EIGH_MAX_N`` points and Crank-Nicolson steps beyond. ``t = 0`` and
    constant ``f`` are returned unchanged.
    """
    f = check_field(space, f, "f")
    t = float(t)
    if not t >= 0:
        raise ValueError("heat flow time must be nonnegative")
    if t == 0 or np.all(f == f[0]):
        return f.copy()
    gr = graph or laplacian_graph(space)
    method = method or ("eigh" if space.n <= EIGH_MAX_N else "crank-nicolson")
    if method == "eigh":
        lam, V, s = _spectrum(space, gr)
        return (V @ (np.exp(t * lam) * (V.T @ (s * f)))) / s
    if method == "crank-nicolson":
        h = space.resolution()
        steps = max(1, math.ceil(t / (CN_STEP * h * h)))
        dt = t / steps
        W = sparse.diags(space.weight)
        L = gr.laplacian_matrix
        lu = splu((W - 0.5 * dt * L).tocsc())
        rhs_op = (W + 0.5 * dt * L).tocsr()
        u = f.copy()
        for _ in range(steps):
            u = lu.solve(rhs_op @ u)
        return u
    raise ValueError(f"unknown heat flow method {method!r}")


@dataclass
class HeatKernel:
    """Heat kernel row ``p_t(x, .)`` and a Gaussian decay fit."""

    x: int
    t: float
    measure: ProbMeasure
    slope: float
    intercept: float
    n_fit: int
    reference: float = GAUSSIAN_REFERENCE
    clipped_mass: float = 0.0

    @property
    def density(self):
        return self.measure.density

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["point", "distance", "density"])
        d = self.measure.space.dist[self.x]
        for y, (dy, p) in enumerate(zip(d, self.density)):
            writer.writerow([y, repr(float(dy)), repr(float(p))])
        return buf.getvalue()


def heat_kernel(space, x, t, graph=None, floor=1e-8) -> HeatKernel:
    """Row ``p_t(x, .)`` as a probability density plus the least-squares slope of
    ``-log p`` against ``d^2 / t`` over ``{p > floor}``."""
    x = check_index(space, x, "x")
    t = float(t)
    if not t > 0:
        raise ValueError("kernel time must be positive")
    e = np.zeros(space.n)
    e[x] = 1.0 / space.weight[x]
    p = heat_flow(space, e, t, graph)
    clipped = float(-(np.minimum(p, 0.0) @ space.weight))
    p = np.maximum(p, 0.0)
    total = float(p @ space.weight)
    mu = ProbMeasure(space, p / total, {"t": t, "source": x})
    keep = mu.density > floor
    X = space.dist[x, keep] ** 2 / t
    Y = -np.log(mu.density[keep])
    if keep.sum() >= 2 and np.ptp(X) > 0:
        slope, intercept = np.polyfit(X, Y, 1)
    else:
        slope, intercept = float("nan"), float("nan")
    return HeatKernel(x, t, mu, float(slope), float(intercept), int(keep.sum()), clipped_mass=clipped)


class BakryEmeryReport(NamedTuple):
    t_list: np.ndarray
    violations: np.ndarray
    tol: float
    passed: bool


def bakry_emery_check(space, f, t_list, tol=None, graph=None, heat_graph=None) -> BakryEmeryReport:
    """Interior maxima of ``lip(h_t f)^2 - h_t(lip(f)^2)`` for each ``t``.

    The default tolerance is ``5 h (1 + max lip f)``.
    """
    f = check_field(space, f, "f")
    ts = np.atleast_1d(np.asarray(t_list, dtype=float))
    if ts.size == 0 or np.any(ts <= 0):
        raise ValueError("t_list must contain positive times")
    gr = graph or neighbor_graph(space)
    s0 = slope_field(space, f, "lip", gr)
    if tol is None:
        tol = 5.0 * space.resolution() * (1.0 + float(s0.max()))
    out = []
    for t in ts:
        lhs = slope_field(space, heat_flow(space, f, t, heat_graph), "lip", gr) ** 2
        rhs = heat_flow(space, s0**2, t, heat_graph)
        out.append(float((lhs - rhs)[gr.interior].max()))
    out = np.array(out)
    return BakryEmeryReport(ts, out, float(tol), bool(np.all(out <= tol)))

"""Busemann functions, their gradient flow, the quotient space and the product check."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .calculus import dirichlet_form, laplacian_graph
from .space import MetricMeasureSpace, validate_space
from .tolerances import DEFAULTS
from .validation import check_field, check_index


# ----------------------------------------------------------------------------
# lines


@dataclass(frozen=True)
class LineSpec:
    """Isometric sample of a line: point ids and their line parameters."""

    indices: np.ndarray
    times: np.ndarray
    line_defect: float = 0.0

    @property
    def span(self):
        return float(self.times.min()), float(self.times.max())

    @property
    def length(self) -> float:
        lo, hi = self.span
        return hi - lo

    @property
    def step(self) -> float:
        return float(np.diff(np.sort(self.times)).min())


def make_line(space, indices, times=None, line_tol=None) -> LineSpec:
    """Validate that ``indices`` sample a line.

    Without ``times`` the parameters are signed distances from the middle
    sample. Raises if ``|d(g_k, g_l) - |t_k - t_l|| > line_tol`` (default:
    the spacing of the space, or 1e-9 without one).
    """
    idx = np.asarray(indices, dtype=int)
    if idx.ndim != 1 or idx.size < 2:
        raise ValueError("a line needs at least two points")
    for i in idx:
        check_index(space, int(i), "line index")
    if times is None:
        mid = idx[len(idx) // 2]
        d0 = space.dist[mid, idx]
        sign = np.where(np.arange(len(idx)) < len(idx) // 2, -1.0, 1.0)
        times = sign * d0
    times = np.asarray(times, dtype=float)
    if times.shape != idx.shape or np.any(np.diff(times) <= 0):
        raise ValueError("line times must be strictly increasing, one per index")
    defect = float(np.abs(space.dist[np.ix_(idx, idx)] - np.abs(times[:, None] - times[None, :])).max())
    tol = line_tol if line_tol is not None else (space.h if space.h is not None else 1e-9)
    if defect > tol:
        raise ValueError(f"points are not an isometric line sample (defect {defect:.3g} > {tol:.3g})")
    return LineSpec(idx, times, defect)


def product_line(space, base_index) -> LineSpec:
    """The fibre through base point ``base_index`` of a product space."""
    if "factor_sizes" not in space.meta:
        raise ValueError("product_line needs a space built by the product generator")
    nb, nt = space.meta["factor_sizes"]
    if not 0 <= base_index < nb:
        raise IndexError(f"base index {base_index} out of range")
    idx = base_index * nt + np.arange(nt)
    return make_line(space, idx, np.asarray(space.meta["fiber_coords"], dtype=float))


def lattice_line(space, axis, through) -> LineSpec:
    """Lattice points that differ from ``through`` only along ``axis``, centred on the span."""
    if "lattice_index" not in space.meta:
        raise ValueError("lattice_line needs a lattice space")
    idx = np.asarray(space.meta["lattice_index"])
    through = check_index(space, through, "through")
    others = np.delete(np.arange(idx.shape[1]), axis)
    on = np.flatnonzero(np.all(idx[:, others] == idx[through, others], axis=1))
    on = on[np.argsort(idx[on, axis])]
    steps = idx[on, axis] * space.meta["axis_h"][axis]
    times = steps - 0.5 * (steps[0] + steps[-1])
    return make_line(space, on, times)


def default_line(space, axis=0) -> LineSpec:
    """Middle fibre of a product space, else the lattice line along ``axis`` through the centre."""
    if "factor_sizes" in space.meta:
        return product_line(space, space.meta["factor_sizes"][0] // 2)
    if "lattice_index" not in space.meta:
        raise ValueError("no default line: supply the line indices explicitly")
    idx = np.asarray(space.meta["lattice_index"])
    centre = np.asarray(space.meta["shape"]) // 2
    centre[axis] = 0
    through = int(np.flatnonzero(np.all(idx == centre, axis=1))[0])
    return lattice_line(space, axis, through)


def ray(space, indices) -> LineSpec:
    """A geodesic ray sampled by ``indices``, parametrised by distance from the first point."""
    idx = np.asarray(indices, dtype=int)
    return make_line(space, idx, space.dist[idx[0], idx])


# ----------------------------------------------------------------------------
# Busemann functions


@dataclass
class BusemannField:
    """Busemann functions of a line sampled on ``[t_min, t_max]``.

    ``b_plus`` and ``b_minus`` are asymptotic estimates built from the last
    two line samples at each end: ``(g(t2) - g(t1)) / (2 (t2 - t1))`` with
    ``g(t) = t^2 - d(x, line(t))^2``, which is exact whenever distances to
    the far line points are Pythagorean or normed. The plain truncations
    ``t_max - d(x, line(t_max))`` and ``-t_min - d(x, line(t_min))`` are kept
    alongside with their second-order error bound.
    """

    b_plus: np.ndarray
    b_minus: np.ndarray
    b_plus_truncated: np.ndarray
    b_minus_truncated: np.ndarray
    truncation: tuple
    truncation_bound: np.ndarray
    transverse_diameter: float
    harmonic_defect: float
    harmonic_tol: float
    low_confidence: bool
    interior: np.ndarray = field(repr=False)
    overshoot: float = 0.0

    @property
    def b(self) -> np.ndarray:
        return self.b_plus

    @property
    def gap(self) -> np.ndarray:
        return self.b_plus + self.b_minus

    @property
    def determined(self) -> np.ndarray:
        """Points where the two ends of the line agree on ``b`` to ``determined_rtol`` of the span."""
        return np.abs(self.gap) <= DEFAULTS["determined_rtol"] * self.span

    @property
    def gap_truncated(self) -> np.ndarray:
        return self.b_plus_truncated + self.b_minus_truncated

    @property
    def harmonic(self) -> bool:
        return self.harmonic_defect <= self.harmonic_tol and self.overshoot <= self.harmonic_tol

    @property
    def span(self) -> float:
        return self.truncation[1] - self.truncation[0]


def _nearest_sample(times, target):
    return int(np.argmin(np.abs(times - target)))


def _secant(space, line, far, near):
    t1, t2 = line.times[near], line.times[far]
    d1, d2 = space.dist[line.indices[near]], space.dist[line.indices[far]]
    return ((t2 * t2 - d2 * d2) - (t1 * t1 - d1 * d1)) / (2.0 * (t2 - t1))


def _truncated_gap(space, line, lo, hi):
    tp, tm = line.times[hi], line.times[lo]
    return (tp - space.dist[line.indices[hi]]) + (-tm - space.dist[line.indices[lo]])


def busemann_field(space, line: LineSpec, harmonic_tol=None) -> BusemannField:
    """Busemann functions of ``line`` plus a harmonicity verdict.

    The verdict has two parts. Coverage: the line must reach both ends of
    the space, so ``b`` may not leave ``[t_min, t_max]`` by more than
    ``harmonic_tol``; a ray ending inside the space fails here. Asymptotics:
    the truncated gap ``g(T)`` over the full span and ``g(T/2)`` over the
    middle half are extrapolated to ``2 g(T) - g(T/2)``, which cancels the
    ``1/T`` truncation error, and must stay within ``harmonic_tol`` (default
    one lattice cell) on the window where both truncations are asymptotic:
    ``|b - mid| <= span/8`` and distance to the line at most
    ``span/4 - |b - mid|``.
    """
    times = line.times
    lo, hi = 0, len(times) - 1
    if len(times) < 5:
        raise ValueError("line needs at least five samples")
    t_min, t_max = float(times[lo]), float(times[hi])
    span = t_max - t_min
    mid = 0.5 * (t_min + t_max)
    b_plus = _secant(space, line, hi, hi - 1)
    b_minus = -_secant(space, line, lo, lo + 1)
    bp_trunc = t_max - space.dist[line.indices[hi]]
    bm_trunc = -t_min - space.dist[line.indices[lo]]
    a = space.dist[:, line.indices].min(axis=1)
    with np.errstate(divide="ignore"):
        bound = a**2 / (2 * np.maximum(t_max - b_plus, 1e-300)) + a**2 / (2 * np.maximum(b_plus - t_min, 1e-300))
    transverse = 2.0 * float(a.max())
    half_lo = _nearest_sample(times, mid - span / 4)
    half_hi = _nearest_sample(times, mid + span / 4)
    g_full = _truncated_gap(space, line, lo, hi)
    g_half = _truncated_gap(space, line, half_lo, half_hi)
    off = np.abs(b_plus - mid)
    interior = (off <= span / 8 + 1e-12) & (a <= span / 4 - off + 1e-12)
    extrapolated = 2 * g_full - g_half
    defect = float(np.abs(extrapolated[interior]).max()) if interior.any() else math.inf
    if harmonic_tol is None:
        harmonic_tol = DEFAULTS["harmonic_h"] * (space.h if space.h is not None else line.step)
    overshoot = float(max(t_min - b_plus.min(), b_plus.max() - t_max, t_min - (-b_minus).min(), (-b_minus).max() - t_max, 0.0))
    return BusemannField(
        b_plus=b_plus,
        b_minus=b_minus,
        b_plus_truncated=bp_trunc,
        b_minus_truncated=bm_trunc,
        truncation=(t_min, t_max),
        truncation_bound=bound,
        transverse_diameter=transverse,
        harmonic_defect=defect,
        harmonic_tol=float(harmonic_tol),
        low_confidence=span < 4 * transverse,
        interior=interior,
        overshoot=overshoot,
    )


def lipschitz_defect(space, f) -> float:
    """``max (|f(x) - f(y)| - d(x, y))`` over all pairs."""
    f = check_field(space, f, "f")
    return float((np.abs(f[:, None] - f[None, :]) - space.dist).max())


# ----------------------------------------------------------------------------
# gradient flow


@dataclass
class FlowMap:
    """Lattice gradient flow ``F_t`` of a Busemann function."""

    t: float
    target: np.ndarray
    slack: np.ndarray
    unreachable: np.ndarray
    undetermined: np.ndarray
    checks: dict = field(default_factory=dict)

    @property
    def n_unreachable(self) -> int:
        return int(self.unreachable.sum())

    @property
    def unreachable_fraction(self) -> float:
        """Share of points with a determined ``b`` whose target falls off the lattice."""
        base = int((~self.undetermined).sum())
        return self.n_unreachable / base if base else 0.0

    @property
    def reachable(self) -> np.ndarray:
        return ~(self.unreachable | self.undetermined)


def _check_flow_time(t, step):
    if step is None or t == 0:
        return
    k = t / step
    if abs(k - round(k)) > 1e-6:
        raise ValueError(f"flow time {t} is not a multiple of the line step {step}")


def flow_targets(space, b, t, mask=None, flow_tol=None, tie_tol=None):
    """Argmin of ``d(x,y)^2/2 - t (b(x) - b(y)) + t^2/2`` for every ``x``.

    Near-ties (within ``tie_tol``) go to the medoid of the tied set, then to
    the smallest index; this keeps flows on normed lattices translations.
    Returns ``(target, slack, excluded)`` where ``excluded`` marks points
    with slack above ``flow_tol`` and points that start or land outside
    ``mask`` (default: everywhere).
    """
    flow_tol = DEFAULTS["flow_tol"] if flow_tol is None else flow_tol
    tie_tol = DEFAULTS["tie_tol"] if tie_tol is None else tie_tol
    mask = np.ones(space.n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    obj = space.half_sq - t * (b[:, None] - b[None, :]) + 0.5 * t * t
    best = obj.min(axis=1)
    tied = obj <= best[:, None] + tie_tol
    target = np.argmin(obj, axis=1)
    for x in np.flatnonzero(tied.sum(axis=1) > 1):
        cand = np.flatnonzero(tied[x])
        spread = (space.dist[np.ix_(cand, cand)] ** 2).sum(axis=1)
        target[x] = cand[np.flatnonzero(spread <= spread.min() + tie_tol)[0]]
    slack = obj[np.arange(space.n), target]
    return target, slack, (slack > flow_tol) | ~mask | ~mask[target]


def gradient_flow_map(space, b, t, step=None, s_values=(), probes=None, mask=None, tol=None) -> FlowMap:
    """Flow map at time ``t`` with its aggregate diagnostics.

    ``checks`` holds the largest distance and level defects, the group law
    defect over ``s_values``, the pushforward-mass and Dirichlet-energy
    defects (relative) and the flow isometry defect, all over reachable
    points, together with the pass flags against the module tolerances.
    Points outside ``mask`` (where ``b`` is not determined by the line) are
    excluded and counted separately from off-lattice targets.
    """
    b = check_field(space, b, "b")
    t = float(t)
    _check_flow_time(t, step)
    tol = dict(DEFAULTS, **(tol or {}))
    mask = np.ones(space.n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    flow = lambda tt: flow_targets(space, b, tt, mask, tol["flow_tol"], tol["tie_tol"])
    target, slack, excluded = flow(t)
    fm = FlowMap(t, target, slack, excluded & mask, ~mask)
    unreach = excluded
    if t == 0:
        fm.checks = {"max_slack": float(slack.max())}
        return fm
    h = space.resolution()
    ok = fm.reachable
    y = target[ok]
    c = {}
    c["max_slack"] = float(slack[ok].max()) if ok.any() else math.nan
    c["distance_defect"] = float(np.abs(space.dist[ok, y] - abs(t)).max()) if ok.any() else math.nan
    c["level_defect"] = float(np.abs(b[ok] - b[y] - t).max()) if ok.any() else math.nan
    # pushforward restricted to the expected image, the points the backward flow reaches
    back = flow(-t)[2]
    pushed = np.bincount(y, weights=space.weight[ok], minlength=space.n)
    expected = np.where(~back, space.weight, 0.0)
    c["push_defect"] = float(np.abs(pushed - expected).sum() / space.weight[ok].sum())
    group = []
    for s in s_values:
        _check_flow_time(s, step)
        ts, _, us = flow(s)
        tt, _, ut = flow(t + s)
        good = ~us & ~unreach[ts] & ~ut
        if good.any():
            group.append(float(space.dist[target[ts[good]], tt[good]].max()))
    c["group_defect"] = max(group) if group else 0.0
    if probes is None:
        probes = default_probes(space, b, abs(t))
    energy = []
    for f in probes:
        e0 = dirichlet_form(space, f)
        if e0 > 0:
            energy.append(abs(dirichlet_form(space, f[target]) - e0) / e0)
    c["energy_defect"] = max(energy) if energy else 0.0
    idx = np.flatnonzero(ok)
    c["isometry_defect"] = float(np.abs(space.dist[np.ix_(target[idx], target[idx])] - space.dist[np.ix_(idx, idx)]).max()) if idx.size else math.nan
    c["unreachable_fraction"] = fm.unreachable_fraction
    c["undetermined_fraction"] = float(fm.undetermined.mean())
    c["passed"] = {
        "group": c["group_defect"] <= tol["group_h"] * h,
        "push": c["push_defect"] <= tol["push_h"] * h,
        "energy": c["energy_defect"] <= tol["energy_h"] * h,
        "isometry": c["isometry_defect"] <= tol["isometry_h"] * h,
        "unreachable": fm.unreachable_fraction <= tol["unreachable_cap"],
    }
    fm.checks = c
    return fm


def default_probes(space, b, margin=0.0):
    """One squared hat function ``max(0, 1 - d(c, x)/r)^2`` for energy probes.

    The centre is the medoid of the middle level set of ``b``; the radius is
    half the distance to the extreme levels, reduced by ``margin``.
    """
    lo, hi = float(b.min()), float(b.max())
    mid = 0.5 * (lo + hi)
    off = np.abs(b - mid)
    level = np.flatnonzero(off <= off.min() + 1e-9)
    centre = level[np.argmin(space.dist[np.ix_(level, level)].max(axis=1))]
    reach = 0.5 * (hi - lo) - margin
    if reach <= 0:
        return []
    r = 0.5 * reach
    d = space.dist[centre]
    return [np.maximum(0.0, 1.0 - d / r) ** 2]


# ----------------------------------------------------------------------------
# quotient


@dataclass
class QuotientSpace:
    """Orbit space of the flow: representatives on ``b = 0`` and the maps between."""

    ambient: object
    reps: np.ndarray
    dprime: np.ndarray
    mprime: np.ndarray
    proj: np.ndarray
    iota: np.ndarray
    smap: np.ndarray
    t_grid: np.ndarray
    tmap: np.ndarray
    step: float
    asymmetry: float
    product_defect: float
    smap_defect: float
    validation: list
    unreachable_fraction: float

    @property
    def n_reps(self) -> int:
        return len(self.reps)

    def to_space(self, label=None) -> MetricMeasureSpace:
        meta = {"h": self.ambient.h} if self.ambient.h is not None else {}
        if self.ambient.dim:
            meta["dim"] = self.ambient.dim - 1
        pts = self.ambient.points[self.reps] if self.ambient.points is not None else None
        return MetricMeasureSpace(self.dprime, self.mprime, pts, label or f"{self.ambient.label}/flow", meta)


def quotient_split(space, bfield: BusemannField, line: LineSpec, t_grid=None, require_harmonic=True) -> QuotientSpace:
    """Quotient of ``space`` by the Busemann flow.

    Only points where ``b`` is determined take part. Representatives are the
    points with ``|b| <= step/2``; ``proj`` flows each
    point to that slab with ``t = b(x)`` rounded to the line step;
    ``d'(x', y') = min_t d(F_t(iota x'), iota y')`` over ``t_grid``;
    ``m'(x') = m(proj^-1(x') and 0 <= b < 1)``. ``tmap[r, k]`` is
    ``F_{-t_k}(iota r)`` (or -1 where the flow is unreachable).
    """
    if require_harmonic and not bfield.harmonic:
        raise ValueError("Busemann field failed the harmonicity check; no splitting to quotient by")
    b = bfield.b
    step = line.step
    lo, hi = bfield.truncation
    if t_grid is None:
        k_lo = math.ceil((lo - 1e-9) / step)
        k_hi = math.floor((hi + 1e-9) / step)
        t_grid = np.arange(k_lo, k_hi + 1) * step
    t_grid = np.asarray(t_grid, dtype=float)
    mask = bfield.determined
    reps = np.flatnonzero((np.abs(b) <= step / 2 + 1e-12) & mask)
    if reps.size == 0:
        raise ValueError("no points with b = 0; shift the line times so that b vanishes inside the space")
    rep_id = np.full(space.n, -1)
    rep_id[reps] = np.arange(reps.size)
    flows = {}

    def flow(t):
        key = round(t / step)
        if key not in flows:
            flows[key] = flow_targets(space, b, key * step, mask)
        return flows[key]

    proj = np.full(space.n, -1)
    tau = np.round(b / step).astype(int)
    for k in np.unique(tau):
        tgt, _, unreach = flow(k * step)
        pts = np.flatnonzero(tau == k)
        ok = ~unreach[pts]
        proj[pts[ok]] = rep_id[tgt[pts[ok]]]
    tmap = np.full((reps.size, t_grid.size), -1)
    for j, t in enumerate(t_grid):
        tgt, _, unreach = flow(-t)
        good = ~unreach[reps]
        tmap[good, j] = tgt[reps[good]]
    dp = np.full((reps.size, reps.size), np.inf)
    for t in t_grid:
        tgt, _, unreach = flow(t)
        good = ~unreach[reps]
        moved = tgt[reps[good]]
        dp[good] = np.minimum(dp[good], space.dist[np.ix_(moved, reps)])
    asym = float(np.abs(dp - dp.T)[np.isfinite(dp) & np.isfinite(dp.T)].max())
    dp = np.minimum(dp, dp.T)
    np.fill_diagonal(dp, 0.0)
    band = (b >= -1e-12) & (b < 1.0 - 1e-12) & (proj >= 0)
    mprime = np.bincount(proj[band], weights=space.weight[band], minlength=reps.size)
    smap = np.stack([proj.astype(float), b], axis=1)
    # S o T on the grid: T(r, t) must project back to r at level t
    valid = tmap >= 0
    rows = np.repeat(np.arange(reps.size)[:, None], t_grid.size, axis=1)
    img = np.where(valid, tmap, 0)
    wrong_rep = valid & (proj[img] != rows)
    level_err = np.where(valid, np.abs(b[img] - t_grid[None, :]), 0.0)
    smap_defect = float(level_err.max()) if valid.any() else math.nan
    if wrong_rep.any():
        smap_defect = math.inf
    # S_# m against m' x (cell length) on interior cells
    cell = np.round(b / step).astype(int)
    inner = np.abs(t_grid - 0.5 * (lo + hi)) <= 0.25 * (hi - lo) + 1e-12
    defects = []
    for j in np.flatnonzero(inner):
        k = round(t_grid[j] / step)
        sel = (cell == k) & (proj >= 0)
        mass = np.bincount(proj[sel], weights=space.weight[sel], minlength=reps.size)
        ref = mprime * step
        good = ref > 0
        defects.append(float((np.abs(mass[good] - ref[good]) / ref[good]).max()))
    prod_defect = max(defects) if defects else math.nan
    finite = np.isfinite(dp).all()
    report = validate_space(dp, mprime) if finite else []
    if not finite:
        raise ValueError("quotient distance is undefined for some representatives (flow unreachable)")
    return QuotientSpace(
        ambient=space,
        reps=reps,
        dprime=dp,
        mprime=mprime,
        proj=proj,
        iota=reps.copy(),
        smap=smap,
        t_grid=t_grid,
        tmap=tmap,
        step=step,
        asymmetry=asym,
        product_defect=prod_defect,
        smap_defect=smap_defect,
        validation=report,
        unreachable_fraction=float((proj < 0).mean()),
    )


# ----------------------------------------------------------------------------
# Pythagoras


class PythagorasReport(NamedTuple):
    max_defect: float
    mean_defect: float
    argmax: tuple
    n_pairs: int
    skipped: int
    min_ratio: float
    max_ratio: float
    envelope_ok: bool
    embedding_defect: float
    scatter: np.ndarray

    def passed(self, tol=DEFAULTS["pythagoras"]) -> bool:
        return self.max_defect <= tol


def interior_times(q: QuotientSpace):
    lo, hi = q.t_grid.min(), q.t_grid.max()
    mid = 0.5 * (lo + hi)
    return np.flatnonzero(np.abs(q.t_grid - mid) <= 0.25 * (hi - lo) + 1e-12)


def pythagoras_check(space, q: QuotientSpace, sample_pairs=None, max_times=21, bilip=None, rtol=None) -> PythagorasReport:
    """Compare ``d(T(x', t), T(y', s))^2`` with ``d'(x', y')^2 + (t - s)^2``.

    ``sample_pairs`` is a list of ``(rep_a, k_a, rep_b, k_b)`` with ``k``
    indexing ``q.t_grid``; by default every pair of representatives and of
    up to ``max_times`` interior times is used. The relative defect divides
    by ``max(d^2, h^2)``. The envelope ``1/c <= d / sqrt(d'^2 + dt^2) <= c``
    (``c = sqrt 2``) is checked on every pair.
    """
    bilip = DEFAULTS["bilip"] if bilip is None else bilip
    rtol = DEFAULTS["bilip_rtol"] if rtol is None else rtol
    h = space.resolution()
    if sample_pairs is None:
        ks = interior_times(q)
        if ks.size > max_times:
            ks = ks[np.linspace(0, ks.size - 1, max_times).round().astype(int)]
        R = np.arange(q.n_reps)
        ra, ka, rb, kb = (g.ravel() for g in np.meshgrid(R, ks, R, ks, indexing="ij"))
    else:
        arr = np.asarray(sample_pairs, dtype=int).reshape(-1, 4)
        ra, ka, rb, kb = arr.T
    pa, pb = q.tmap[ra, ka], q.tmap[rb, kb]
    ok = (pa >= 0) & (pb >= 0)
    skipped = int((~ok).sum())
    ra, ka, rb, kb, pa, pb = ra[ok], ka[ok], rb[ok], kb[ok], pa[ok], pb[ok]
    d = space.dist[pa, pb]
    dt = q.t_grid[ka] - q.t_grid[kb]
    model = q.dprime[ra, rb] ** 2 + dt**2
    defect = np.abs(d**2 - model) / np.maximum(d**2, h * h)
    nz = model > 0
    ratio = d[nz] / np.sqrt(model[nz])
    emb = float(np.abs(q.dprime - space.dist[np.ix_(q.iota, q.iota)]).max())
    k = int(np.argmax(defect)) if defect.size else 0
    return PythagorasReport(
        max_defect=float(defect.max()) if defect.size else 0.0,
        mean_defect=float(defect.mean()) if defect.size else 0.0,
        argmax=(int(ra[k]), float(q.t_grid[ka[k]]), int(rb[k]), float(q.t_grid[kb[k]])) if defect.size else (),
        n_pairs=int(defect.size),
        skipped=skipped,
        min_ratio=float(ratio.min()) if ratio.size else 1.0,
        max_ratio=float(ratio.max()) if ratio.size else 1.0,
        envelope_ok=bool(ratio.size == 0 or (ratio.min() >= (1 - rtol) / bilip and ratio.max() <= bilip * (1 + rtol))),
        embedding_defect=emb,
        scatter=np.stack([d**2, model], axis=1),
    )

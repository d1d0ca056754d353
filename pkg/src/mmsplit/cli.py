"""``mms`` command line: run one scenario and write ``report.json`` plus plot data.

Exit status: 0 when every check passes, 1 on configuration or input errors
(nothing is written), 2 when a check fails, 3 when a check is inconclusive
and none fails.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .calculus import (
    bakry_emery_check,
    heat_flow,
    heat_kernel,
    hilbert_defect,
    laplacian_comparison_check,
    laplacian_graph,
    laplacian_measure,
    slope_field,
)
from .curvature import DEFAULT_T_GRID, cd_convexity_check
from .io import atomic_write, coupling_csv, load_space, load_space_csv, measure_from_dict, scatter_csv, space_to_dict
from .space import bishop_gromov_profile, validate_space
from .splitting import (
    busemann_field,
    default_line,
    gradient_flow_map,
    lipschitz_defect,
    make_line,
    pythagoras_check,
    quotient_split,
)
from .tolerances import VERSION as TOL_VERSION
from .tolerances import resolve
from .transport import ProbMeasure, c_concavity_check, duality_gap, w2_solve

SCHEMA = "mms-report/1"
TASKS = ("validate", "w2", "cd", "hilbert", "laplace", "heat", "be", "split", "full-pipeline")
EXIT_OK, EXIT_CONFIG, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2, 3

# descriptive anchors naming the statement each check instantiates
ANCHORS = {
    "metric_axioms": "metric measure space axioms",
    "bishop_gromov": "Bishop-Gromov volume ratio comparison",
    "kantorovich_duality": "Kantorovich duality for the quadratic cost",
    "dual_feasibility": "dual feasibility of the Kantorovich pair",
    "plan_marginals": "marginal constraints of the optimal plan",
    "c_concavity": "c-concavity of the Kantorovich potential",
    "entropy_convexity": "convexity of the Renyi entropy along W2 geodesics",
    "parallelogram_law": "parallelogram law for the squared slope energy",
    "laplacian_comparison": "Laplacian comparison for the distance function",
    "linear_harmonic": "linear functions are harmonic on flat grids",
    "mass_conservation": "heat flow preserves mass",
    "semigroup": "semigroup property of the heat flow",
    "kernel_mass": "heat kernel rows are probability densities",
    "bakry_emery": "Bakry-Emery gradient contraction",
    "line": "isometric image of the real line",
    "busemann_gap": "b+ + b- = 0 along a splitting",
    "busemann_harmonic": "harmonicity of the Busemann function",
    "busemann_lipschitz": "Busemann functions are 1-Lipschitz",
    "flow_slack": "gradient flow of the Busemann function by exact minimisers",
    "group_law": "group law of the gradient flow",
    "pushforward_mass": "gradient flow preserves the reference measure",
    "dirichlet_energy": "gradient flow preserves the Dirichlet energy",
    "flow_isometry": "gradient flow acts by isometries",
    "unreachable_cap": "bounded share of off-lattice flow targets",
    "quotient_metric": "quotient is a metric measure space",
    "section_identity": "projection after section is the identity",
    "product_measure": "reference measure is the product m' x L1",
    "embedding": "section at level zero is an isometric embedding",
    "pythagoras": "Pythagorean product distance",
    "bilipschitz_envelope": "bilipschitz envelope of the product map",
    "quotient_cd": "quotient has curvature-dimension bound with N-1",
}


class ConfigError(ValueError):
    """Malformed or incomplete scenario configuration."""


# ----------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for failed checks
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mms", description="Run a metric measure space scenario and write a report.")
    p.add_argument("task_pos", nargs="?", choices=TASKS, metavar="TASK", help="task, alternative to --task")
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--space", help="space file, inline JSON, or a distance CSV together with --weights")
    p.add_argument("--weights", help="weight column CSV for a CSV distance matrix")
    p.add_argument("--out", default="mms-out", help="output directory (default: mms-out)")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized probes")
    p.add_argument("--tol-overrides", nargs="*", default=[], metavar="KEY=VALUE")
    p.add_argument("--t-grid", help="times as 'a,b,c' or 'start:stop:count'")
    p.add_argument("--dimension", help="dimension parameter N (number or 'inf')")
    p.add_argument("--mu", help="source measure: dirac:I, uniform:I,J,..., ball:I:R, JSON file or inline JSON")
    p.add_argument("--nu", help="target measure, same forms as --mu")
    p.add_argument("--x0", type=int, help="base point (default: medoid)")
    p.add_argument("--radii", help="Bishop-Gromov radii, same forms as --t-grid")
    p.add_argument("--line", help="line point ids 'i,j,...' (default: product fibre or lattice centre line)")
    p.add_argument("--axis", type=int, default=0, help="lattice axis of the default line")
    p.add_argument("--flow-time", type=float, help="flow time, a multiple of the line step (default: one step)")
    p.add_argument("--probes", default="coords", help="hilbert probes: coords, mixed or random:K")
    return p


def _parse_numbers(text, name):
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return np.linspace(float(a), float(b), int(n))
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise ConfigError(f"--{name}: expected 'a,b,c' or 'start:stop:count', got {text!r}") from None


def _parse_dimension(text):
    if text is None:
        return None
    try:
        N = math.inf if text.strip().lower() in ("inf", "infinity") else float(text)
    except ValueError:
        raise ConfigError(f"--dimension: not a number: {text!r}") from None
    if not N >= 1:
        raise ConfigError(f"--dimension must be >= 1, got {text}")
    return N


def _parse_overrides(items):
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--tol-overrides: expected KEY=VALUE, got {item!r}")
        try:
            out[key.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--tol-overrides: value of {key!r} is not a number") from None
    try:
        return resolve(out)
    except KeyError as exc:
        raise ConfigError(f"--tol-overrides: {exc.args[0]}") from None


def _load_space(args):
    if not args.space:
        raise ConfigError("missing field 'space' (--space)")
    try:
        if args.space.lower().endswith(".csv"):
            if not args.weights:
                raise ConfigError("a CSV distance matrix needs --weights")
            return load_space_csv(args.space, args.weights)
        return load_space(args.space)
    except (OSError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid field 'space': {exc}") from None


def _parse_measure(text, space, name):
    if text is None:
        raise ConfigError(f"missing field '{name}' (--{name})")
    try:
        body = text.strip()
        if body.startswith("{") or os.path.exists(body):
            doc = json.loads(body if body.startswith("{") else Path(body).read_text())
            return measure_from_dict(doc, space)
        kind, _, rest = body.partition(":")
        if kind == "dirac":
            return ProbMeasure.dirac(space, int(rest))
        if kind == "uniform":
            return ProbMeasure.uniform(space, [int(x) for x in rest.split(",")])
        if kind == "ball":
            i, r = rest.split(":")
            return ProbMeasure.uniform(space, np.flatnonzero(space.dist[int(i)] <= float(r) * (1 + 1e-9)))
    except (ValueError, IndexError, TypeError, OSError) as exc:
        raise ConfigError(f"invalid field '{name}': {exc}") from None
    raise ConfigError(f"invalid field '{name}': unknown measure form {text!r}")


def _medoid(space):
    return int(np.argmin(space.dist.max(axis=1)))


class Scenario:
    """Validated configuration; building one performs every input check."""

    def __init__(self, args):
        self.task = args.task or args.task_pos
        if self.task is None:
            raise ConfigError("missing field 'task' (--task)")
        if args.task and args.task_pos and args.task != args.task_pos:
            raise ConfigError("conflicting tasks given positionally and with --task")
        self.tol = _parse_overrides(args.tol_overrides)
        self.N = _parse_dimension(args.dimension)
        self.seed = args.seed
        self.out = Path(args.out)
        self.space = _load_space(args)
        self.h = self.space.resolution()
        n = self.space.n
        if args.x0 is not None and not 0 <= args.x0 < n:
            raise ConfigError(f"invalid field 'x0': {args.x0} out of range")
        self.x0 = _medoid(self.space) if args.x0 is None else args.x0
        self.t_grid = _parse_numbers(args.t_grid, "t-grid") if args.t_grid else None
        self.radii = _parse_numbers(args.radii, "radii") if args.radii else None
        self.probes = args.probes
        self.flow_time = args.flow_time
        self.line = None
        self.mu = self.nu = None
        if self.task in ("w2", "cd"):
            self.mu = _parse_measure(args.mu, self.space, "mu")
            self.nu = _parse_measure(args.nu, self.space, "nu")
        if self.task in ("cd", "laplace") and self.N is None:
            raise ConfigError(f"missing field 'dimension' (--dimension) for task {self.task}")
        if self.task == "cd" and self.t_grid is not None and (self.t_grid.min() < 0 or self.t_grid.max() > 1):
            raise ConfigError("invalid field 't_grid': times must lie in [0, 1]")
        if self.task in ("heat", "be") and self.t_grid is not None and np.any(self.t_grid <= 0):
            raise ConfigError("invalid field 't_grid': heat times must be positive")
        if self.task in ("split", "full-pipeline"):
            try:
                if args.line:
                    self.line = make_line(self.space, [int(x) for x in args.line.split(",")])
                else:
                    self.line = default_line(self.space, args.axis)
            except (ValueError, IndexError, TypeError) as exc:
                raise ConfigError(f"invalid field 'line': {exc}") from None
            if self.line.indices.size < 5:
                raise ConfigError("invalid field 'line': a line needs at least five samples")
            if self.N is None:
                if self.space.dim is None:
                    raise ConfigError("missing field 'dimension' (--dimension): the space has no known dimension")
                self.N = float(self.space.dim)
        if self.task == "hilbert":
            if self.space.points is None or self.space.points.shape[1] < 2:
                raise ConfigError("task hilbert needs point coordinates with at least two axes")
            if not (self.probes in ("coords", "mixed") or self.probes.startswith("random:")):
                raise ConfigError(f"invalid field 'probes': {self.probes!r}")

    def config_dict(self):
        return {
            "task": self.task,
            "space": {"label": self.space.label, "n": self.space.n, "generator": self.space.meta.get("generator")},
            "seed": self.seed,
            "dimension": self.N,
            "t_grid": None if self.t_grid is None else self.t_grid.tolist(),
            "x0": self.x0,
        }


# ----------------------------------------------------------------------------
# report assembly


class Report:
    def __init__(self):
        self.checks = []
        self.results = {}
        self.files = {}
        self.stages = []

    def check(self, name, value, tol, passed, stage=None, verdict=None, inconclusive=False, **extra):
        status = "inconclusive" if inconclusive else ("pass" if passed else "fail")
        entry = {
            "name": name,
            "anchor": ANCHORS[name.split("[")[0]],
            "stage": stage,
            "value": value,
            "tol": tol,
            "status": status,
            "verdict": verdict or status,
        }
        entry.update(extra)
        self.checks.append(entry)
        return status == "pass"

    def skip(self, name, stage, reason):
        self.checks.append(
            {"name": name, "anchor": ANCHORS[name], "stage": stage, "value": None, "tol": None,
             "status": "skipped", "verdict": "skipped", "reason": reason}
        )

    def exit_status(self):
        states = {c["status"] for c in self.checks}
        if "fail" in states:
            return EXIT_FAIL
        if "inconclusive" in states:
            return EXIT_INCONCLUSIVE
        return EXIT_OK


def _clean(value):
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    return value


# ----------------------------------------------------------------------------
# tasks


def _task_validate(sc, rep):
    viol = validate_space(sc.space)
    rep.check("metric_axioms", len(viol), 0, not viol, detail=[v.detail for v in viol[:20]])
    if sc.N is not None and not math.isinf(sc.N):
        radii = sc.radii if sc.radii is not None else sc.h * np.arange(1, 6) * 2
        rows = bishop_gromov_profile(sc.space, sc.x0, radii, sc.N, sc.tol["bg_tol"], pairs="all")
        worst = min(r.ratio - r.bound for r in rows)
        rep.check("bishop_gromov", worst, -sc.tol["bg_tol"], all(r.passed for r in rows))
        rep.results["bishop_gromov"] = [r._asdict() for r in rows]


def _task_w2(sc, rep):
    value, plan, pot = w2_solve(sc.mu, sc.nu)
    tol = sc.tol
    gap = duality_gap(plan, pot)
    rep.check("kantorovich_duality", abs(gap), tol["duality"], abs(gap) <= tol["duality"])
    worst = float(-pot.slack.min())
    rep.check("dual_feasibility", worst, tol["slack"], worst <= tol["slack"])
    marg = float(max(np.abs(plan.matrix.sum(1) - sc.mu.masses).max(), np.abs(plan.matrix.sum(0) - sc.nu.masses).max()))
    rep.check("plan_marginals", marg, tol["marginal"], marg <= tol["marginal"])
    cc = c_concavity_check(sc.space, pot.phi, tol["ccc"])
    rep.check("c_concavity", cc.defect, tol["ccc"], cc.is_c_concave)
    rep.results.update(w2=value, w2_squared=plan.cost, degenerate=plan.degenerate, phi=pot.phi)
    rep.files["coupling.csv"] = coupling_csv(plan)


def _task_cd(sc, rep):
    ts = sc.t_grid if sc.t_grid is not None else DEFAULT_T_GRID
    er = cd_convexity_check(sc.mu, sc.nu, sc.N, ts)
    _cd_checks(rep, er, "entropy_convexity")
    rep.files["entropy.csv"] = er.to_csv()


def _cd_checks(rep, er, name, stage=None):
    for Np, d, v in zip(er.N_values, er.defects, er.verdicts):
        label = "inf" if math.isinf(Np) else f"{Np:g}"
        rep.check(f"{name}[N'={label}]", float(d), er.cd_tol, v == "pass", stage, inconclusive=v == "inconclusive")
    rep.results[name] = er.to_dict()


def _hilbert_probes(sc):
    P = sc.space.points
    x, y = P[:, 0], P[:, 1]
    pairs = [("x", "y", x, y)]
    if sc.probes == "mixed":
        pairs += [("x", "x+2y", x, x + 2 * y), ("y", "x+2y", y, x + 2 * y)]
    elif sc.probes.startswith("random:"):
        rng = np.random.default_rng(sc.seed)
        for k in range(int(sc.probes.split(":")[1])):
            f, g = (_smooth_field(sc.space, rng) for _ in range(2))
            pairs.append((f"random{k}a", f"random{k}b", f, g))
    return pairs


def _smooth_field(space, rng, waves=3):
    P = space.points
    scale = max(float(np.ptp(P, axis=0).max()), 1e-12)
    f = np.zeros(space.n)
    for _ in range(waves):
        k = rng.normal(size=P.shape[1]) * (2 * np.pi / scale)
        f += rng.normal() * np.cos(P @ k + rng.uniform(0, 2 * np.pi))
    return f


def _task_hilbert(sc, rep, stage=None):
    worst = 0.0
    for a, b, f, g in _hilbert_probes(sc):
        d = hilbert_defect(sc.space, f, g)
        worst = max(worst, d)
        ok = d <= sc.tol["hilbert"]
        rep.check(f"parallelogram_law[{a},{b}]", d, sc.tol["hilbert"], ok, stage,
                  verdict="Hilbertian" if ok else "non-Hilbertian")
    rep.results["hilbert_defect"] = worst


def _task_laplace(sc, rep):
    cr = laplacian_comparison_check(sc.space, sc.x0, sc.N, rtol=sc.tol["lap_rtol"])
    rep.check("laplacian_comparison", cr.rel_excess, cr.rtol, cr.passed, n_points=cr.n_points)
    gr = laplacian_graph(sc.space)
    if sc.space.points is not None and "lattice_index" in sc.space.meta and not any(sc.space.meta["periodic"]):
        worst = 0.0
        for k in range(sc.space.points.shape[1]):
            lap = laplacian_measure(sc.space, sc.space.points[:, k], gr) / sc.space.weight
            worst = max(worst, float(np.abs(lap[gr.interior]).max()))
        rep.check("linear_harmonic", worst, sc.tol["lap_linear"], worst <= sc.tol["lap_linear"])


def _heat_times(sc):
    if sc.t_grid is not None:
        return sc.t_grid
    return np.array([0.01, 0.05])


def _task_heat(sc, rep):
    rng = np.random.default_rng(sc.seed)
    f = rng.uniform(0.0, 1.0, sc.space.n)
    w = sc.space.weight
    ts = _heat_times(sc)
    mass = max(abs(float(heat_flow(sc.space, f, t) @ w) - float(f @ w)) for t in ts)
    rep.check("mass_conservation", mass, sc.tol["heat_mass"], mass <= sc.tol["heat_mass"])
    semi = 0.0
    for t in ts:
        for s in ts:
            lhs = heat_flow(sc.space, heat_flow(sc.space, f, s), t)
            semi = max(semi, float(np.abs(lhs - heat_flow(sc.space, f, t + s)).max()))
    rep.check("semigroup", semi, sc.tol["semigroup"], semi <= sc.tol["semigroup"])
    kernels = [heat_kernel(sc.space, sc.x0, t) for t in ts]
    km = max(max(abs(float(heat_flow(sc.space, np.eye(sc.space.n)[sc.x0] / w[sc.x0], t) @ w) - 1.0), k.clipped_mass) for t, k in zip(ts, kernels))
    rep.check("kernel_mass", km, sc.tol["kernel_mass"], km <= sc.tol["kernel_mass"])
    rep.results["kernel_decay_slopes"] = [k.slope for k in kernels]
    for t, k in zip(ts, kernels):
        rep.files[f"kernel_t{t:g}.csv"] = k.to_csv()


def _task_be(sc, rep):
    rng = np.random.default_rng(sc.seed)
    if sc.space.points is not None:
        f = _smooth_field(sc.space, rng)
    else:
        f = sc.space.dist[sc.x0] ** 2 / 2
    tol = sc.tol["be_h"] * sc.h * (1.0 + float(slope_field(sc.space, f).max()))
    be = bakry_emery_check(sc.space, f, _heat_times(sc), tol)
    rep.check("bakry_emery", float(be.violations.max()), be.tol, be.passed)
    rep.results["bakry_emery"] = {"t": be.t_list, "violations": be.violations}


def _task_split(sc, rep, full=False):
    space, tol, h = sc.space, sc.tol, sc.h
    line = sc.line
    rep.stages.append("line")
    rep.check("line", line.line_defect, h, line.line_defect <= h, "line")
    rep.stages.append("busemann")
    bf = busemann_field(space, line, tol["harmonic_h"] * h)
    det = bf.determined
    gap = float(np.abs(bf.gap[det]).max()) if det.any() else math.inf
    rep.check("busemann_gap", gap, tol["gap"], gap <= tol["gap"], "busemann",
              undetermined_fraction=float((~det).mean()))
    lip = lipschitz_defect(space, np.where(det, bf.b, 0.0)) if det.all() else float(
        (np.abs(bf.b[det][:, None] - bf.b[det][None, :]) - space.dist[np.ix_(det, det)]).max())
    rep.check("busemann_lipschitz", lip, tol["lipschitz"], lip <= tol["lipschitz"], "busemann")
    harm = max(bf.harmonic_defect, bf.overshoot)
    rep.check("busemann_harmonic", harm, bf.harmonic_tol, bf.harmonic, "busemann",
              inconclusive=bf.harmonic and bf.low_confidence, low_confidence=bf.low_confidence)
    rep.results["busemann"] = {"truncation": bf.truncation, "harmonic_defect": bf.harmonic_defect, "overshoot": bf.overshoot}
    rep.stages.append("flow")
    step = line.step
    t = step if sc.flow_time is None else sc.flow_time
    try:
        fm = gradient_flow_map(space, bf.b, t, step, s_values=(2 * step, -3 * step), mask=det, tol=tol)
    except ValueError as exc:
        raise ConfigError(f"invalid field 'flow_time': {exc}") from None
    c = fm.checks
    rep.check("flow_slack", c["max_slack"], tol["flow_tol"], c["max_slack"] <= tol["flow_tol"], "flow")
    rep.check("group_law", c["group_defect"], tol["group_h"] * h, c["passed"]["group"], "flow")
    rep.check("pushforward_mass", c["push_defect"], tol["push_h"] * h, c["passed"]["push"], "flow")
    rep.check("dirichlet_energy", c["energy_defect"], tol["energy_h"] * h, c["passed"]["energy"], "flow")
    rep.check("flow_isometry", c["isometry_defect"], tol["isometry_h"] * h, c["passed"]["isometry"], "flow")
    rep.check("unreachable_cap", c["unreachable_fraction"], tol["unreachable_cap"], c["passed"]["unreachable"], "flow",
              undetermined_fraction=c["undetermined_fraction"])
    rep.results["flow"] = {k: v for k, v in c.items() if k != "passed"} | {"t": t}
    later = ["quotient_metric", "section_identity", "product_measure", "embedding", "pythagoras", "bilipschitz_envelope"]
    if full:
        later.append("quotient_cd")
    if not bf.harmonic:
        for name in later:
            rep.skip(name, "quotient", "Busemann function is not harmonic")
        return
    rep.stages.append("quotient")
    try:
        q = quotient_split(space, bf, line)
    except ValueError as exc:
        for name in later:
            rep.skip(name, "quotient", str(exc))
        return
    rep.check("quotient_metric", len(q.validation), 0, not q.validation, "quotient")
    rep.check("section_identity", q.smap_defect, tol["smap_cells"] * h, q.smap_defect <= tol["smap_cells"] * h, "quotient")
    rep.check("product_measure", q.product_defect, h, q.product_defect <= h, "quotient")
    rep.results["quotient"] = {"n_reps": q.n_reps, "asymmetry": q.asymmetry, "unreachable_fraction": q.unreachable_fraction}
    rep.files["quotient.json"] = json.dumps(space_to_dict(q.to_space()))
    rep.stages.append("pythagoras")
    pr = pythagoras_check(space, q, bilip=tol["bilip"], rtol=tol["bilip_rtol"])
    rep.check("embedding", pr.embedding_defect, tol["embed_h"] * h, pr.embedding_defect <= tol["embed_h"] * h, "pythagoras")
    rep.check("pythagoras", pr.max_defect, tol["pythagoras"], pr.passed(tol["pythagoras"]), "pythagoras",
              mean=pr.mean_defect, argmax=list(pr.argmax), pairs=pr.n_pairs, skipped=pr.skipped)
    rep.check("bilipschitz_envelope", [pr.min_ratio, pr.max_ratio], [1 / tol["bilip"], tol["bilip"]], pr.envelope_ok, "pythagoras")
    rep.files["pythagoras_scatter.csv"] = scatter_csv(pr)
    if full:
        rep.stages.append("cd")
        _quotient_cd(sc, rep, q)


def _quotient_cd(sc, rep, q):
    Q = q.to_space()
    Nq = sc.N - 1
    if Q.n < 2:
        rep.check("quotient_cd", 0.0, 0.0, True, "cd", note="single representative")
        return
    if not Nq >= 1:
        rep.skip("quotient_cd", "cd", "quotient dimension parameter below 1")
        return
    i, j = np.unravel_index(int(np.argmax(Q.dist)), Q.dist.shape)
    r = 2 * sc.h
    mu0 = ProbMeasure.uniform(Q, np.flatnonzero(Q.dist[i] <= r * (1 + 1e-9)))
    mu1 = ProbMeasure.uniform(Q, np.flatnonzero(Q.dist[j] <= r * (1 + 1e-9)))
    er = cd_convexity_check(mu0, mu1, Nq, sc.t_grid if sc.t_grid is not None else DEFAULT_T_GRID)
    _cd_checks(rep, er, "quotient_cd", "cd")
    rep.files["quotient_entropy.csv"] = er.to_csv()


def run_scenario(sc: Scenario):
    """Run the configured task; returns the report dictionary, the extra files and the exit status."""
    rep = Report()
    task = sc.task
    if task == "validate":
        _task_validate(sc, rep)
    elif task == "w2":
        _task_w2(sc, rep)
    elif task == "cd":
        _task_cd(sc, rep)
    elif task == "hilbert":
        _task_hilbert(sc, rep)
    elif task == "laplace":
        _task_laplace(sc, rep)
    elif task == "heat":
        _task_heat(sc, rep)
    elif task == "be":
        _task_be(sc, rep)
    elif task in ("split", "full-pipeline"):
        _task_split(sc, rep, full=task == "full-pipeline")
    status = rep.exit_status()
    counts = {s: sum(c["status"] == s for c in rep.checks) for s in ("pass", "fail", "inconclusive", "skipped")}
    doc = {
        "schema": SCHEMA,
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "tool": {"name": "mmsplit", "version": __version__},
        "config": sc.config_dict(),
        "tolerances": {"version": TOL_VERSION, "values": sc.tol},
        "stages": rep.stages,
        "checks": rep.checks,
        "results": rep.results,
        "files": sorted(rep.files),
        "summary": counts | {"exit_status": status},
    }
    return _clean(doc), rep.files, status


def _threads():
    raw = os.environ.get("MMS_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MMS_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"MMS_THREADS must be a positive integer, got {raw!r}")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = _threads()
        sc = Scenario(args)
        with threadpool_limits(limits=threads):
            doc, files, status = run_scenario(sc)
    except ConfigError as exc:
        print(f"mms: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sc.out.mkdir(parents=True, exist_ok=True)
    for name, text in sorted(files.items()):
        atomic_write(sc.out / name, text)
    atomic_write(sc.out / "report.json", json.dumps(doc, indent=2) + "\n")
    verdict = {EXIT_OK: "pass", EXIT_FAIL: "fail", EXIT_INCONCLUSIVE: "inconclusive"}[status]
    print(f"mms {sc.task}: {verdict} ({doc['summary']['pass']} passed, {doc['summary']['fail']} failed, "
          f"{doc['summary']['inconclusive']} inconclusive) -> {sc.out / 'report.json'}")
    return status


if __name__ == "__main__":
    sys.exit(main())

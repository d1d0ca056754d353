import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmsplit import MetricMeasureSpace, ProbMeasure, w2_solve
from mmsplit.calculus import (
    bakry_emery_check,
    carre_du_champ,
    dirichlet_form,
    heat_flow,
    heat_kernel,
    hilbert_defect,
    interior_mask,
    laplacian_comparison_check,
    laplacian_graph,
    laplacian_measure,
    neighbor_graph,
    potential_comparison,
    slope_field,
)
from mmsplit.space import cone, euclidean_grid, normed_plane, product
from mmsplit.splitting import busemann_field, product_line
from oracles import lattice_slope_loops


@pytest.fixture(scope="module")
def grid21():
    return euclidean_grid([21, 21], 0.1)


@pytest.fixture(scope="module")
def grid41():
    return euclidean_grid([41, 41], 0.05)


class TestGraphs:
    def test_edge_lengths_are_distances(self, grid21):
        g = neighbor_graph(grid21)
        assert np.array_equal(g.length, grid21.dist[g.src, g.dst])
        assert g.degree.max() == 8

    def test_axis_rule(self, grid21):
        g = neighbor_graph(grid21, "axis")
        assert g.degree.max() == 4
        assert np.allclose(g.length, 0.1)

    def test_cached(self, grid21):
        assert neighbor_graph(grid21) is neighbor_graph(grid21)

    def test_disconnected_rejected(self):
        D = np.array([[0, 1, 10], [1, 0, 10], [10, 10, 0]], dtype=float)
        S = MetricMeasureSpace(D, np.ones(3))
        with pytest.raises(ValueError):
            neighbor_graph(S, "radius", radius=2.0)

    def test_generic_radius_graph_exact_on_linear(self):
        C = cone(2 * math.pi, 1.0, 0.1)
        g = neighbor_graph(C)
        assert g.is_connected()
        assert g.adjacency(0)

    def test_knn(self, rng):
        pts = rng.uniform(0, 1, (30, 2))
        D = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        S = MetricMeasureSpace(D, np.ones(30), pts, meta={"dim": 2})
        g = neighbor_graph(S, "knn", k=6)
        assert g.degree.min() >= 6

    def test_box_rule_needs_lattice(self, rng):
        S = MetricMeasureSpace(np.array([[0.0, 1.0], [1.0, 0.0]]), np.ones(2))
        with pytest.raises(ValueError):
            neighbor_graph(S, "box")


class TestSlopes:
    def test_constant(self, grid21):
        for mode in ("lip", "lip_plus", "lip_minus"):
            assert np.all(slope_field(grid21, np.full(grid21.n, 3.0), mode) == 0)

    def test_coordinate_on_axis_graph(self, grid21):
        s = slope_field(grid21, grid21.points[:, 0], "lip", neighbor_graph(grid21, "axis"))
        assert np.allclose(s[interior_mask(grid21)], 1.0)

    def test_matches_neighbourhood_enumeration(self, grid21, rng):
        f = rng.normal(size=grid21.n)
        assert np.allclose(slope_field(grid21, f), lattice_slope_loops(grid21.points, f, 0.1), rtol=1e-12)

    def test_busemann_has_unit_slope(self):
        P = product(euclidean_grid([11], 0.1), [-5, 5], 0.1)
        b = busemann_field(P, product_line(P, 5)).b
        s = slope_field(P, b)
        assert np.abs(s[interior_mask(P)] - 1.0).max() <= 1e-9

    def test_plus_minus_split(self, grid21):
        x = grid21.points[:, 0]
        up = slope_field(grid21, x, "lip_plus")
        down = slope_field(grid21, x, "lip_minus")
        assert np.allclose(np.maximum(up, down), slope_field(grid21, x))

    def test_bad_mode(self, grid21):
        with pytest.raises(ValueError):
            slope_field(grid21, grid21.points[:, 0], "nope")


class TestHilbert:
    @pytest.mark.parametrize(
        "key, probes",
        [("euclid_xy", ("x", "y")), ("euclid_x_x2y", ("x", "x+2y")), ("euclid_y_x2y", ("y", "x+2y"))],
    )
    def test_euclidean_matches_oracle(self, grid21, frozen, key, probes):
        X, Y = grid21.points.T
        fields = {"x": X, "y": Y, "x+2y": X + 2 * Y}
        d = hilbert_defect(grid21, fields[probes[0]], fields[probes[1]])
        assert d == pytest.approx(frozen["hilbert"][key], abs=1e-12)

    def test_linf_is_one(self, frozen):
        S = normed_plane(math.inf, 2, 0.1)
        X, Y = S.points.T
        d = hilbert_defect(S, X, Y)
        assert d == pytest.approx(1.0, abs=1e-6)
        assert d == pytest.approx(frozen["hilbert"]["linf_xy"], abs=1e-12)

    def test_coordinate_carre_du_champ(self, grid21):
        X, Y = grid21.points.T
        res = carre_du_champ(grid21, X, Y)
        assert np.abs(res.field[interior_mask(grid21)]).max() <= 1e-2
        assert res.hilbert_defect <= 1e-2

    def test_diagonal_is_squared_slope(self, grid21, rng):
        f = np.sin(grid21.points @ np.array([1.3, -0.4]))
        res = carre_du_champ(grid21, f, f)
        assert np.allclose(res.field, slope_field(grid21, f) ** 2, atol=1e-6)

    def test_cauchy_schwarz_clamp(self, grid21, rng):
        f, g = rng.normal(size=(2, grid21.n))
        res = carre_du_champ(grid21, f, g)
        assert np.all(np.abs(res.field) <= slope_field(grid21, f) * slope_field(grid21, g) + 1e-15)

    @pytest.mark.parametrize("eps", [(1e-13,), (1e-3, 1e-2), ()])
    def test_eps_validation(self, grid21, eps):
        X, Y = grid21.points.T
        with pytest.raises(ValueError):
            carre_du_champ(grid21, X, Y, eps)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
    def test_quadratic_regime_bilinear_symmetric(self, a, b, seed):
        S = euclidean_grid([9, 9], 0.125)
        rng = np.random.default_rng(seed)
        f1, f2, g = rng.normal(size=(3, S.n))
        pair = lambda u, v: carre_du_champ(S, u, v, regime="quadratic").field
        assert np.allclose(pair(a * f1 + b * f2, g), a * pair(f1, g) + b * pair(f2, g), atol=1e-8)
        assert np.allclose(pair(f1, g), pair(g, f1), atol=1e-8)

    def test_quadratic_chain_and_leibniz_rules(self, grid41):
        X, Y = grid41.points.T
        f = X**2 + Y
        g = np.cos(X) * Y
        inner = interior_mask(grid41)
        pair = lambda u, v: carre_du_champ(grid41, u, v, regime="quadratic").field[inner]
        h = 0.05
        chain = np.abs(pair(np.sin(f), g) - np.cos(f[inner]) * pair(f, g)).max()
        leib = np.abs(pair(f * X, g) - (f[inner] * pair(X, g) + X[inner] * pair(f, g))).max()
        assert chain <= h
        assert leib <= h


class TestLaplacian:
    def test_integration_by_parts(self, grid21, rng):
        f, g = rng.normal(size=(2, grid21.n))
        lhs = -2 * dirichlet_form(grid21, f, g)
        assert lhs == pytest.approx(f @ laplacian_measure(grid21, g), abs=1e-10 * max(1.0, abs(lhs)))

    def test_linear_is_harmonic_1d(self):
        S = euclidean_grid([15], 0.2)
        lap = laplacian_measure(S, 3 * S.points[:, 0] + 1)
        assert np.abs(lap[1:-1]).max() <= 1e-10

    def test_linear_is_harmonic_2d(self, grid41):
        X, Y = grid41.points.T
        lap = laplacian_measure(grid41, X - 2 * Y) / grid41.weight
        assert np.abs(lap[interior_mask(grid41, laplacian_graph(grid41))]).max() <= 1e-10

    def test_radial_comparison_matches_stencil(self, grid41, frozen):
        rep = laplacian_comparison_check(grid41, 840, 2, outer=0.8)
        assert rep.rel_excess == pytest.approx(frozen["laplace_radial"]["max_rel_excess"], abs=1e-12)
        assert rep.n_points == frozen["laplace_radial"]["n_ring"]
        assert rep.passed

    def test_busemann_harmonic_on_product(self):
        P = product(euclidean_grid([11], 0.1), [-5, 5], 0.1)
        b = busemann_field(P, product_line(P, 5)).b
        lap = laplacian_measure(P, b) / P.weight
        assert np.abs(lap[interior_mask(P, laplacian_graph(P))]).max() <= 10 * 0.1

    def test_chain_rule_for_laplacian(self, grid41):
        X, Y = grid41.points.T
        g = 0.5 * (X * Y + X)
        phi, dphi, ddphi = np.exp, np.exp, np.exp
        gr = laplacian_graph(grid41)
        inner = interior_mask(grid41, gr)
        lhs = laplacian_measure(grid41, phi(g)) / grid41.weight
        grad2 = carre_du_champ(grid41, g, g, regime="quadratic", graph=gr).field
        rhs = dphi(g) * laplacian_measure(grid41, g) / grid41.weight + ddphi(g) * grad2
        assert np.abs(lhs - rhs)[inner].max() <= 10 * 0.05

    def test_transport_potential_comparison(self, grid21):
        mu = ProbMeasure.uniform(grid21, np.flatnonzero(grid21.dist[0] <= 0.5))
        nu = ProbMeasure.uniform(grid21, np.flatnonzero(grid21.dist[440] <= 0.5))
        _, _, pot = w2_solve(mu, nu)
        for t in (0.25, 0.5, 1.0):
            assert potential_comparison(grid21, t * pot.phi, 2) <= 0.1

    def test_empty_annulus(self):
        S = euclidean_grid([5, 5], 1.0)
        with pytest.raises(ValueError):
            laplacian_comparison_check(S, 12, 2)


class TestHeat:
    def test_matches_matrix_exponential(self, frozen):
        S = euclidean_grid([5, 5], 0.25)
        ref = frozen["heat"]
        for t, vals in zip(ref["t"], ref["values"]):
            assert np.allclose(heat_flow(S, np.array(ref["f"]), t), vals, atol=1e-12)

    def test_identity_and_constants(self, grid21, rng):
        f = rng.normal(size=grid21.n)
        assert np.array_equal(heat_flow(grid21, f, 0.0), f)
        c = np.full(grid21.n, 2.5)
        assert np.array_equal(heat_flow(grid21, c, 0.3), c)

    def test_negative_time(self, grid21):
        with pytest.raises(ValueError):
            heat_flow(grid21, np.zeros(grid21.n), -1.0)

    @given(st.floats(0.001, 0.05), st.floats(0.001, 0.05), st.integers(0, 2**32 - 1))
    def test_semigroup_and_mass(self, t, s, seed):
        S = euclidean_grid([11, 11], 0.1)
        f = np.random.default_rng(seed).normal(size=S.n)
        ht = heat_flow(S, f, t)
        assert abs(ht @ S.weight - f @ S.weight) <= 1e-9
        assert np.abs(heat_flow(S, heat_flow(S, f, s), t) - heat_flow(S, f, t + s)).max() <= 1e-8

    def test_energy_decreases(self, grid21, rng):
        f = rng.normal(size=grid21.n)
        energies = [dirichlet_form(grid21, heat_flow(grid21, f, t)) for t in (0, 0.001, 0.01, 0.1)]
        assert all(a >= b - 1e-12 for a, b in zip(energies, energies[1:]))

    def test_crank_nicolson_agrees(self):
        S = euclidean_grid([15, 15], 0.1)
        f = np.cos(3 * S.points[:, 0]) * S.points[:, 1]
        a = heat_flow(S, f, 0.02, method="eigh")
        b = heat_flow(S, f, 0.02, method="crank-nicolson")
        assert np.abs(a - b).max() <= 1e-3

    def test_kernel(self, grid21):
        k = heat_kernel(grid21, 220, 0.05)
        assert k.density.min() >= 0
        assert abs(k.measure.masses.sum() - 1.0) <= 1e-9
        assert k.clipped_mass <= 1e-9
        assert k.slope > 0
        rows = k.to_csv().splitlines()
        assert rows[0] == "point,distance,density" and len(rows) == grid21.n + 1

    def test_kernel_time_must_be_positive(self, grid21):
        with pytest.raises(ValueError):
            heat_kernel(grid21, 0, 0.0)

    def test_euler_commutation_on_product(self):
        P = product(euclidean_grid([11], 0.1), [-2, 2], 0.1)
        b = busemann_field(P, product_line(P, 5)).b
        X, T = P.points.T
        f = np.exp(-((X - 0.5) ** 2 + T**2) / 0.05)
        pair = lambda u: carre_du_champ(P, b, u, regime="quadratic", graph=laplacian_graph(P)).field
        t = 0.005
        lhs = heat_flow(P, pair(f), t)
        rhs = pair(heat_flow(P, f, t))
        inner = interior_mask(P, laplacian_graph(P))
        assert np.abs(lhs - rhs)[inner].max() <= 0.1


class TestBakryEmery:
    def test_constant(self, grid21):
        rep = bakry_emery_check(grid21, np.ones(grid21.n), [0.01])
        assert rep.violations.max() <= 0

    def test_flat_grid_coordinate(self, grid41):
        rep = bakry_emery_check(grid41, grid41.points[:, 0], [0.01, 0.05])
        assert rep.tol == pytest.approx(5 * 0.05 * 2)
        assert np.all(rep.violations <= 5 * 0.05)
        assert rep.passed

    def test_cone_reports(self, rng):
        C = cone(5.0, 1.0, 0.1)
        rep = bakry_emery_check(C, rng.normal(size=C.n), [0.02])
        assert np.isfinite(rep.violations).all()

    def test_times_positive(self, grid21):
        with pytest.raises(ValueError):
            bakry_emery_check(grid21, grid21.points[:, 0], [0.0])

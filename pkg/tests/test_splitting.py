import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmsplit import MetricMeasureSpace
from mmsplit.calculus import carre_du_champ, laplacian_graph, slope_field
from mmsplit.space import cone, euclidean_grid, normed_plane, product
from mmsplit.splitting import (
    busemann_field,
    default_line,
    flow_targets,
    gradient_flow_map,
    interior_times,
    lattice_line,
    lipschitz_defect,
    make_line,
    product_line,
    pythagoras_check,
    quotient_split,
    ray,
)

H = 0.1


@pytest.fixture(scope="module")
def prod():
    return product(euclidean_grid([11], H), [-5, 5], H)


@pytest.fixture(scope="module")
def prod_line(prod):
    return product_line(prod, 5)


@pytest.fixture(scope="module")
def prod_b(prod, prod_line):
    return busemann_field(prod, prod_line)


@pytest.fixture(scope="module")
def prod_q(prod, prod_line, prod_b):
    return quotient_split(prod, prod_b, prod_line)


@pytest.fixture(scope="module")
def linf():
    return normed_plane(math.inf, 2, H)


class TestLines:
    def test_product_line(self, prod, prod_line):
        assert prod_line.indices.size == 101
        assert prod_line.span == pytest.approx((-5, 5))
        assert prod_line.step == pytest.approx(H)
        assert prod_line.line_defect <= 1e-12

    def test_default_line_on_product(self, prod, prod_line):
        assert np.array_equal(default_line(prod).indices, prod_line.indices)

    def test_lattice_line_is_centred(self):
        S = euclidean_grid([9, 5], 0.5)
        line = lattice_line(S, 0, 2)
        assert line.indices.size == 9
        assert line.span == pytest.approx((-2, 2))
        assert np.all(S.points[line.indices, 1] == S.points[2, 1])

    def test_default_line_on_lattice(self):
        S = euclidean_grid([7, 7], 1.0)
        line = default_line(S, axis=1)
        assert np.all(S.points[line.indices, 0] == 3.0)

    def test_default_line_needs_structure(self):
        S = MetricMeasureSpace(np.array([[0.0, 1.0], [1.0, 0.0]]), np.ones(2))
        with pytest.raises(ValueError):
            default_line(S)

    def test_non_isometric_rejected(self):
        S = euclidean_grid([5, 5], 1.0)
        with pytest.raises(ValueError):
            make_line(S, [0, 6, 7, 13], line_tol=1e-9)

    @pytest.mark.parametrize("idx", [[3], [[0, 1], [2, 3]]])
    def test_shape_errors(self, idx):
        with pytest.raises(ValueError):
            make_line(euclidean_grid([5], 1.0), idx)

    def test_times_must_increase(self):
        with pytest.raises(ValueError):
            make_line(euclidean_grid([5], 1.0), [0, 1, 2], [0.0, 2.0, 1.0])

    def test_ray_parameters(self):
        S = euclidean_grid([6], 0.5)
        assert np.allclose(ray(S, [0, 1, 2, 3]).times, [0, 0.5, 1, 1.5])


class TestBusemann:
    def test_matches_line_parameter(self, prod, prod_b):
        s = prod.points[:, 1]
        assert np.abs(prod_b.gap).max() <= 1e-9
        inner = np.abs(s) < 4.5
        D = 1.0
        assert np.all(np.abs(prod_b.b - s)[inner] <= H + D**2 / (2 * (5 - np.abs(s[inner]))))

    def test_truncations_bounded_by_the_estimate(self, prod, prod_b):
        s = prod.points[:, 1]
        trunc = np.abs(prod_b.b_plus_truncated - s)
        assert np.all(trunc <= prod_b.truncation_bound + 1e-12)

    def test_harmonic_on_product(self, prod_b):
        assert prod_b.harmonic
        assert not prod_b.low_confidence
        assert prod_b.overshoot <= 1e-12

    def test_lipschitz(self, prod, prod_b):
        assert lipschitz_defect(prod, prod_b.b) <= 1e-9

    def test_unit_slope(self, prod, prod_b):
        inner = laplacian_graph(prod).interior
        assert np.abs(slope_field(prod, prod_b.b)[inner] - 1).max() <= 1e-9

    def test_linf_centre_line(self, linf):
        bf = busemann_field(linf, default_line(linf))
        assert bf.low_confidence
        det = bf.determined
        assert 0 < det.sum() < linf.n
        excess = np.abs(bf.b[det][:, None] - bf.b[det][None, :]) - linf.dist[np.ix_(det, det)]
        assert excess.max() <= 1e-9

    def test_ray_in_cone_is_not_harmonic(self):
        C = cone(5.0, 1.0, 0.1)
        line = ray(C, np.flatnonzero(np.isclose(C.points[:, 1], 0.0) & (C.points[:, 0] >= 0))[::-1])
        assert not busemann_field(C, line).harmonic

    def test_short_line_rejected(self):
        S = euclidean_grid([4], 1.0)
        with pytest.raises(ValueError):
            busemann_field(S, make_line(S, [0, 1, 2, 3]))

    @given(st.integers(0, 2**32 - 1))
    def test_lipschitz_defect_of_distance_function(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0, 1, (12, 2))
        D = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        S = MetricMeasureSpace(D, np.ones(12))
        assert lipschitz_defect(S, D[int(rng.integers(12))]) <= 1e-12
        assert lipschitz_defect(S, 2 * D[0]) > 0


@pytest.fixture(scope="module")
def fm(prod, prod_b):
    return gradient_flow_map(prod, prod_b.b, H, H, s_values=(2 * H, -3 * H), mask=prod_b.determined)


class TestFlow:
    def test_translation(self, prod, fm):
        ok = fm.reachable
        d = prod.points[fm.target[ok]] - prod.points[ok]
        assert np.allclose(d, [0.0, -H])

    def test_checks(self, fm):
        c = fm.checks
        assert c["max_slack"] <= 1e-9
        assert c["distance_defect"] <= 1e-9
        assert c["level_defect"] <= 1e-9
        for key in ("group_defect", "push_defect", "energy_defect", "isometry_defect"):
            assert c[key] <= H
        assert all(c["passed"].values())

    def test_unreachable_is_bottom_row(self, prod, fm):
        bottom = np.isclose(prod.points[:, 1], -5.0)
        assert np.array_equal(fm.unreachable, bottom)
        assert fm.unreachable_fraction == pytest.approx(1 / 101)

    def test_zero_time(self, prod, prod_b):
        fm = gradient_flow_map(prod, prod_b.b, 0.0)
        assert np.array_equal(fm.target, np.arange(prod.n))

    def test_flow_time_multiple(self, prod, prod_b):
        with pytest.raises(ValueError):
            gradient_flow_map(prod, prod_b.b, 0.15, H)

    def test_ties_resolve_to_translation_on_linf(self, linf):
        b = linf.points[:, 0]
        target, slack, excluded = flow_targets(linf, b, H)
        ok = ~excluded & (np.abs(linf.points[:, 1]) < 1 - 1e-9)
        assert np.allclose(linf.points[target[ok]] - linf.points[ok], [-H, 0.0])
        assert np.all(slack[ok] <= 1e-9)

    @given(st.integers(1, 6))
    def test_energy_and_push_imply_isometry(self, k):
        P = product(euclidean_grid([5], 0.25), [-2, 2], 0.25)
        bf = busemann_field(P, product_line(P, 2))
        fm = gradient_flow_map(P, bf.b, k * 0.25, 0.25, mask=bf.determined)
        c = fm.checks
        if c["passed"]["energy"] and c["passed"]["push"]:
            assert c["passed"]["isometry"]


class TestQuotient:
    def test_representatives(self, prod, prod_q):
        assert prod_q.n_reps == 11
        assert np.allclose(prod.points[prod_q.reps, 1], 0.0)

    def test_quotient_metric_is_base(self, prod, prod_q):
        base = prod.points[prod_q.reps, 0]
        assert np.allclose(prod_q.dprime, np.abs(base[:, None] - base[None, :]), atol=1e-12)
        assert prod_q.asymmetry <= 1e-12
        assert prod_q.validation == []

    def test_quotient_measure(self, prod, prod_q):
        w = prod.weight.reshape(11, 101)[:, 50:60].sum(axis=1)
        assert np.allclose(prod_q.mprime, w)

    def test_section_and_product_measure(self, prod_q):
        assert prod_q.smap_defect <= H
        assert prod_q.product_defect <= H

    def test_projection(self, prod, prod_q):
        ok = prod_q.proj >= 0
        base = prod.points[prod_q.reps[prod_q.proj[ok]], 0]
        assert np.allclose(base, prod.points[ok, 0])

    def test_single_fibre(self):
        base = MetricMeasureSpace(np.zeros((1, 1)), np.ones(1), np.zeros((1, 1)), meta={"dim": 1})
        P = product(base, [-2, 2], 0.5)
        line = product_line(P, 0)
        q = quotient_split(P, busemann_field(P, line), line)
        assert q.n_reps == 1
        assert np.array_equal(q.dprime, [[0.0]])

    def test_refuses_non_harmonic(self):
        C = cone(5.0, 1.0, 0.1)
        line = ray(C, np.flatnonzero(np.isclose(C.points[:, 1], 0.0) & (C.points[:, 0] >= 0))[::-1])
        with pytest.raises(ValueError):
            quotient_split(C, busemann_field(C, line), line)

    def test_to_space(self, prod_q):
        Q = prod_q.to_space()
        assert Q.n == 11 and Q.dim == 1


class TestPythagoras:
    def test_product_passes(self, prod, prod_q):
        pr = pythagoras_check(prod, prod_q)
        assert pr.max_defect <= 0.05
        assert pr.envelope_ok
        assert pr.embedding_defect <= 1e-12
        assert pr.n_pairs == 11 * 11 * 21 * 21
        assert pr.skipped == 0

    def test_same_point_has_zero_defect(self, prod, prod_q):
        k = int(interior_times(prod_q)[3])
        pr = pythagoras_check(prod, prod_q, sample_pairs=[(4, k, 4, k)])
        assert pr.max_defect == 0.0

    def test_scatter_columns(self, prod, prod_q):
        pr = pythagoras_check(prod, prod_q, max_times=3)
        assert pr.scatter.shape == (pr.n_pairs, 2)
        assert np.allclose(pr.scatter[:, 0], pr.scatter[:, 1], rtol=0.05, atol=H * H)

    def test_linf_fails_inside_envelope(self, linf):
        line = default_line(linf)
        bf = busemann_field(linf, line)
        q = quotient_split(linf, bf, line)
        pr = pythagoras_check(linf, q)
        assert pr.max_defect >= 0.2
        assert pr.envelope_ok
        assert pr.min_ratio >= 1 / math.sqrt(2) * (1 - 1e-12)

    def test_gradient_decomposition_on_product(self, prod, prod_b):
        X, T = prod.points.T
        f = np.sin(2 * X) + 0.3 * T**2
        gr = laplacian_graph(prod)
        inner = gr.interior & (np.abs(T) < 4)
        grad_f = carre_du_champ(prod, f, f, regime="quadratic", graph=gr).field
        along = carre_du_champ(prod, f, prod_b.b, regime="quadratic", graph=gr).field
        across = carre_du_champ(prod, np.sin(2 * X), np.sin(2 * X), regime="quadratic", graph=gr).field
        assert np.abs(grad_f - along**2 - across)[inner].max() <= 10 * H

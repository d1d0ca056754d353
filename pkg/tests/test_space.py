import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_metric
from mmsplit import InvalidSpaceError, MetricMeasureSpace, validate_space
from mmsplit.space import (
    ball_mass,
    bishop_gromov_profile,
    cone,
    cylinder,
    discrete_geodesic,
    euclidean_grid,
    generate_space,
    normed_plane,
    product,
)


class TestValidation:
    def test_triangle_violation_reports_triple(self):
        D = np.array([[0, 1, 3], [1, 0, 1], [3, 1, 0]], dtype=float)
        report = validate_space(D, np.ones(3))
        assert [(v.kind, v.index) for v in report] == [("triangle", (0, 2, 1))]

    def test_asymmetry_reported(self):
        D = np.array([[0, 1], [2, 0]], dtype=float)
        kinds = {(v.kind, v.index) for v in validate_space(D, np.ones(2))}
        assert ("symmetry", (0, 1)) in kinds

    @pytest.mark.parametrize(
        "D, w, kind",
        [
            ([[1.0, 1], [1, 0]], [1, 1], "diagonal"),
            ([[0.0, -1], [-1, 0]], [1, 1], "negative"),
            ([[0.0, 0], [0, 0]], [1, 1], "separation"),
            ([[0.0, np.nan], [np.nan, 0]], [1, 1], "non-finite"),
            ([[0.0, 1], [1, 0]], [1, 0], "weight"),
        ],
    )
    def test_each_axiom_has_a_kind(self, D, w, kind):
        assert kind in {v.kind for v in validate_space(np.array(D), np.array(w, dtype=float))}

    def test_construction_raises_with_report(self):
        D = np.array([[0, 1, 3], [1, 0, 1], [3, 1, 0]], dtype=float)
        with pytest.raises(InvalidSpaceError) as err:
            MetricMeasureSpace(D, np.ones(3))
        assert err.value.report[0].kind == "triangle"

    def test_arrays_are_read_only(self):
        S = euclidean_grid([3], 1.0)
        with pytest.raises(ValueError):
            S.dist[0, 1] = 5.0

    def test_shape_mismatch(self):
        with pytest.raises(InvalidSpaceError):
            MetricMeasureSpace(np.zeros((2, 2)), np.ones(3))


class TestGenerators:
    def test_euclidean_diagonal(self):
        S = euclidean_grid([3, 3], 1.0)
        assert S.n == 9
        assert S.dist[0, 8] == pytest.approx(2 * math.sqrt(2), abs=1e-12)

    def test_linf_plane(self):
        S = normed_plane(math.inf, 2, 1.0)
        # point (1, 2) is row-major index 1*3 + 2
        assert S.dist[0, 5] == 2.0

    def test_product_of_segment(self):
        P = product(euclidean_grid([2], 1.0), [0, 1], 1.0)
        assert P.n == 4
        assert P.dist[0, 3] == pytest.approx(math.sqrt(2), abs=1e-15)

    @pytest.mark.parametrize(
        "spec",
        [
            {"kind": "euclidean_grid", "dims": [4, 3], "h": 0.5},
            {"kind": "normed_plane", "p": "inf", "side": 1, "h": 0.25},
            {"kind": "normed_plane", "p": 1, "side": 1, "h": 0.25},
            {"kind": "normed_plane", "p": 3, "side": 1, "h": 0.25},
            {"kind": "cylinder", "radius": 0.5, "length": 1, "h": 0.25},
            {"kind": "cone", "angle": 5.0, "radius": 1, "h": 0.25},
            {"kind": "product", "base": {"kind": "euclidean_grid", "dims": [3], "h": 0.5}, "interval": [-1, 1], "h": 0.5},
        ],
    )
    def test_generated_spaces_validate(self, spec):
        S = generate_space(spec)
        assert validate_space(S) == []
        assert np.all(S.weight > 0)

    @pytest.mark.parametrize(
        "spec",
        [
            {"kind": "euclidean_grid", "dims": [3], "h": 0.0},
            {"kind": "euclidean_grid", "dims": [1], "h": 1.0},
            {"kind": "normed_plane", "p": 0.5, "side": 1, "h": 0.5},
            {"kind": "cone", "angle": 7.0, "radius": 1, "h": 0.5},
            {"kind": "bogus"},
            {"kind": "cylinder", "radius": 1},
        ],
    )
    def test_bad_specs_rejected(self, spec):
        with pytest.raises(ValueError):
            generate_space(spec)

    def test_unit_cell_weights(self):
        S = euclidean_grid([4, 5], 0.2)
        assert np.allclose(S.weight, 0.04)

    def test_cylinder_wraps(self):
        C = cylinder(1 / (2 * math.pi) * 8 * 0.25, 0.5, 0.25)
        m = C.meta["shape"][0]
        nz = C.meta["shape"][1]
        # first and last points around the circle are neighbours
        assert C.dist[0, (m - 1) * nz] == pytest.approx(C.dist[0, nz])


class TestGeodesics:
    def test_line_chain(self):
        g = discrete_geodesic(euclidean_grid([5], 1.0), 0, 4, 4)
        assert g.indices.tolist() == [0, 1, 2, 3, 4]
        assert g.geo_tol == 0.0

    def test_diagonal_chain_matches_exhaustive_search(self, frozen):
        g = discrete_geodesic(euclidean_grid([5, 5], 1.0), 0, 24, 4)
        assert g.indices.tolist() == frozen["geodesic_diagonal"]
        assert g.geo_tol <= 1e-9
        assert not g.over_tolerance

    def test_degenerate(self):
        g = discrete_geodesic(euclidean_grid([3], 1.0), 1, 1, 3)
        assert g.indices.tolist() == [1, 1, 1, 1]
        assert g.speed == 0.0

    def test_coarse_space_flags(self):
        S = euclidean_grid([2, 2], 1.0)
        g = discrete_geodesic(S, 0, 3, 2, ceiling=1e-9)
        assert g.over_tolerance

    @given(st.integers(0, 15), st.integers(0, 15))
    def test_reversal_agrees_up_to_ties(self, i, j):
        S = euclidean_grid([4, 4], 1.0)
        fwd = discrete_geodesic(S, i, j, 3)
        back = discrete_geodesic(S, j, i, 3)
        d = S.dist[i, j]
        for k, t in enumerate(fwd.times):
            a, b = fwd.indices[k], back.indices[-1 - k]
            score = lambda z: max(abs(S.dist[i, z] - t * d), abs(S.dist[z, j] - (1 - t) * d))
            assert score(a) == pytest.approx(score(b), abs=1e-12)


class TestBishopGromov:
    def test_ball_masses_match_loops(self, frozen):
        S = euclidean_grid([21, 21], 0.1)
        x0 = 220
        ref = frozen["bishop_gromov"]
        for r, m in zip(ref["radii"], ref["mass"]):
            assert ball_mass(S, x0, r) == pytest.approx(m, rel=1e-12)

    def test_half_radius_ratio(self):
        S = euclidean_grid([21, 21], 0.1)
        (row,) = bishop_gromov_profile(S, 220, [0.5, 1.0], 2)
        assert abs(row.ratio - 0.25) <= 0.1 * 0.25 + 0.01
        assert row.passed

    def test_equal_radii(self):
        S = euclidean_grid([5], 1.0)
        (row,) = bishop_gromov_profile(S, 2, [1.0, 1.0], 1)
        assert row.ratio == 1.0 and row.passed

    def test_interval_ratio(self):
        S = euclidean_grid([101], 0.01)
        rows = bishop_gromov_profile(S, 50, [0.1, 0.2, 0.4], 1)
        for row in rows:
            assert row.ratio == pytest.approx(row.r / row.R, abs=0.05)
            assert row.passed

    def test_radius_beyond_diameter(self):
        S = euclidean_grid([3], 1.0)
        assert ball_mass(S, 0, 100.0) == pytest.approx(S.total_mass)

    @pytest.mark.parametrize("radii", [[], [0.0, 1.0], [2.0, 1.0]])
    def test_bad_radii(self, radii):
        with pytest.raises(ValueError):
            bishop_gromov_profile(euclidean_grid([5], 1.0), 0, radii, 1)

    @given(st.floats(0.05, 0.5), st.floats(0.5, 1.0), st.floats(1.0, 1.5))
    def test_larger_outer_radius_never_raises_ratio(self, r, R1, R2):
        S = euclidean_grid([21, 21], 0.1)
        a = ball_mass(S, 220, r)
        assert a / ball_mass(S, 220, max(R1, R2)) <= a / ball_mass(S, 220, min(R1, R2)) + 1e-15


@given(st.integers(3, 8), st.integers(0, 2**31))
def test_random_euclidean_metrics_validate(n, seed):
    S = random_metric(np.random.default_rng(seed), n)
    assert validate_space(S) == []

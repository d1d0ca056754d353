import numpy as np
import pytest
from sklearn.base import clone

from mmsplit import HeatSmoother, NotFittedError, SplittingDecomposer, heat_flow
from mmsplit.space import euclidean_grid, product


@pytest.fixture(scope="module")
def prod():
    return product(euclidean_grid([5], 0.25), [-2, 2], 0.25)


class TestSplittingDecomposer:
    def test_fit_sets_attributes(self, prod):
        est = SplittingDecomposer().fit(prod)
        assert est.quotient_.n_reps == 5
        assert est.pythagoras_.passed()

    def test_round_trip(self, prod):
        est = SplittingDecomposer().fit(prod)
        ids = np.arange(prod.n)
        rows = est.transform(ids)
        ok = rows[:, 0] >= 0
        back = est.inverse_transform(rows[ok])
        assert np.array_equal(back, ids[ok])

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            SplittingDecomposer().transform([0])

    def test_params_and_clone(self):
        est = SplittingDecomposer(axis=1, harmonic_tol=0.5)
        assert clone(est).get_params() == est.get_params()

    def test_rejects_arrays(self):
        with pytest.raises(TypeError):
            SplittingDecomposer().fit(np.zeros((3, 3)))

    def test_out_of_range(self, prod):
        est = SplittingDecomposer().fit(prod)
        with pytest.raises(IndexError):
            est.transform([prod.n])


class TestHeatSmoother:
    def test_matches_heat_flow(self, rng):
        S = euclidean_grid([6, 6], 0.2)
        F = rng.normal(size=(3, S.n))
        out = HeatSmoother(t=0.02).fit(S).transform(F)
        assert np.allclose(out[1], heat_flow(S, F[1], 0.02))

    def test_shape_checked(self):
        S = euclidean_grid([3, 3], 1.0)
        with pytest.raises(ValueError):
            HeatSmoother().fit(S).transform(np.zeros(4))

    def test_negative_time(self):
        with pytest.raises(ValueError):
            HeatSmoother(t=-1).fit(euclidean_grid([3, 3], 1.0))

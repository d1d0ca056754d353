"""scikit-learn style wrappers around the splitting pipeline and the heat flow.

Both estimators are fitted on a :class:`~mmsplit.space.MetricMeasureSpace`
rather than on a feature matrix, so they follow the estimator protocol
(``fit`` returns ``self``, learned state ends in ``_``, ``get_params``) but
are not meant for cross-validation utilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .calculus import heat_flow, laplacian_graph
from .space import MetricMeasureSpace
from .splitting import busemann_field, default_line, make_line, pythagoras_check, quotient_split
from .validation import NotFittedError, check_positive


def _check_space(space):
    if not isinstance(space, MetricMeasureSpace):
        raise TypeError(f"expected a MetricMeasureSpace, got {type(space).__name__}")
    return space


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted; call fit first")


class SplittingDecomposer(BaseEstimator, TransformerMixin):
    """Split a space along a line into quotient coordinates ``(x', t)``.

    Parameters
    ----------
    line : array of int or None
        Point ids sampling the line, in order. ``None`` picks the middle
        fibre of a product space or the centre line of a lattice.
    axis : int
        Lattice axis used when ``line`` is None on a lattice space.
    harmonic_tol : float or None
        Tolerance of the Busemann harmonicity verdict.
    require_harmonic : bool
        Refuse to build a quotient when the verdict fails.

    Attributes
    ----------
    line_ : LineSpec
    busemann_ : BusemannField
    quotient_ : QuotientSpace
    pythagoras_ : PythagorasReport
    """

    def __init__(self, line=None, axis=0, harmonic_tol=None, require_harmonic=True):
        self.line = line
        self.axis = axis
        self.harmonic_tol = harmonic_tol
        self.require_harmonic = require_harmonic

    def fit(self, X, y=None):
        space = _check_space(X)
        self.line_ = default_line(space, self.axis) if self.line is None else make_line(space, self.line)
        self.busemann_ = busemann_field(space, self.line_, self.harmonic_tol)
        self.quotient_ = quotient_split(space, self.busemann_, self.line_, require_harmonic=self.require_harmonic)
        self.pythagoras_ = pythagoras_check(space, self.quotient_)
        self.space_ = space
        return self

    def transform(self, X):
        """Rows ``(representative, b)`` for the point ids ``X``; ``-1`` marks unreachable points."""
        _check_fitted(self, "quotient_")
        idx = np.asarray(X, dtype=int).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= self.space_.n):
            raise IndexError("point id out of range")
        return self.quotient_.smap[idx]

    def inverse_transform(self, X):
        """Point ids for rows ``(representative, t)``, ``t`` snapped to the flow grid."""
        _check_fitted(self, "quotient_")
        Z = np.atleast_2d(np.asarray(X, dtype=float))
        if Z.shape[1] != 2:
            raise ValueError("expected rows (representative, t)")
        q = self.quotient_
        rep = Z[:, 0].astype(int)
        k = np.abs(Z[:, 1][:, None] - q.t_grid[None, :]).argmin(axis=1)
        return q.tmap[rep, k]


class HeatSmoother(BaseEstimator, TransformerMixin):
    """Apply the heat semigroup at time ``t`` to fields on a fitted space.

    Rows of the array passed to :meth:`transform` are fields, one value per
    point of the space.
    """

    def __init__(self, t=0.01, method=None):
        self.t = t
        self.method = method

    def fit(self, X, y=None):
        self.space_ = _check_space(X)
        if float(self.t) != 0:
            check_positive(self.t, "t")
        self.graph_ = laplacian_graph(self.space_)
        return self

    def transform(self, X):
        _check_fitted(self, "space_")
        F = np.atleast_2d(np.asarray(X, dtype=float))
        if F.shape[1] != self.space_.n:
            raise ValueError(f"fields must have {self.space_.n} values, got {F.shape[1]}")
        return np.stack([heat_flow(self.space_, f, self.t, self.graph_, self.method) for f in F])

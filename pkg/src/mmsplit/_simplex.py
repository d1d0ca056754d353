"""Transportation simplex for dense balanced transport problems.

Primal basic solutions are spanning trees of the bipartite row/column graph
with ``m + n - 1`` cells. Duals come from ``u_i + v_j = C_ij`` on the tree,
the entering cell is the most negative reduced cost (Dantzig), and after a
run of degenerate pivots the rule switches to Bland's lowest-index choice so
the method cannot cycle. Duals are updated incrementally after each pivot and
recomputed from scratch periodically and before optimality is declared.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

DEGENERATE_RUN = 50
REFRESH_EVERY = 200


@dataclass
class SimplexResult:
    flow: np.ndarray
    u: np.ndarray
    v: np.ndarray
    basis: list
    iterations: int
    alternative_optimum: bool


def _northwest_corner(a, b):
    m, n = len(a), len(b)
    ra, rb = a.astype(float).copy(), b.astype(float).copy()
    cells, flows = [], []
    i = j = 0
    while True:
        if i == m - 1 and j == n - 1:
            cells.append((i, j))
            flows.append(max(ra[i], 0.0))
            break
        x = min(ra[i], rb[j])
        cells.append((i, j))
        flows.append(max(x, 0.0))
        ra[i] -= x
        rb[j] -= x
        # advance exactly one index so the basis stays a spanning tree
        if j == n - 1 or (i < m - 1 and ra[i] <= rb[j]):
            i += 1
        else:
            j += 1
    return cells, flows


class _Tree:
    """Basis cells as edges between row nodes ``0..m-1`` and column nodes ``m..m+n-1``."""

    def __init__(self, cells, flows, m, n):
        self.m, self.n = m, n
        self.rows = np.array([c[0] for c in cells])
        self.cols = np.array([c[1] for c in cells])
        self.flow = np.array(flows, dtype=float)
        self.slot = {c: k for k, c in enumerate(cells)}

    def graph(self, skip=None):
        keep = np.ones(len(self.rows), dtype=bool)
        if skip is not None:
            keep[skip] = False
        r, c = self.rows[keep], self.cols[keep] + self.m
        size = self.m + self.n
        return coo_matrix((np.ones(len(r)), (r, c)), shape=(size, size)).tocsr()

    def duals(self, C):
        m = self.m
        order, pred = breadth_first_order(self.graph(), 0, directed=False, return_predecessors=True)
        pot = np.zeros(m + self.n)
        for node in order[1:]:
            p = pred[node]
            pot[node] = C[p, node - m] - pot[p] if node >= m else C[node, p - m] - pot[p]
        return pot[:m], pot[m:]

    def path(self, start, goal):
        _, pred = breadth_first_order(self.graph(), start, directed=False, return_predecessors=True)
        nodes = [goal]
        while nodes[-1] != start:
            nodes.append(pred[nodes[-1]])
        return nodes[::-1]


def transport_simplex(a, b, C, rtol=1e-12, max_iter=None) -> SimplexResult:
    """Minimise ``sum C * X`` subject to row sums ``a`` and column sums ``b``.

    ``a`` and ``b`` must be positive with equal totals. The returned duals
    satisfy ``u_i + v_j <= C_ij + tol`` everywhere with equality on the basis.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    m, n = C.shape
    scale = max(1.0, float(np.abs(C).max()) if C.size else 1.0)
    tol = rtol * scale
    tree = _Tree(*_northwest_corner(a, b), m, n)
    max_iter = max_iter or 50 * (m + n) * max(m, n) + 1000
    u, v = tree.duals(C)
    degenerate_run = 0
    since_refresh = 0
    it = 0
    while True:
        red = C - u[:, None] - v[None, :]
        if degenerate_run < DEGENERATE_RUN:
            k = int(np.argmin(red))
            optimal = red.flat[k] >= -tol
        else:
            cand = np.flatnonzero(red.ravel() < -tol)
            optimal = cand.size == 0
            k = int(cand[0]) if cand.size else -1
        if optimal:
            if since_refresh == 0:
                break
            u, v = tree.duals(C)
            since_refresh = 0
            continue
        it += 1
        if it > max_iter:
            raise RuntimeError("transport simplex did not converge")
        ei, ej = divmod(k, n)
        # cycle: entering cell, then the tree path from column ej back to row ei
        nodes = tree.path(m + ej, ei)
        slots = []
        for p, q in zip(nodes[:-1], nodes[1:]):
            slots.append(tree.slot[(q, p - m)] if q < m else tree.slot[(p, q - m)])
        slots = np.array(slots)
        minus, plus = slots[0::2], slots[1::2]
        theta = tree.flow[minus].min()
        ties = minus[tree.flow[minus] == theta]
        leave = int(ties[np.argmin(tree.rows[ties] * n + tree.cols[ties])])
        tree.flow[plus] += theta
        tree.flow[minus] -= theta
        # the side of the split tree holding row ei shifts by the reduced cost
        _, labels = connected_components(tree.graph(skip=leave), directed=False)
        side = labels == labels[ei]
        r = red[ei, ej]
        u[side[:m]] += r
        v[side[m:]] -= r
        del tree.slot[(int(tree.rows[leave]), int(tree.cols[leave]))]
        tree.rows[leave], tree.cols[leave], tree.flow[leave] = ei, ej, theta
        tree.slot[(ei, ej)] = leave
        degenerate_run = degenerate_run + 1 if theta == 0 else 0
        since_refresh += 1
        if since_refresh >= REFRESH_EVERY:
            u, v = tree.duals(C)
            since_refresh = 0
    X = np.zeros((m, n))
    X[tree.rows, tree.cols] = np.maximum(tree.flow, 0.0)
    nonbasic = np.ones((m, n), dtype=bool)
    nonbasic[tree.rows, tree.cols] = False
    alt = bool(np.any(nonbasic & (np.abs(red) <= 1e-9 * scale)))
    basis = list(zip(tree.rows.tolist(), tree.cols.tolist()))
    return SimplexResult(X, u, v, basis, it, alt)

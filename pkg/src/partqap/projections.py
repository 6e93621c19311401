"""Exact projections used by the solvers."""

from __future__ import annotations

import numpy as np

from .core import MatchingMatrix


class InfeasibleAssignmentError(ValueError):
    pass


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = 1}.

    Works on the last axis, so a (..., k) array projects every row.
    Sort-based: theta is chosen so that max(v - theta, 0) sums to one.
    """
    v = np.asarray(v, dtype=float)
    k = v.shape[-1]
    u = -np.sort(-v, axis=-1)
    css = np.cumsum(u, axis=-1) - 1.0
    idx = np.arange(1, k + 1)
    support = np.count_nonzero(u - css / idx > 0, axis=-1)
    theta = np.take_along_axis(css, (support - 1)[..., None], axis=-1) / support[..., None]
    return np.maximum(v - theta, 0.0)


def project_halfspace_sum(v, nonneg: bool = False) -> np.ndarray:
    """Euclidean projection onto {sum(x) <= 1}, along the last axis.

    With ``nonneg=True`` the set is {x >= 0, sum(x) <= 1} instead.
    """
    v = np.asarray(v, dtype=float)
    if nonneg:
        clipped = np.maximum(v, 0.0)
        over = clipped.sum(axis=-1, keepdims=True) > 1
        return np.where(over, project_simplex(v), clipped)
    excess = np.maximum(v.sum(axis=-1, keepdims=True) - 1.0, 0.0)
    return v - excess / v.shape[-1]


def _assign_rows(cost: np.ndarray) -> np.ndarray:
    """Min-cost assignment of every row of an n x m cost (n <= m) to a
    distinct column.  Shortest augmenting paths with potentials, O(n^2 m);
    among equal reduced costs the lowest column index wins."""
    n, m = cost.shape
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    owner = np.zeros(m + 1, dtype=np.int64)  # column j -> row (1-based), 0 = free
    way = np.zeros(m + 1, dtype=np.int64)
    a = np.zeros((n + 1, m + 1))
    a[1:, 1:] = cost
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(m + 1, INF)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used
            free[0] = False
            cur = a[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, INF)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    cols = np.empty(n, dtype=np.int64)
    for j in range(1, m + 1):
        if owner[j]:
            cols[owner[j] - 1] = j - 1
    return cols


def assign_max(score) -> np.ndarray:
    """Column index chosen for each row in a maximum-weight assignment."""
    score = np.asarray(score, dtype=float)
    if score.ndim == 1:
        score = score[None, :]
    P, R = score.shape
    if P > R:
        raise InfeasibleAssignmentError(
            f"infeasible partial assignment: {P} parts but only {R} regions")
    # shift so costs are non-negative; does not change the optimum
    return _assign_rows(score.max() - score)


def project_partial_assignment(C_I) -> np.ndarray:
    """Binary P x |R| matrix maximizing <M, C_I> with unit row sums and
    column sums at most one."""
    C_I = np.atleast_2d(np.asarray(C_I, dtype=float))
    cols = assign_max(C_I)
    out = np.zeros_like(C_I)
    out[np.arange(C_I.shape[0]), cols] = 1.0
    return out


def project_matching(C, block: int) -> MatchingMatrix:
    """Projection of a P x R+ score matrix onto the hard set.

    The row constraints act per image and the column constraints per
    region, so the problem splits into independent per-image assignments.
    """
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] % block:
        raise ValueError(f"{C.shape[1]} columns do not split into blocks of {block}")
    out = np.zeros_like(C)
    for s in range(0, C.shape[1], block):
        out[:, s:s + block] = project_partial_assignment(C[:, s:s + block])
    return MatchingMatrix(out, block, "hard")

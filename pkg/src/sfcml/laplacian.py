"""Matrix-free products with the per-user comparison-graph Laplacian.

For a binary preference vector ``y`` with ``n_pos`` ones and ``n_neg``
zeros, every (positive, unobserved) item pair is joined by an edge of
weight ``1 / (n_pos * n_neg)``. The adjacency factorizes as::

    D = (y (1-y)^T + (1-y) y^T) / (n_pos * n_neg)

so the Laplacian is a diagonal plus two rank-one terms::

    L = diag(y / n_pos + (1-y) / n_neg) - D

and ``L @ v`` costs O(N). The dense form is only built by
:func:`dense_laplacian`, which exists for testing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateGraph, TooLargeForDense

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class UserGraph:
    y: np.ndarray
    n_pos: int
    n_neg: int

    @classmethod
    def from_labels(cls, y, user=None) -> "UserGraph":
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 1:
            raise ValueError("labels must be a vector")
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("labels must be 0/1")
        n_pos = int(y.sum())
        n = y.shape[0]
        if not 0 < n_pos < n:
            raise DegenerateGraph(n_pos, n, user)
        return cls(y, n_pos, n - n_pos)

    @classmethod
    def from_positives(cls, positives, num_items, user=None) -> "UserGraph":
        y = np.zeros(num_items, dtype=np.float64)
        y[np.asarray(positives, dtype=np.int64)] = 1.0
        return cls.from_labels(y, user)

    @property
    def num_items(self) -> int:
        return self.y.shape[0]

    @property
    def degree(self) -> np.ndarray:
        return self.y / self.n_pos + (1.0 - self.y) / self.n_neg


def _check(g: UserGraph):
    if not 0 < g.n_pos < g.num_items:
        raise DegenerateGraph(g.n_pos, g.num_items)


def dense_laplacian(g: UserGraph) -> np.ndarray:
    """Materialize L as an N x N array (test oracle; N <= 2000)."""
    _check(g)
    n = g.num_items
    if n > DENSE_LIMIT:
        raise TooLargeForDense(f"N={n} exceeds dense limit {DENSE_LIMIT}")
    y = g.y
    adj = (np.outer(y, 1.0 - y) + np.outer(1.0 - y, y)) / (g.n_pos * g.n_neg)
    return np.diag(adj.sum(axis=1)) - adj


def lap_vec_product(g: UserGraph, v) -> np.ndarray:
    """``L @ v`` in O(N) without forming L."""
    _check(g)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != g.y.shape:
        raise ValueError(f"vector length {v.shape} does not match N={g.num_items}")
    y = g.y
    total = v.sum()
    pos_sum = y @ v
    neg_sum = total - pos_sum
    scale = 1.0 / (g.n_pos * g.n_neg)
    return g.degree * v - scale * (y * neg_sum + (1.0 - y) * pos_sum)


def lap_mat_product(g: UserGraph, Q) -> np.ndarray:
    """``L @ Q`` for an N x q matrix in O(qN)."""
    _check(g)
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != g.num_items:
        raise ValueError(f"expected an ({g.num_items}, q) matrix, got {Q.shape}")
    y = g.y
    total = Q.sum(axis=0)
    pos_sum = y @ Q
    neg_sum = total - pos_sum
    scale = 1.0 / (g.n_pos * g.n_neg)
    return g.degree[:, None] * Q - scale * (np.outer(y, neg_sum) + np.outer(1.0 - y, pos_sum))


def quadratic_form(g: UserGraph, v) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(v @ lap_vec_product(g, v))


def lap_rows_product(Y: np.ndarray, R: np.ndarray, n_pos=None) -> np.ndarray:
    """Row-wise Laplacian products for a batch of users.

    Row ``b`` of the result is ``L_b @ R[b]`` where ``L_b`` is the Laplacian
    of the preference vector ``Y[b]``. Cost is O(B * N).
    """
    Y = np.asarray(Y, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    n_items = Y.shape[1]
    if n_pos is None:
        n_pos = Y.sum(axis=1)
    n_pos = np.asarray(n_pos, dtype=np.float64)
    n_neg = n_items - n_pos
    bad = np.flatnonzero((n_pos <= 0) | (n_neg <= 0))
    if bad.size:
        raise DegenerateGraph(int(n_pos[bad[0]]), n_items, user=int(bad[0]))
    Yc = 1.0 - Y
    pos_sum = np.einsum("bn,bn->b", Y, R)
    neg_sum = R.sum(axis=1) - pos_sum
    degree = Y / n_pos[:, None] + Yc / n_neg[:, None]
    scale = 1.0 / (n_pos * n_neg)
    return degree * R - (scale * neg_sum)[:, None] * Y - (scale * pos_sum)[:, None] * Yc

"""Input checks shared by the estimator front-end."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .data import InteractionMatrix
from .exceptions import IndexOutOfRange


def check_interactions(X, name="X", shape=None) -> InteractionMatrix:
    """Coerce ``X`` to an :class:`InteractionMatrix`.

    Accepts an ``InteractionMatrix``, a scipy sparse matrix or a dense
    array-like of shape (n_users, n_items). Every stored value must be 0
    or 1; explicit zeros are dropped.
    """
    if isinstance(X, InteractionMatrix):
        m = X
    else:
        if sp.issparse(X):
            A = sp.csr_matrix(X, dtype=np.float64)
        else:
            arr = np.asarray(X, dtype=np.float64)
            if arr.ndim != 2:
                raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
            A = sp.csr_matrix(arr)
        A.eliminate_zeros()
        if A.nnz and not np.all(A.data == 1.0):
            raise ValueError(f"{name} must be binary (0/1)")
        m = InteractionMatrix.from_csr(A)
    if shape is not None and (m.num_users, m.num_items) != tuple(shape):
        raise ValueError(
            f"{name} has shape {(m.num_users, m.num_items)}, expected {tuple(shape)}"
        )
    return m


def check_users(users, n_users) -> np.ndarray:
    """Validate user indices; ``None`` means every user."""
    if users is None:
        return np.arange(n_users)
    arr = np.atleast_1d(np.asarray(users))
    if arr.ndim != 1 or not np.issubdtype(arr.dtype, np.integer):
        raise ValueError("users must be a 1-D sequence of integer indices")
    if arr.size and (arr.min() < 0 or arr.max() >= n_users):
        raise IndexOutOfRange(f"user index out of range [0, {n_users})")
    return arr.astype(np.int64)

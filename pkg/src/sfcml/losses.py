"""Pairwise ranking losses: the sampling-free square loss and its oracles.

Scores are ``f_j = 2 <e_u, e_vj>``. On the sphere ``d(i, j) = 2R - f_j``,
so the pairwise square loss ``(lambda + d_j - d_k)^2`` equals
``(lambda - (f_j - f_k))^2`` and the per-user average over all
(positive, unobserved) pairs is the Laplacian quadratic form
``(f - lambda*y)^T L (f - lambda*y)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .exceptions import InvalidTriplet, TooLargeForNaive
from .laplacian import UserGraph, lap_rows_product, lap_vec_product, quadratic_form
from .model import EmbeddingModel, distance_matrix, distance_vector, score_vector

NAIVE_LIMIT = 2000


@dataclass(frozen=True)
class LossKind:
    kind: str = "square"
    margin: float = 1.0

    def __post_init__(self):
        if self.kind not in ("hinge", "square"):
            raise ValueError(f"loss kind must be 'hinge' or 'square', got {self.kind!r}")
        if not self.margin > 0:
            raise ValueError("margin must be positive")


def sfcml_user_loss(f, g: UserGraph, margin: float) -> float:
    """Average square loss over all of one user's (positive, unobserved) pairs, in O(N)."""
    f = np.asarray(f, dtype=np.float64)
    return quadratic_form(g, f - margin * g.y)


def sfcml_user_grads(
    model: EmbeddingModel, i: int, g: UserGraph, margin: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`sfcml_user_loss` w.r.t. ``e_u`` and ``W_v``.

    With ``r = f - margin*y`` and ``f = 2 W_v e_u`` the loss is ``r^T L r``,
    so ``dloss/df = 2 L r`` and the chain rule through ``f`` contributes
    another factor 2.

    Returns
    -------
    grad_user : ndarray of shape (d,)
    grad_items : ndarray of shape (N, d)
        Rank one: ``4 (L r) e_u^T``.
    """
    f = score_vector(model, i)
    lr = lap_vec_product(g, f - margin * g.y)
    grad_user = 4.0 * (model.item_weights.T @ lr)
    grad_items = 4.0 * np.outer(lr, model.user_weights[i])
    return grad_user, grad_items


def sfcml_batch(
    model: EmbeddingModel, users: np.ndarray, Y: np.ndarray, margin: float, n_pos=None
):
    """Per-user losses and summed gradients for a batch of users.

    Each user's loss gets weight 1; callers rescale. ``Y`` holds the 0/1
    preference rows of ``users`` in the same order.

    Returns
    -------
    losses : ndarray of shape (B,)
    grad_users : ndarray of shape (B, d)
    grad_items : ndarray of shape (N, d)
    """
    U = model.user_weights[users]
    F = 2.0 * (U @ model.item_weights.T)
    Rm = F - margin * Y
    LR = lap_rows_product(Y, Rm, n_pos)
    losses = np.einsum("bn,bn->b", Rm, LR)
    grad_users = 4.0 * (LR @ model.item_weights)
    grad_items = 4.0 * (LR.T @ U)
    return losses, grad_users, grad_items


def _pair_arrays(g: UserGraph):
    pos = np.flatnonzero(g.y == 1.0)
    neg = np.flatnonzero(g.y == 0.0)
    return pos, neg


def _naive_guard(g: UserGraph):
    if g.num_items > NAIVE_LIMIT:
        raise TooLargeForNaive(f"N={g.num_items} exceeds naive limit {NAIVE_LIMIT}")


def naive_pairwise_loss(model: EmbeddingModel, i: int, g: UserGraph, loss: LossKind) -> float:
    """Brute-force average of the pairwise loss over every (positive, unobserved) pair.

    Evaluated from squared distances, independently of the Laplacian route.
    """
    _naive_guard(g)
    d = distance_vector(model, i)
    pos, neg = _pair_arrays(g)
    total = 0.0
    for j in pos:
        gap = loss.margin + d[j] - d[neg]
        if loss.kind == "hinge":
            total += np.maximum(gap, 0.0).sum()
        else:
            total += (gap * gap).sum()
    return float(total / (g.n_pos * g.n_neg))


def naive_pairwise_grads(
    model: EmbeddingModel, i: int, g: UserGraph, loss: LossKind
) -> Tuple[np.ndarray, np.ndarray]:
    """Term-by-term gradients of the pairwise objective.

    The square loss is differentiated in its on-sphere score form
    ``(lambda - 2 e_u^T (e_vj - e_vk))^2``, the objective the Laplacian
    route optimizes. The hinge loss is differentiated in its distance form
    ``max(0, lambda + d_j - d_k)``; pairs exactly on the margin count as
    inactive.
    """
    _naive_guard(g)
    eu = model.user_weights[i]
    V = model.item_weights
    pos, neg = _pair_arrays(g)
    grad_user = np.zeros_like(eu)
    grad_items = np.zeros_like(V)
    norm = 1.0 / (g.n_pos * g.n_neg)
    if loss.kind == "square":
        f = 2.0 * (V @ eu)
        for j in pos:
            t = loss.margin - (f[j] - f[neg])
            c = 2.0 * t * norm
            # d/de_u: -2 (e_vj - e_vk) per pair
            grad_user += -2.0 * (c.sum() * V[j] - c @ V[neg])
            grad_items[j] += -2.0 * c.sum() * eu
            grad_items[neg] += 2.0 * c[:, None] * eu[None, :]
    else:
        d = distance_vector(model, i)
        for j in pos:
            active = (loss.margin + d[j] - d[neg]) > 0.0
            ks = neg[active]
            if ks.size == 0:
                continue
            w = norm
            grad_user += 2.0 * w * (V[ks].sum(0) - ks.size * V[j])
            grad_items[j] += 2.0 * w * ks.size * (V[j] - eu)
            grad_items[ks] += 2.0 * w * (eu[None, :] - V[ks])
    return grad_user, grad_items


def sampled_hinge_loss(
    model: EmbeddingModel,
    i: int,
    triplets: Sequence[Tuple[int, int]],
    margin: float,
    g: Optional[UserGraph] = None,
) -> float:
    """Mean hinge loss over sampled ``(positive, negative)`` item pairs for user ``i``.

    If the user's graph ``g`` is given, every pair is checked to be a real
    (positive, unobserved) pair.
    """
    triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 2)
    if triplets.shape[0] == 0:
        raise ValueError("triplets must be non-empty")
    if g is not None:
        if np.any(g.y[triplets[:, 1]] != 0.0):
            raise InvalidTriplet(f"user {i}: sampled negative is a positive item")
        if np.any(g.y[triplets[:, 0]] != 1.0):
            raise InvalidTriplet(f"user {i}: anchor item is not a positive")
    d = distance_vector(model, i)
    gap = margin + d[triplets[:, 0]] - d[triplets[:, 1]]
    return float(np.maximum(gap, 0.0).mean())


def hinge_triplet_batch(
    model: EmbeddingModel,
    users: np.ndarray,
    rows: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    weights: np.ndarray,
    margin: float,
):
    """Hinge losses and weighted subgradients for a batch of sampled triplets.

    ``users`` lists the batch's distinct users; triplet ``t`` belongs to
    ``users[rows[t]]`` and compares items ``pos[t]`` and ``neg[t]``.
    Distances come from one dense (B, N) matrix, so no per-triplet
    embedding copies are made.

    Returns
    -------
    hinge : ndarray of shape (T,)
    grad_users : ndarray of shape (B, d)
        Row ``b`` is the gradient for ``users[b]``.
    grad_items : ndarray of shape (N, d)
    """
    V = model.item_weights
    Ub = model.user_weights[users]
    N = V.shape[0]
    D = distance_matrix(model, users)
    hinge = np.maximum(margin + D[rows, pos] - D[rows, neg], 0.0)
    w = np.where(hinge > 0.0, weights, 0.0)

    # with A[b, k] += w and A[b, j] -= w over active triplets:
    #   grad_u = 2 A V,  grad_v = 2 A^T U_b - 2 colsum(A) * V
    A = sp.csr_matrix(
        (np.concatenate([w, -w]), (np.concatenate([rows, rows]), np.concatenate([neg, pos]))),
        shape=(len(users), N),
    )
    A.sum_duplicates()
    grad_users = 2.0 * (A @ V)
    col = np.asarray(A.sum(axis=0)).ravel()
    grad_items = 2.0 * (A.T @ Ub) - 2.0 * col[:, None] * V
    return hinge, grad_users, grad_items

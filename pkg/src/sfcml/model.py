"""User/item embedding tables constrained to a hypersphere."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .exceptions import IndexOutOfRange, InsufficientItems

INIT_STD = 0.01
_DEGENERATE_NORM = 1e-12
_ON_SPHERE_RTOL = 1e-15
CHECKPOINT_MAGIC = "sfcml-embeddings"
CHECKPOINT_VERSION = "v1"


@dataclass
class EmbeddingModel:
    """Embedding tables ``W_u`` (M x d) and ``W_v`` (N x d).

    ``radius`` is the squared norm every row is projected to, so the rows
    live on the sphere of Euclidean radius ``sqrt(radius)``.
    """

    user_weights: np.ndarray
    item_weights: np.ndarray
    radius: float = 1.0

    def __post_init__(self):
        self.user_weights = np.ascontiguousarray(self.user_weights, dtype=np.float64)
        self.item_weights = np.ascontiguousarray(self.item_weights, dtype=np.float64)
        if self.user_weights.ndim != 2 or self.item_weights.ndim != 2:
            raise ValueError("weight tables must be 2-D")
        if self.user_weights.shape[1] != self.item_weights.shape[1]:
            raise ValueError("user and item tables must share the embedding dimension")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def num_users(self) -> int:
        return self.user_weights.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_weights.shape[0]

    @property
    def dim(self) -> int:
        return self.user_weights.shape[1]

    @classmethod
    def initialize(cls, num_users, num_items, dim, radius=1.0, rng=None) -> "EmbeddingModel":
        """Gaussian(0, 0.01) entries projected onto the sphere."""
        rng = np.random.default_rng(rng)
        model = cls(
            rng.normal(0.0, INIT_STD, size=(num_users, dim)),
            rng.normal(0.0, INIT_STD, size=(num_items, dim)),
            radius,
        )
        return project_to_sphere(model, "both", rng=rng)

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.user_weights.copy(), self.item_weights.copy(), self.radius)

    def _check_user(self, i):
        if not 0 <= i < self.num_users:
            raise IndexOutOfRange(f"user index {i} outside [0, {self.num_users})")

    def _check_item(self, j):
        if not 0 <= j < self.num_items:
            raise IndexOutOfRange(f"item index {j} outside [0, {self.num_items})")


def _project_rows(w: np.ndarray, radius: float, rng) -> None:
    target = np.sqrt(radius)
    norms = np.linalg.norm(w, axis=1)
    bad = norms < _DEGENERATE_NORM
    if bad.any():
        rng = np.random.default_rng(rng)
        while bad.any():
            w[bad] = rng.normal(0.0, INIT_STD, size=(int(bad.sum()), w.shape[1]))
            norms = np.linalg.norm(w, axis=1)
            bad = norms < _DEGENERATE_NORM
    # rows already on the sphere are left bit-for-bit unchanged
    off = np.abs(norms / target - 1.0) > _ON_SPHERE_RTOL
    w[off] *= (target / norms[off])[:, None]


def project_to_sphere(model: EmbeddingModel, which: str = "both", rng=0) -> EmbeddingModel:
    """Rescale rows in place to squared norm ``model.radius``.

    Rows with (near) zero norm are redrawn from the initialization
    distribution first. ``rng`` seeds that redraw; it is untouched when no
    row is degenerate.
    """
    if which not in ("users", "items", "both"):
        raise ValueError(f"which must be 'users', 'items' or 'both', got {which!r}")
    if which in ("users", "both"):
        _project_rows(model.user_weights, model.radius, rng)
    if which in ("items", "both"):
        _project_rows(model.item_weights, model.radius, rng)
    return model


def score_vector(model: EmbeddingModel, i: int) -> np.ndarray:
    """``f_j = 2 <e_u, e_vj>`` for every item j."""
    model._check_user(i)
    return 2.0 * (model.item_weights @ model.user_weights[i])


def score_matrix(model: EmbeddingModel, users=None) -> np.ndarray:
    u = model.user_weights if users is None else model.user_weights[np.asarray(users)]
    return 2.0 * (u @ model.item_weights.T)


def distance(model: EmbeddingModel, i: int, j: int) -> float:
    """Squared Euclidean distance between user ``i`` and item ``j``."""
    model._check_user(i)
    model._check_item(j)
    diff = model.user_weights[i] - model.item_weights[j]
    return float(diff @ diff)


def distance_vector(model: EmbeddingModel, i: int) -> np.ndarray:
    model._check_user(i)
    diff = model.item_weights - model.user_weights[i]
    return np.einsum("ij,ij->i", diff, diff)


def distance_matrix(model: EmbeddingModel, users=None) -> np.ndarray:
    u = model.user_weights if users is None else model.user_weights[np.asarray(users)]
    v = model.item_weights
    d = (u * u).sum(1)[:, None] + (v * v).sum(1)[None, :] - 2.0 * (u @ v.T)
    return np.maximum(d, 0.0)


def top_k_from_scores(scores: np.ndarray, k: int, mask: Optional[Iterable[int]] = None) -> np.ndarray:
    """Indices of the ``k`` best unmasked scores, ties broken by lower index."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    allowed = np.ones(n, dtype=bool)
    if mask is not None:
        m = np.fromiter(mask, dtype=np.int64) if not isinstance(mask, np.ndarray) else mask
        allowed[m] = False
    candidates = np.flatnonzero(allowed)
    if candidates.size < k:
        raise InsufficientItems(f"only {candidates.size} unmasked items, need {k}")
    # stable sort on negated score keeps ascending index order within ties
    order = np.argsort(-scores[candidates], kind="stable")
    return candidates[order[:k]]


def rank_top_k(model: EmbeddingModel, i: int, k: int, mask=None) -> np.ndarray:
    """Recommend the ``k`` closest unmasked items to user ``i``."""
    return top_k_from_scores(-distance_vector(model, i), k, mask)


def save_checkpoint(model: EmbeddingModel, path) -> None:
    """Write the text checkpoint (17 significant digits, exact round trip)."""
    M, N, d = model.num_users, model.num_items, model.dim
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} {M} {N} {d} {model.radius!r}\n")
        for table in (model.user_weights, model.item_weights):
            for row in table:
                fh.write("\t".join(format(x, ".17g") for x in row.tolist()))
                fh.write("\n")


def load_checkpoint(path) -> EmbeddingModel:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 6 or header[0] != CHECKPOINT_MAGIC or header[1] != CHECKPOINT_VERSION:
            raise ValueError(f"not an sfcml checkpoint: {path}")
        M, N, d = int(header[2]), int(header[3]), int(header[4])
        radius = float(header[5])
        rows = []
        for _ in range(M + N):
            line = fh.readline()
            if not line:
                raise ValueError(f"truncated checkpoint: {path}")
            rows.append([float(x) for x in line.rstrip("\n").split("\t")])
    arr = np.array(rows, dtype=np.float64).reshape(M + N, d)
    return EmbeddingModel(arr[:M], arr[M:], radius)

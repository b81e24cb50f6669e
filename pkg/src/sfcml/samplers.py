"""Negative samplers for the sampling-based CML baselines and the TV bias diagnostic."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Union

import numpy as np

from .exceptions import InvalidSample, MismatchedSpace, NotEnoughNegatives
from .laplacian import UserGraph
from .model import EmbeddingModel, distance_vector

SAMPLER_KINDS = ("uniform", "popularity", "two_stage", "hard")

_DEFAULT_MULTIPLIER = {"uniform": 1, "popularity": 1, "two_stage": 5, "hard": 10}


@dataclass(frozen=True)
class SamplerKind:
    """Configuration of a negative sampler.

    ``replace`` controls whether the per-positive draw may repeat an item.
    It defaults to ``True`` for ``popularity`` (frequency-proportional
    draws with replacement) and ``False`` otherwise. Candidate sets of
    ``two_stage`` and ``hard`` are always drawn without replacement.
    """

    kind: str = "uniform"
    n_negatives: int = 1
    candidate_multiplier: Optional[int] = None
    replace: Optional[bool] = None

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler {self.kind!r}; choose from {SAMPLER_KINDS}")
        if self.n_negatives < 1:
            raise ValueError("n_negatives must be >= 1")
        if self.candidate_multiplier is None:
            object.__setattr__(self, "candidate_multiplier", _DEFAULT_MULTIPLIER[self.kind])
        if self.candidate_multiplier < 1:
            raise ValueError("candidate_multiplier must be >= 1")
        if self.replace is None:
            object.__setattr__(self, "replace", self.kind == "popularity")

    @property
    def U(self) -> int:
        return self.n_negatives


def _floyd(rng, n_rows, n_pool, size):
    # Floyd's algorithm, vectorized over rows: uniform random size-subsets
    out = np.empty((n_rows, size), dtype=np.int64)
    for c, t in enumerate(range(n_pool - size, n_pool)):
        r = rng.integers(0, t + 1, size=n_rows)
        taken = (out[:, :c] == r[:, None]).any(axis=1) if c else np.zeros(n_rows, bool)
        out[:, c] = np.where(taken, t, r)
    return out


def _uniform_without(rng, n_rows, n_pool, size):
    if 8 * size <= n_pool:
        return _floyd(rng, n_rows, n_pool, size)
    keys = rng.random((n_rows, n_pool))
    if size == n_pool:
        return np.argsort(keys, axis=1)
    return np.argpartition(keys, size - 1, axis=1)[:, :size]


def _weighted_without(rng, n_rows, weights, size):
    # Gumbel top-k == successive sampling without replacement, p ~ weights
    keys = np.log(weights)[None, :] + rng.gumbel(size=(n_rows, weights.shape[0]))
    if size == weights.shape[0]:
        return np.argsort(-keys, axis=1)
    return np.argpartition(-keys, size - 1, axis=1)[:, :size]


def _top_rows(values, size):
    """Column indices of the ``size`` largest entries per row, ties to lower index."""
    order = np.argsort(-values, axis=1, kind="stable")
    return order[:, :size]


def sample_user_negatives(
    kind: SamplerKind,
    model: Optional[EmbeddingModel],
    i: int,
    g: UserGraph,
    popularity: Optional[np.ndarray],
    rng,
    positives: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Draw ``U`` negatives for each of user ``i``'s positives.

    Parameters
    ----------
    positives : ndarray, optional
        Anchor items, one output row each. Defaults to all positives of
        ``g`` in ascending order.

    Returns
    -------
    ndarray of shape (len(positives), U)
        Item indices, none of them positive for the user.
    """
    rng = np.random.default_rng(rng)
    U = kind.n_negatives
    neg_pool = np.flatnonzero(g.y == 0.0)
    n_neg = neg_pool.size
    if positives is None:
        positives = np.flatnonzero(g.y == 1.0)
    positives = np.asarray(positives, dtype=np.int64)
    P = positives.size
    distinct = not kind.replace or kind.kind in ("two_stage", "hard")
    if n_neg < U and distinct:
        raise NotEnoughNegatives(n_neg, U, user=i)
    if n_neg == 0:
        raise NotEnoughNegatives(n_neg, U, user=i)

    if kind.kind in ("popularity", "two_stage"):
        if popularity is None:
            raise ValueError(f"{kind.kind} sampling needs item popularity counts")
        weights = np.asarray(popularity, dtype=np.float64)[neg_pool] + 1.0

    if kind.kind == "uniform":
        if kind.replace:
            return neg_pool[rng.integers(0, n_neg, size=(P, U))]
        return neg_pool[_uniform_without(rng, P, n_neg, U)]

    if kind.kind == "popularity":
        if kind.replace:
            return rng.choice(neg_pool, size=(P, U), replace=True, p=weights / weights.sum())
        return neg_pool[_weighted_without(rng, P, weights, U)]

    if model is None:
        raise ValueError(f"{kind.kind} sampling needs the current model")
    C = min(U * kind.candidate_multiplier, n_neg)

    if kind.kind == "two_stage":
        cand = neg_pool[_weighted_without(rng, P, weights, C)]
        V = model.item_weights
        inner = np.einsum("pcd,pd->pc", V[cand], V[positives])
        pick = _top_rows(inner, U)
        return np.take_along_axis(cand, pick, axis=1)

    cand = neg_pool[_uniform_without(rng, P, n_neg, C)]
    d = distance_vector(model, i)
    pick = _top_rows(-d[cand], U)
    return np.take_along_axis(cand, pick, axis=1)


def sample_negatives(kind, model, i, j, g, popularity=None, rng=None) -> np.ndarray:
    """Draw ``U`` negatives for the single positive pair ``(user i, item j)``."""
    if g.y[j] != 1.0:
        raise InvalidSample(f"item {j} is not a positive of user {i}")
    return sample_user_negatives(kind, model, i, g, popularity, rng, positives=np.array([j]))[0]


@dataclass(frozen=True)
class SamplingDistribution:
    """Probability over one user's (positive, unobserved) pairs.

    ``support`` is an (S, 2) array of ``(j, k)`` item pairs with ``mass``
    per row. ``support=None`` denotes the uniform distribution over all
    ``n_pos * n_neg`` pairs.
    """

    support: Optional[np.ndarray]
    mass: Optional[np.ndarray]
    n_pos: int
    n_neg: int

    @property
    def is_full_uniform(self) -> bool:
        return self.support is None


def uniform_distribution(g: UserGraph) -> SamplingDistribution:
    return SamplingDistribution(None, None, g.n_pos, g.n_neg)


def induced_distribution(
    samples: Union[np.ndarray, Mapping[int, np.ndarray]], g: UserGraph
) -> SamplingDistribution:
    """Empirical pair distribution induced by sampled negatives.

    ``samples`` is either a mapping ``positive item -> negatives`` or an
    array whose rows align with the user's positives in ascending order.
    Every realized pair gets mass ``1 / (n_pos * U)``; repeated pairs sum.
    """
    positives = np.flatnonzero(g.y == 1.0)
    if isinstance(samples, Mapping):
        if sorted(int(k) for k in samples) != positives.tolist():
            raise InvalidSample("every positive must appear exactly once")
        rows = [np.asarray(samples[int(j)], dtype=np.int64) for j in positives]
        if len({r.size for r in rows}) != 1:
            raise InvalidSample("every positive needs the same number of negatives")
        samples = np.vstack(rows)
    samples = np.asarray(samples, dtype=np.int64)
    if samples.ndim != 2 or samples.shape[0] != positives.size:
        raise InvalidSample(
            f"expected one row per positive ({positives.size}), got shape {samples.shape}"
        )
    U = samples.shape[1]
    if U < 1:
        raise InvalidSample("no negatives sampled")
    if np.any(g.y[samples] != 0.0):
        raise InvalidSample("a sampled negative is a positive item")

    N = g.num_items
    codes = (np.repeat(positives, U) * N + samples.ravel()).astype(np.int64)
    uniq, counts = np.unique(codes, return_counts=True)
    support = np.stack([uniq // N, uniq % N], axis=1)
    mass = counts / float(positives.size * U)
    return SamplingDistribution(support, mass, g.n_pos, g.n_neg)


def _unit(x) -> float:
    # rounding can push a sum of masses a hair past the bound
    return float(min(max(x, 0.0), 1.0))


def total_variation(p_hat: SamplingDistribution, p_tilde: SamplingDistribution) -> float:
    """Half the L1 distance between two pair distributions of the same user."""
    if (p_hat.n_pos, p_hat.n_neg) != (p_tilde.n_pos, p_tilde.n_neg):
        raise MismatchedSpace(
            f"pair spaces differ: {(p_hat.n_pos, p_hat.n_neg)} vs {(p_tilde.n_pos, p_tilde.n_neg)}"
        )
    n_pairs = p_hat.n_pos * p_hat.n_neg
    if p_hat.is_full_uniform and p_tilde.is_full_uniform:
        return 0.0
    if p_hat.is_full_uniform or p_tilde.is_full_uniform:
        sparse = p_tilde if p_hat.is_full_uniform else p_hat
        u = 1.0 / n_pairs
        covered = np.abs(sparse.mass - u).sum()
        uncovered = (n_pairs - sparse.mass.size) * u
        return _unit(0.5 * (covered + uncovered))

    width = int(max(p_hat.support.max(), p_tilde.support.max())) + 1
    a = p_hat.support[:, 0] * width + p_hat.support[:, 1]
    b = p_tilde.support[:, 0] * width + p_tilde.support[:, 1]
    keys = np.concatenate([a, b])
    vals = np.concatenate([p_hat.mass, -p_tilde.mass])
    uniq, inv = np.unique(keys, return_inverse=True)
    diff = np.zeros(uniq.size)
    np.add.at(diff, inv, vals)
    return _unit(0.5 * np.abs(diff).sum())


def user_total_variation(kind, model, i, g, popularity=None, rng=None) -> float:
    """Draw one round of negatives for user ``i`` and report its TV to the full distribution."""
    samples = sample_user_negatives(kind, model, i, g, popularity, rng)
    return total_variation(uniform_distribution(g), induced_distribution(samples, g))

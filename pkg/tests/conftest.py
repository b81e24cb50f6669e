from pathlib import Path

import numpy as np
import pytest

from sfcml.data import InteractionMatrix, split_per_user
from sfcml.model import EmbeddingModel, project_to_sphere

ML100K = Path(__file__).resolve().parents[1] / "data" / "ml-100k" / "u.data"


def random_interactions(rng, M, N, lo=5, hi=None):
    """Random positives with lo <= n_pos <= hi < N for every user."""
    hi = N - 1 if hi is None else hi
    pos = [np.sort(rng.choice(N, int(rng.integers(lo, hi + 1)), replace=False)) for _ in range(M)]
    return InteractionMatrix(M, N, pos)


def random_model(rng, M, N, d, radius=1.0):
    m = EmbeddingModel(rng.normal(size=(M, d)), rng.normal(size=(N, d)), radius)
    return project_to_sphere(m, "both")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_split(rng):
    m = random_interactions(rng, 12, 30, lo=5, hi=15)
    return split_per_user(m, (0.6, 0.2, 0.2), seed=3)


def write_ratings(path, rows, delimiter="\t"):
    path.write_text("\n".join(delimiter.join(str(x) for x in r) for r in rows) + "\n", encoding="utf-8")
    return path

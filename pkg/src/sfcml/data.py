"""Rating ingestion, implicit-feedback binarization, filtering and splitting.

The pipeline is::

    parse_ratings -> binarize -> filter_and_reindex -> split_per_user

Every step is a pure function of its inputs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .exceptions import EmptyDataset, InsufficientInteractions, MalformedLine

logger = logging.getLogger(__name__)

DOUBLE_COLON = "::"

PARTS = ("train", "val", "test")


@dataclass(frozen=True)
class RawRating:
    user_token: str
    item_token: str
    rating: float
    timestamp: Optional[int] = None


@dataclass
class InteractionMatrix:
    """Dense-indexed implicit feedback.

    ``positives[i]`` is the strictly increasing array of item indices that
    user ``i`` interacted with.
    """

    num_users: int
    num_items: int
    positives: List[np.ndarray]
    user_index: Dict[str, int] = field(default_factory=dict)
    item_index: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.positives = [np.asarray(p, dtype=np.int64) for p in self.positives]
        if len(self.positives) != self.num_users:
            raise ValueError(
                f"expected {self.num_users} positive lists, got {len(self.positives)}"
            )

    @property
    def n_pos(self) -> np.ndarray:
        return np.array([len(p) for p in self.positives], dtype=np.int64)

    @property
    def n_neg(self) -> np.ndarray:
        return self.num_items - self.n_pos

    @property
    def nnz(self) -> int:
        return int(self.n_pos.sum())

    @property
    def user_tokens(self) -> List[str]:
        inv = [""] * self.num_users
        for tok, idx in self.user_index.items():
            inv[idx] = tok
        return inv

    @property
    def item_tokens(self) -> List[str]:
        inv = [""] * self.num_items
        for tok, idx in self.item_index.items():
            inv[idx] = tok
        return inv

    def to_csr(self) -> sp.csr_matrix:
        indptr = np.zeros(self.num_users + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(self.n_pos)
        indices = (
            np.concatenate(self.positives) if self.num_users else np.zeros(0, np.int64)
        )
        data = np.ones(len(indices), dtype=np.float64)
        return sp.csr_matrix((data, indices, indptr), shape=(self.num_users, self.num_items))

    def label_matrix(self, users: Optional[Sequence[int]] = None) -> np.ndarray:
        """Dense 0/1 matrix of preferences for ``users`` (all users by default)."""
        if users is None:
            users = range(self.num_users)
        users = list(users)
        y = np.zeros((len(users), self.num_items), dtype=np.float64)
        for row, u in enumerate(users):
            y[row, self.positives[u]] = 1.0
        return y

    def item_counts(self) -> np.ndarray:
        counts = np.zeros(self.num_items, dtype=np.int64)
        for p in self.positives:
            counts[p] += 1
        return counts

    @classmethod
    def from_csr(cls, X) -> "InteractionMatrix":
        X = sp.csr_matrix(X)
        X.sum_duplicates()
        X.eliminate_zeros()
        X.sort_indices()
        positives = [X.indices[X.indptr[u] : X.indptr[u + 1]].copy() for u in range(X.shape[0])]
        return cls(X.shape[0], X.shape[1], positives)


@dataclass
class DatasetSplit:
    train: InteractionMatrix
    validation: List[np.ndarray]
    test: List[np.ndarray]

    @property
    def num_users(self) -> int:
        return self.train.num_users

    @property
    def num_items(self) -> int:
        return self.train.num_items

    def part(self, name: str) -> List[np.ndarray]:
        if name == "train":
            return self.train.positives
        if name in ("val", "validation"):
            return self.validation
        if name == "test":
            return self.test
        raise ValueError(f"unknown split part: {name}")


def parse_ratings(path, delimiter: str = "\t") -> List[RawRating]:
    """Read a delimited ratings file.

    Parameters
    ----------
    path : path-like
        UTF-8 text file, one ``user<d>item<d>rating[<d>timestamp]`` record per line.
    delimiter : str
        A single character, or ``"::"`` for MovieLens-1m style files.

    Returns
    -------
    list of RawRating
        One record per non-empty, non-comment line, in file order.
    """
    if delimiter != DOUBLE_COLON and len(delimiter) != 1:
        raise ValueError(f"delimiter must be one character or '::', got {delimiter!r}")
    out: List[RawRating] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split(delimiter)
            if len(fields) not in (3, 4):
                raise MalformedLine(lineno, f"expected 3 or 4 fields, got {len(fields)}")
            user, item, rating_text = fields[0], fields[1], fields[2]
            if not user or not item:
                raise MalformedLine(lineno, "empty user or item token")
            try:
                rating = float(rating_text)
            except ValueError:
                raise MalformedLine(lineno, f"non-numeric rating {rating_text!r}") from None
            if not math.isfinite(rating):
                raise MalformedLine(lineno, "rating is not finite")
            ts = None
            if len(fields) == 4:
                try:
                    ts = int(fields[3])
                except ValueError:
                    raise MalformedLine(lineno, f"bad timestamp {fields[3]!r}") from None
            out.append(RawRating(user, item, rating, ts))
    return out


def binarize(ratings: Sequence[RawRating], threshold: float = 4.0) -> List[Tuple[str, str]]:
    """Keep ``(user, item)`` pairs rated at least ``threshold``, deduplicated in first-seen order."""
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    seen = set()
    pairs = []
    for r in ratings:
        if r.rating >= threshold:
            key = (r.user_token, r.item_token)
            if key not in seen:
                seen.add(key)
                pairs.append(key)
    return pairs


def filter_and_reindex(pairs: Sequence[Tuple[str, str]], min_interactions: int = 5) -> InteractionMatrix:
    """Drop sparse users and assign dense indices in first-appearance order.

    A user who is positive on every retained item is also dropped (with a
    warning); this is repeated until no such user remains, since removing
    one can shrink the item set.
    """
    if min_interactions < 1:
        raise ValueError("min_interactions must be >= 1")
    by_user: Dict[str, List[str]] = {}
    for u, i in pairs:
        by_user.setdefault(u, []).append(i)
    kept = {u for u, items in by_user.items() if len(set(items)) >= min_interactions}

    while True:
        items = {i for u, i in pairs if u in kept}
        full = {u for u in kept if len(set(by_user[u])) >= len(items)}
        if not full:
            break
        for u in sorted(full):
            logger.warning("dropping user %s: positive on all %d items", u, len(items))
        kept -= full

    if not kept:
        raise EmptyDataset(f"no user has at least {min_interactions} interactions")

    user_index: Dict[str, int] = {}
    item_index: Dict[str, int] = {}
    per_user: List[set] = []
    for u, i in pairs:
        if u not in kept:
            continue
        if u not in user_index:
            user_index[u] = len(user_index)
            per_user.append(set())
        if i not in item_index:
            item_index[i] = len(item_index)
        per_user[user_index[u]].add(item_index[i])

    positives = [np.array(sorted(s), dtype=np.int64) for s in per_user]
    return InteractionMatrix(len(user_index), len(item_index), positives, user_index, item_index)


def _part_size(ratio: float, n: int) -> int:
    # guard against e.g. 0.29 * 100 == 28.999999999999996
    return max(1, int(math.floor(ratio * n + 1e-9)))


def split_per_user(
    m: InteractionMatrix,
    ratios: Tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> DatasetSplit:
    """Shuffle each user's positives and cut them into train/validation/test.

    Validation and test each receive ``max(1, floor(ratio * n))`` items and
    the remainder goes to train. The shuffle for user ``i`` is driven by a
    generator seeded with ``(seed, i)`` so the split does not depend on
    processing order.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    _, val_ratio, test_ratio = ratios

    train, val, test = [], [], []
    for u, pos in enumerate(m.positives):
        n = len(pos)
        n_val = _part_size(val_ratio, n)
        n_test = _part_size(test_ratio, n)
        if n - n_val - n_test < 1:
            raise InsufficientInteractions(u, n)
        rng = np.random.default_rng([seed, u])
        perm = rng.permutation(pos)
        val.append(np.sort(perm[:n_val]))
        test.append(np.sort(perm[n_val : n_val + n_test]))
        train.append(np.sort(perm[n_val + n_test :]))

    train_m = InteractionMatrix(
        m.num_users, m.num_items, train, dict(m.user_index), dict(m.item_index)
    )
    return DatasetSplit(train_m, val, test)


def write_split_manifest(split: DatasetSplit, path) -> None:
    """Write ``user_index, item_index, part`` rows as TSV."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_index\titem_index\tpart\n")
        for u in range(split.num_users):
            for part, items in zip(PARTS, (split.train.positives[u], split.validation[u], split.test[u])):
                for i in items:
                    fh.write(f"{u}\t{int(i)}\t{part}\n")


def read_split_manifest(path, num_users: Optional[int] = None, num_items: Optional[int] = None) -> DatasetSplit:
    rows: Dict[str, List[Tuple[int, int]]] = {p: [] for p in PARTS}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["user_index", "item_index", "part"]:
            raise ValueError(f"unexpected split manifest header: {header}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3 or fields[2] not in rows:
                raise MalformedLine(lineno, "expected user_index, item_index, part")
            rows[fields[2]].append((int(fields[0]), int(fields[1])))

    all_rows = [r for part in rows.values() for r in part]
    M = num_users if num_users is not None else 1 + max(u for u, _ in all_rows)
    N = num_items if num_items is not None else 1 + max(i for _, i in all_rows)

    def collect(part):
        lists = [[] for _ in range(M)]
        for u, i in rows[part]:
            lists[u].append(i)
        return [np.array(sorted(x), dtype=np.int64) for x in lists]

    return DatasetSplit(InteractionMatrix(M, N, collect("train")), collect("val"), collect("test"))


def load_dataset(
    path,
    delimiter: str = "\t",
    threshold: float = 4.0,
    min_interactions: int = 5,
) -> InteractionMatrix:
    """Convenience wrapper running parse, binarize and filter in sequence."""
    return filter_and_reindex(binarize(parse_ratings(path, delimiter), threshold), min_interactions)

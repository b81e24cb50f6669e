"""Top-K and full-ranking evaluation metrics with binary relevance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .exceptions import DegenerateCandidates, EmptyRelevantSet, NoEvaluableUsers


def _relevant_set(relevant) -> set:
    rel = {int(x) for x in relevant}
    if not rel:
        raise EmptyRelevantSet("relevant set is empty")
    return rel


def _hits(ranking: Sequence[int], relevant: set) -> np.ndarray:
    return np.fromiter((int(x) in relevant for x in ranking), dtype=bool, count=len(ranking))


def precision_at_k(topk, relevant, k: int) -> float:
    topk = list(topk)[:k]
    rel = {int(x) for x in relevant}
    return float(_hits(topk, rel).sum()) / k


def recall_at_k(topk, relevant, k: int) -> float:
    rel = _relevant_set(relevant)
    return float(_hits(list(topk)[:k], rel).sum()) / len(rel)


def ndcg_at_k(topk, relevant, k: int) -> float:
    rel = _relevant_set(relevant)
    hits = _hits(list(topk)[:k], rel)
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    dcg = float(discounts[: hits.size][hits].sum())
    idcg = float(discounts[: min(k, len(rel))].sum())
    return dcg / idcg


def average_precision(full_ranking, relevant) -> float:
    """Mean over relevant items of (relevant items up to its rank) / rank."""
    rel = _relevant_set(relevant)
    hits = _hits(list(full_ranking), rel)
    ranks = np.flatnonzero(hits) + 1
    if ranks.size == 0:
        return 0.0
    return float((np.arange(1, ranks.size + 1) / ranks).sum() / len(rel))


def reciprocal_rank_sum(full_ranking, relevant) -> float:
    """Sum of ``1/rank`` over *all* relevant items (not only the first hit)."""
    rel = _relevant_set(relevant)
    ranks = np.flatnonzero(_hits(list(full_ranking), rel)) + 1
    return float((1.0 / ranks).sum())


def user_auc(scores, relevant) -> float:
    """Probability a relevant candidate outscores a non-relevant one, ties count half.

    ``scores`` covers the candidate set; ``relevant`` holds positions into
    it (or a boolean mask of the same length). Uses the Mann-Whitney rank
    sum, O(n log n).
    """
    scores = np.asarray(scores, dtype=np.float64)
    is_rel = np.zeros(scores.shape[0], dtype=bool)
    rel = np.asarray(relevant)
    if rel.dtype == bool:
        is_rel = rel.copy()
    else:
        is_rel[rel.astype(np.int64)] = True
    n_pos = int(is_rel.sum())
    n_neg = scores.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateCandidates(f"need relevant and non-relevant candidates, got {n_pos}/{n_neg}")
    ranks = rankdata(scores)  # average ranks for ties
    u_stat = ranks[is_rel].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


@dataclass
class MetricsReport:
    precision_at: Dict[int, float] = field(default_factory=dict)
    recall_at: Dict[int, float] = field(default_factory=dict)
    ndcg_at: Dict[int, float] = field(default_factory=dict)
    map_score: float = 0.0
    mrr_score: float = 0.0
    auc_score: float = 0.0
    users_evaluated: int = 0

    def rows(self):
        for k in sorted(self.precision_at):
            yield "precision", str(k), self.precision_at[k]
        for k in sorted(self.recall_at):
            yield "recall", str(k), self.recall_at[k]
        for k in sorted(self.ndcg_at):
            yield "ndcg", str(k), self.ndcg_at[k]
        yield "map", "-", self.map_score
        yield "mrr", "-", self.mrr_score
        yield "auc", "-", self.auc_score

    def to_tsv(self) -> str:
        lines = ["metric\tk\tvalue"]
        lines += [f"{m}\t{k}\t{v:.6f}" for m, k, v in self.rows()]
        lines.append(f"users_evaluated\t-\t{self.users_evaluated}")
        return "\n".join(lines) + "\n"

    def write_tsv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_tsv())

    @classmethod
    def from_tsv(cls, text: str) -> "MetricsReport":
        rep = cls()
        for line in text.strip().splitlines()[1:]:
            metric, k, value = line.split("\t")
            if metric == "users_evaluated":
                rep.users_evaluated = int(value)
            elif metric in ("precision", "recall", "ndcg"):
                getattr(rep, f"{metric}_at")[int(k)] = float(value)
            else:
                setattr(rep, f"{metric}_score", float(value))
        return rep


@dataclass
class UserMetrics:
    precision_at: Dict[int, float]
    recall_at: Dict[int, float]
    ndcg_at: Dict[int, float]
    ap: float
    rr_sum: float
    auc: float


def aggregate_report(per_user: Iterable[UserMetrics]) -> MetricsReport:
    """Unweighted mean over users; ``None`` entries (no relevant items) are skipped."""
    users: List[UserMetrics] = [u for u in per_user if u is not None]
    if not users:
        raise NoEvaluableUsers("no user has a non-empty relevant set")
    ks = sorted(users[0].precision_at)

    def mean(values):
        return float(np.mean(np.fromiter(values, dtype=np.float64)))

    return MetricsReport(
        precision_at={k: mean(u.precision_at[k] for u in users) for k in ks},
        recall_at={k: mean(u.recall_at[k] for u in users) for k in ks},
        ndcg_at={k: mean(u.ndcg_at[k] for u in users) for k in ks},
        map_score=mean(u.ap for u in users),
        mrr_score=mean(u.rr_sum for u in users),
        auc_score=mean(u.auc for u in users),
        users_evaluated=len(users),
    )


def evaluate_user(scores, candidates, relevant, ks: Sequence[int]) -> UserMetrics:
    """All metrics for one user.

    Parameters
    ----------
    scores : ndarray of shape (N,)
        Higher is better.
    candidates : ndarray of int
        Items eligible for ranking (unmasked), ascending.
    relevant : array of int
        Ground-truth items; must be a subset of ``candidates``.
    """
    cand_scores = np.asarray(scores, dtype=np.float64)[candidates]
    order = np.argsort(-cand_scores, kind="stable")
    ranking = candidates[order]
    rel = set(int(x) for x in relevant)
    rel_arr = np.fromiter(rel, dtype=np.int64)
    hits = np.isin(ranking, rel_arr)
    n_rel = len(rel)
    ranks = np.flatnonzero(hits) + 1
    discounts = 1.0 / np.log2(np.arange(2, max(ks) + 2))

    prec, rec, ndcg = {}, {}, {}
    for k in ks:
        h = hits[:k]
        n_hit = int(h.sum())
        prec[k] = n_hit / k
        rec[k] = n_hit / n_rel
        ndcg[k] = float(discounts[: h.size][h].sum() / discounts[: min(k, n_rel)].sum())
    ap = float((np.arange(1, ranks.size + 1) / ranks).sum() / n_rel) if ranks.size else 0.0
    rr = float((1.0 / ranks).sum())
    auc = user_auc(cand_scores, np.isin(candidates, rel_arr))
    return UserMetrics(prec, rec, ndcg, ap, rr, auc)

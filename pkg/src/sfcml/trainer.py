"""Training loops (sampling-free and negative-sampling CML), Adagrad, early stopping, evaluation."""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import rankdata

from .data import DatasetSplit, InteractionMatrix
from .exceptions import DegenerateCandidates, NoEvaluableUsers
from .laplacian import UserGraph
from .losses import hinge_triplet_batch, sfcml_batch
from .metrics import MetricsReport, aggregate_report, evaluate_user, user_auc
from .model import EmbeddingModel, distance_matrix, project_to_sphere
from .samplers import SamplerKind, sample_user_negatives

logger = logging.getLogger(__name__)

ADAGRAD_EPS = 1e-8
LEARNING_RATE_GRID = (0.001, 0.003, 0.005, 0.01, 0.03, 0.05)
MARGIN_GRID = (1.0, 1.5, 2.0)
DEFAULT_KS = (3, 5, 10, 20)

# sub-streams of the run seed
_INIT_STREAM = 0
_SHUFFLE_STREAM = 1
_SAMPLER_STREAM = 2
_PROJECT_STREAM = 3


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 256
    margin: float = 1.0
    dim: int = 256
    radius: float = 1.0
    patience: int = 15
    improvement_epsilon: float = 1e-5
    seed: int = 0
    method: str = "sfcml"
    sampler: SamplerKind = field(default_factory=SamplerKind)
    sequential: bool = False

    def __post_init__(self):
        if self.method not in ("sfcml", "sampled"):
            raise ValueError(f"method must be 'sfcml' or 'sampled', got {self.method!r}")
        for name in ("epochs", "batch_size", "dim", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("margin", "radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.improvement_epsilon < 0:
            raise ValueError("improvement_epsilon must be non-negative")


@dataclass
class AdagradState:
    accum_user: np.ndarray
    accum_item: np.ndarray
    epsilon: float = ADAGRAD_EPS

    @classmethod
    def zeros(cls, model: EmbeddingModel, epsilon: float = ADAGRAD_EPS) -> "AdagradState":
        return cls(
            np.zeros_like(model.user_weights), np.zeros_like(model.item_weights), epsilon
        )


def adagrad_step(weights, grads, accum, lr, eps=ADAGRAD_EPS):
    """In-place Adagrad: ``accum += g**2; w -= lr * g / (sqrt(accum) + eps)``."""
    accum += grads * grads
    weights -= lr * grads / (np.sqrt(accum) + eps)
    return weights, accum


def _epoch_batches(num_users, config: TrainConfig, epoch: int):
    rng = np.random.default_rng([config.seed, _SHUFFLE_STREAM, epoch])
    order = rng.permutation(num_users)
    size = 1 if config.sequential else config.batch_size
    for start in range(0, num_users, size):
        # ascending user order inside a batch fixes the reduction order
        yield np.sort(order[start : start + size])


def _step_users(model, state, users, grads, lr):
    w = model.user_weights[users]
    acc = state.accum_user[users]
    adagrad_step(w, grads, acc, lr, state.epsilon)
    model.user_weights[users] = w
    state.accum_user[users] = acc


def train_epoch_sfcml(
    model: EmbeddingModel,
    train: InteractionMatrix,
    config: TrainConfig,
    state: AdagradState,
    epoch: int = 0,
) -> float:
    """One pass of the sampling-free objective over all users.

    Gradients inside a batch are taken at the batch-start snapshot, the
    item gradient is the batch mean of per-user contributions, and item
    rows are re-projected after every batch. Returns the mean per-user
    loss measured before each batch's update.
    """
    proj_rng = np.random.default_rng([config.seed, _PROJECT_STREAM, epoch])
    project_to_sphere(model, "both", rng=proj_rng)
    n_pos_all = train.n_pos
    losses = np.empty(train.num_users)
    for users in _epoch_batches(train.num_users, config, epoch):
        Y = train.label_matrix(users)
        batch_loss, g_users, g_items = sfcml_batch(
            model, users, Y, config.margin, n_pos_all[users]
        )
        losses[users] = batch_loss
        scale = 1.0 / users.size
        _step_users(model, state, users, g_users * scale, config.learning_rate)
        adagrad_step(
            model.item_weights, g_items * scale, state.accum_item, config.learning_rate, state.epsilon
        )
        project_to_sphere(model, "items", rng=proj_rng)
    project_to_sphere(model, "users", rng=proj_rng)
    return float(losses.mean())


def train_epoch_sampled(
    model: EmbeddingModel,
    train: InteractionMatrix,
    config: TrainConfig,
    state: AdagradState,
    epoch: int = 0,
) -> float:
    """One pass of hinge-loss CML with ``U`` sampled negatives per positive.

    Each user's loss is the mean hinge over its sampled triplets, so the
    per-user weights match the sampling-free objective.
    """
    proj_rng = np.random.default_rng([config.seed, _PROJECT_STREAM, epoch])
    project_to_sphere(model, "both", rng=proj_rng)
    kind = config.sampler
    popularity = train.item_counts()
    N = train.num_items
    losses = np.empty(train.num_users)
    for users in _epoch_batches(train.num_users, config, epoch):
        ps, ns, ws, rows = [], [], [], []
        for row, u in enumerate(users):
            g = UserGraph.from_positives(train.positives[u], N, user=int(u))
            rng = np.random.default_rng([config.seed, _SAMPLER_STREAM, epoch, int(u)])
            negs = sample_user_negatives(kind, model, int(u), g, popularity, rng)
            P, U = negs.shape
            ps.append(np.repeat(train.positives[u], U))
            ns.append(negs.ravel())
            rows.append(np.full(P * U, row, dtype=np.int64))
            ws.append(np.full(P * U, 1.0 / (P * U)))
        w_arr = np.concatenate(ws)
        r_arr = np.concatenate(rows)
        hinge, g_users, g_items = hinge_triplet_batch(
            model, users, r_arr, np.concatenate(ps), np.concatenate(ns), w_arr, config.margin
        )
        losses[users] = np.bincount(r_arr, weights=hinge * w_arr, minlength=users.size)
        scale = 1.0 / users.size
        _step_users(model, state, users, g_users * scale, config.learning_rate)
        adagrad_step(
            model.item_weights, g_items * scale, state.accum_item, config.learning_rate, state.epsilon
        )
        project_to_sphere(model, "items", rng=proj_rng)
    project_to_sphere(model, "users", rng=proj_rng)
    return float(losses.mean())


def should_early_stop(history: Sequence[float], patience: int = 15, epsilon: float = 1e-5) -> bool:
    """True once ``patience`` consecutive epochs fail to beat the best by more than ``epsilon``."""
    if not history:
        raise ValueError("history must be non-empty")
    best = history[0]
    since = 0
    for value in history[1:]:
        if value > best + epsilon:
            best = value
            since = 0
        else:
            since += 1
    return since >= patience


def _masks(split: DatasetSplit, part: str, mask_mode: str):
    if mask_mode not in ("masked", "unmasked"):
        raise ValueError(f"mask_mode must be 'masked' or 'unmasked', got {mask_mode!r}")
    if part in ("val", "validation"):
        rel, masks = split.validation, [split.train.positives]
    elif part == "test":
        rel, masks = split.test, [split.train.positives, split.validation]
    else:
        raise ValueError(f"part must be 'validation' or 'test', got {part!r}")
    if mask_mode == "unmasked":
        masks = []
    return rel, masks


def _user_candidates(u, N, masks):
    allowed = np.ones(N, dtype=bool)
    for m in masks:
        allowed[m[u]] = False
    return np.flatnonzero(allowed)


def _scores_in_chunks(model: EmbeddingModel, chunk=1024):
    for start in range(0, model.num_users, chunk):
        users = np.arange(start, min(start + chunk, model.num_users))
        yield users, -distance_matrix(model, users)


def evaluate(
    model: EmbeddingModel,
    split: DatasetSplit,
    part: str = "test",
    ks: Sequence[int] = DEFAULT_KS,
    mask_mode: str = "masked",
) -> MetricsReport:
    """Rank items by ``-d(i, j)`` and score against one held-out part.

    In ``masked`` mode the user's training positives (and, for the test
    part, validation positives) are removed from the candidate set.
    """
    relevant, masks = _masks(split, part, mask_mode)
    ks = sorted(int(k) for k in ks)
    per_user = []
    for users, scores in _scores_in_chunks(model):
        for row, u in enumerate(users):
            if len(relevant[u]) == 0:
                continue
            cand = _user_candidates(u, model.num_items, masks)
            per_user.append(evaluate_user(scores[row], cand, relevant[u], ks))
    return aggregate_report(per_user)


def mean_auc(model: EmbeddingModel, split: DatasetSplit, part: str = "validation", mask_mode: str = "masked") -> float:
    """Mean per-user AUC, vectorized over users.

    Masked items are pushed to ``-inf`` so they sit below every candidate;
    their contribution to each relevant item's rank is then subtracted.
    Ties among real candidates get average ranks, as in :func:`user_auc`.
    """
    relevant, masks = _masks(split, part, mask_mode)
    N = model.num_items
    values = []
    for users, scores in _scores_in_chunks(model):
        keep = np.array([len(relevant[u]) > 0 for u in users])
        if not keep.any():
            continue
        users, scores = users[keep], scores[keep]
        is_rel = np.zeros(scores.shape, dtype=bool)
        masked = np.zeros(scores.shape, dtype=bool)
        for row, u in enumerate(users):
            is_rel[row, relevant[u]] = True
            for m in masks:
                masked[row, m[u]] = True
        scores = np.where(masked, -np.inf, scores)
        ranks = rankdata(scores, axis=1)
        n_masked = masked.sum(axis=1)
        n_rel = is_rel.sum(axis=1)
        n_neg = N - n_masked - n_rel
        if np.any(n_neg == 0):
            raise DegenerateCandidates("a user has no non-relevant candidates")
        rank_sum = np.where(is_rel, ranks, 0.0).sum(axis=1) - n_rel * n_masked
        values.append((rank_sum - n_rel * (n_rel + 1) / 2.0) / (n_rel * n_neg))
    if not values:
        raise NoEvaluableUsers("no user has a non-empty relevant set")
    return float(np.concatenate(values).mean())


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_auc: float
    seconds: float


@dataclass
class TrainResult:
    best_model: EmbeddingModel
    final_model: EmbeddingModel
    history: List[EpochRecord]
    best_epoch: int
    best_val_auc: float
    config: TrainConfig
    stopped_early: bool = False

    def log_tsv(self, timing: bool = True) -> str:
        lines = ["epoch\tmean_train_loss\tval_auc\tseconds"]
        for r in self.history:
            secs = r.seconds if timing else 0.0
            lines.append(f"{r.epoch}\t{r.train_loss:.17g}\t{r.val_auc:.17g}\t{secs:.3f}")
        return "\n".join(lines) + "\n"


def fit(
    split: DatasetSplit,
    config: TrainConfig,
    model: Optional[EmbeddingModel] = None,
    callback: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainResult:
    """Train with early stopping on validation AUC.

    Returns the best-validation model alongside the final one. When the
    split holds no validation positives at all, every epoch is run,
    ``val_auc`` is logged as NaN and the final model counts as best.
    """
    train = split.train
    if model is None:
        model = EmbeddingModel.initialize(
            train.num_users,
            train.num_items,
            config.dim,
            config.radius,
            rng=np.random.default_rng([config.seed, _INIT_STREAM]),
        )
    elif (model.num_users, model.num_items) != (train.num_users, train.num_items):
        raise ValueError("model shape does not match the dataset")
    state = AdagradState.zeros(model)
    epoch_fn = train_epoch_sfcml if config.method == "sfcml" else train_epoch_sampled

    history: List[EpochRecord] = []
    aucs: List[float] = []
    best_model, best_auc, best_epoch = model.copy(), -np.inf, 0
    stopped = False
    has_val = any(len(v) for v in split.validation)
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        loss = epoch_fn(model, train, config, state, epoch)
        val = mean_auc(model, split, "validation") if has_val else float("nan")
        rec = EpochRecord(epoch, loss, val, time.perf_counter() - t0)
        history.append(rec)
        if not has_val:
            if callback is not None:
                callback(rec)
            continue
        aucs.append(val)
        if val > best_auc + config.improvement_epsilon:
            best_model, best_auc, best_epoch = model.copy(), val, epoch
        if callback is not None:
            callback(rec)
        logger.debug("epoch %d loss %.6f val_auc %.6f", epoch, loss, val)
        if should_early_stop(aucs, config.patience, config.improvement_epsilon):
            stopped = True
            break
    if not has_val:
        best_model, best_epoch = model.copy(), len(history)
    return TrainResult(best_model, model, history, best_epoch, best_auc, config, stopped)


def grid_search(
    split: DatasetSplit,
    base: TrainConfig,
    grid: Dict[str, Sequence],
    callback: Optional[Callable[[TrainConfig, TrainResult], None]] = None,
) -> Tuple[TrainResult, List[TrainResult]]:
    """Fit every combination in ``grid`` and keep the best validation AUC.

    ``grid`` maps :class:`TrainConfig` field names to candidate values;
    ``"n_negatives"`` is routed to the sampler. Ties keep the earlier
    combination.
    """
    names = sorted(grid)
    results = []
    best = None
    for values in itertools.product(*(grid[n] for n in names)):
        kwargs = dict(zip(names, values))
        sampler = base.sampler
        if "n_negatives" in kwargs:
            sampler = replace(sampler, n_negatives=int(kwargs.pop("n_negatives")))
        cfg = replace(base, sampler=sampler, **kwargs)
        res = fit(split, cfg)
        results.append(res)
        if callback is not None:
            callback(cfg, res)
        if best is None or res.best_val_auc > best.best_val_auc:
            best = res
    return best, results

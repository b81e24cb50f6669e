from dataclasses import replace

import numpy as np
import pytest

from sfcml.data import DatasetSplit, InteractionMatrix, split_per_user
from sfcml.exceptions import DegenerateGraph, NoEvaluableUsers, NotEnoughNegatives
from sfcml.laplacian import UserGraph
from sfcml.losses import LossKind, naive_pairwise_loss, sfcml_user_loss
from sfcml.model import EmbeddingModel, project_to_sphere, score_vector
from sfcml.samplers import SamplerKind
from sfcml.trainer import (
    AdagradState,
    TrainConfig,
    adagrad_step,
    evaluate,
    fit,
    grid_search,
    mean_auc,
    should_early_stop,
    train_epoch_sampled,
    train_epoch_sfcml,
)

from conftest import random_interactions, random_model


def _cfg(**kw):
    base = dict(dim=4, epochs=3, batch_size=4, learning_rate=0.05, patience=2)
    base.update(kw)
    return TrainConfig(**base)


def test_config_validation():
    for bad in (dict(method="x"), dict(epochs=0), dict(patience=0), dict(margin=0.0), dict(radius=-1.0),
                dict(learning_rate=-0.1), dict(improvement_epsilon=-1.0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_adagrad_examples():
    w, acc = np.zeros(1), np.zeros(1)
    adagrad_step(w, np.array([2.0]), acc, 0.1, 1e-8)
    assert w[0] == pytest.approx(-0.1 * 2 / (2 + 1e-8), abs=1e-15)
    assert acc[0] == 4.0
    before = w[0]
    adagrad_step(w, np.array([2.0]), acc, 0.1, 1e-8)
    assert before - w[0] == pytest.approx(0.1 * 2 / np.sqrt(8), abs=1e-8)
    assert before - w[0] == pytest.approx(0.070711, abs=1e-6)
    snap_w, snap_a = w.copy(), acc.copy()
    adagrad_step(w, np.zeros(1), acc, 0.1, 1e-8)
    assert np.array_equal(w, snap_w) and np.array_equal(acc, snap_a)


def test_early_stop_examples():
    assert not should_early_stop([0.1, 0.2, 0.3, 0.4], 2)
    hist = [0.1, 0.2, 0.3, 0.4, 0.5] + [0.5 + 5e-6] * 15
    assert should_early_stop(hist, 15, 1e-5)
    assert not should_early_stop(hist[:-1], 15, 1e-5)
    # gain of exactly epsilon is not an improvement (dyadic values keep it exact)
    eps = 2.0**-10
    exact = [0.5] * 10 + [0.5 + eps] + [0.5] * 4
    assert should_early_stop(exact, 14, eps)
    with pytest.raises(ValueError):
        should_early_stop([], 3)


def test_zero_learning_rate_keeps_projected_init(small_split):
    cfg = _cfg(learning_rate=0.0)
    res = fit(small_split, cfg)
    init = EmbeddingModel.initialize(12, 30, 4, 1.0, np.random.default_rng([cfg.seed, 0]))
    assert np.array_equal(res.final_model.user_weights, init.user_weights)
    assert np.array_equal(res.final_model.item_weights, init.item_weights)


def test_zero_learning_rate_loss_is_evaluation(small_split):
    cfg = _cfg(learning_rate=0.0)
    m = EmbeddingModel.initialize(12, 30, 4, 1.0, 0)
    expected = np.mean([
        sfcml_user_loss(score_vector(m, u), UserGraph.from_positives(small_split.train.positives[u], 30), 1.0)
        for u in range(12)
    ])
    loss = train_epoch_sfcml(m, small_split.train, cfg, AdagradState.zeros(m), 1)
    assert loss == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("method", ["sfcml", "sampled"])
def test_epoch_invariants(small_split, method):
    cfg = _cfg(method=method, sampler=SamplerKind("uniform", 2))
    rng = np.random.default_rng(0)
    m = EmbeddingModel.initialize(12, 30, 4, 1.0, rng)
    state = AdagradState.zeros(m)
    fn = train_epoch_sfcml if method == "sfcml" else train_epoch_sampled
    prev_u, prev_v = state.accum_user.copy(), state.accum_item.copy()
    for epoch in range(1, 4):
        fn(m, small_split.train, cfg, state, epoch)
        for w in (m.user_weights, m.item_weights):
            assert np.allclose((w * w).sum(1), 1.0, rtol=1e-9, atol=0)
        assert np.all(state.accum_user >= prev_u) and np.all(state.accum_item >= prev_v)
        prev_u, prev_v = state.accum_user.copy(), state.accum_item.copy()


@pytest.mark.parametrize("method", ["sfcml", "sampled"])
def test_fit_is_deterministic(small_split, method):
    cfg = _cfg(method=method, sampler=SamplerKind("hard", 2))
    a, b = fit(small_split, cfg), fit(small_split, cfg)
    assert np.array_equal(a.final_model.user_weights, b.final_model.user_weights)
    assert np.array_equal(a.final_model.item_weights, b.final_model.item_weights)
    assert a.log_tsv(timing=False) == b.log_tsv(timing=False)
    c = fit(small_split, replace(cfg, seed=1))
    assert not np.array_equal(a.final_model.item_weights, c.final_model.item_weights)


def test_single_user_descent():
    r = np.random.default_rng(2)
    m0 = random_model(r, 1, 8, 3)
    train = InteractionMatrix(1, 8, [np.array([1, 4, 6])])
    g = UserGraph.from_positives(train.positives[0], 8)
    before = sfcml_user_loss(score_vector(m0, 0), g, 1.0)
    after = {}
    for lr in (1e-1, 1e-2, 1e-3):
        m = m0.copy()
        train_epoch_sfcml(m, train, _cfg(learning_rate=lr, dim=3), AdagradState.zeros(m), 1)
        after[lr] = sfcml_user_loss(score_vector(m, 0), g, 1.0)
    assert min(after.values()) < before


def test_sequential_mode_matches_batch_of_one(small_split):
    a = fit(small_split, _cfg(sequential=True))
    b = fit(small_split, _cfg(batch_size=1))
    assert np.array_equal(a.final_model.item_weights, b.final_model.item_weights)


def test_all_margins_satisfied_sampled_is_static():
    # users on one pole with their positives, negatives on the opposite pole
    M, N = 2, 6
    pos = [np.array([0, 1]), np.array([0, 2])]
    train = InteractionMatrix(M, N, pos)
    V = np.zeros((N, 2))
    V[:, 0] = -1.0
    V[[0, 1, 2], 0] = 1.0
    m = EmbeddingModel(np.tile([[1.0, 0.0]], (M, 1)), V)
    snap = m.copy()
    cfg = _cfg(method="sampled", dim=2, sampler=SamplerKind("uniform", 3))
    loss = train_epoch_sampled(m, InteractionMatrix(M, N, [np.array([0, 1, 2])] * 2), cfg, AdagradState.zeros(m), 1)
    assert loss == 0.0
    assert np.array_equal(m.user_weights, snap.user_weights)
    assert np.array_equal(m.item_weights, snap.item_weights)


def test_exhaustive_sampling_equals_hinge_oracle(rng):
    train = random_interactions(rng, 6, 12, lo=4, hi=6)
    train = InteractionMatrix(6, 12, [p[:4] for p in train.positives])  # n_neg = 8 for all users
    m = random_model(rng, 6, 12, 3)
    kind = LossKind("hinge", 1.0)
    oracle = np.mean([naive_pairwise_loss(m, u, UserGraph.from_positives(train.positives[u], 12), kind) for u in range(6)])
    cfg = _cfg(method="sampled", dim=3, batch_size=6, sampler=SamplerKind("uniform", 8))
    loss = train_epoch_sampled(m, train, cfg, AdagradState.zeros(m), 1)
    assert abs(loss - oracle) <= 1e-12


def test_epoch_errors_carry_user():
    train = InteractionMatrix(2, 4, [np.array([0]), np.array([0, 1, 2, 3])])
    m = EmbeddingModel.initialize(2, 4, 2, rng=0)
    with pytest.raises(DegenerateGraph) as err:
        train_epoch_sfcml(m, train, _cfg(dim=2), AdagradState.zeros(m), 1)
    assert err.value.user == 1
    train = InteractionMatrix(2, 4, [np.array([0]), np.array([0, 1, 2])])
    with pytest.raises(NotEnoughNegatives) as err:
        train_epoch_sampled(m, train, _cfg(dim=2, method="sampled", sampler=SamplerKind("uniform", 2)), AdagradState.zeros(m), 1)
    assert err.value.user == 1


def _oracle_model(split, part="test"):
    """Embeddings placing each user's held-out items nearest, then everything else."""
    M, N = split.num_users, split.num_items
    rel = split.part(part)
    d = M + 1
    U = np.zeros((M, d))
    U[np.arange(M), np.arange(M)] = 1.0
    V = np.zeros((N, d))
    V[:, M] = 1.0
    for u in range(M):
        V[rel[u], u] += 3.0
    return project_to_sphere(EmbeddingModel(U, V))


def test_evaluate_perfect_model():
    m = InteractionMatrix(3, 30, [np.arange(k, k + 10) for k in (0, 10, 20)])
    split = split_per_user(m, seed=0)
    rep = evaluate(_oracle_model(split), split, "test", [1, 2, 5])
    assert rep.auc_score == 1.0
    for k in (1, 2, 5):
        expect = np.mean([min(1.0, k / len(t)) for t in split.test])
        assert rep.recall_at[k] == pytest.approx(expect)
    assert rep.users_evaluated == 3


def test_evaluate_deterministic_and_masking(small_split, rng):
    m = random_model(rng, 12, 30, 4)
    a, b = evaluate(m, small_split), evaluate(m, small_split)
    assert a.to_tsv() == b.to_tsv()
    masked = evaluate(m, small_split, mask_mode="masked")
    unmasked = evaluate(m, small_split, mask_mode="unmasked")
    assert masked.to_tsv() != unmasked.to_tsv()
    with pytest.raises(ValueError):
        evaluate(m, small_split, part="train")
    with pytest.raises(ValueError):
        evaluate(m, small_split, mask_mode="half")


def test_masking_lifts_train_positive_above_test():
    pos = np.arange(10)
    split = split_per_user(InteractionMatrix(1, 20, [pos]), seed=0)
    # user is closest to its training items, then test, then the rest
    V = np.zeros((20, 2))
    V[:, 1] = 1.0
    V[split.train.positives[0], 0] = 10.0
    V[split.test[0], 0] = 5.0
    m = project_to_sphere(EmbeddingModel(np.array([[1.0, 0.0]]), V))
    masked = evaluate(m, split, "test", [1], "masked")
    unmasked = evaluate(m, split, "test", [1], "unmasked")
    assert masked.precision_at[1] == 1.0 and unmasked.precision_at[1] == 0.0


def test_mean_auc_matches_evaluate(small_split, rng):
    m = random_model(rng, 12, 30, 4)
    for part in ("validation", "test"):
        for mode in ("masked", "unmasked"):
            rep = evaluate(m, small_split, part, [3], mode)
            assert mean_auc(m, small_split, part, mode) == pytest.approx(rep.auc_score, abs=1e-12)


def test_evaluate_without_relevant_users(small_split, rng):
    empty = DatasetSplit(small_split.train, small_split.validation, [np.zeros(0, np.int64)] * 12)
    with pytest.raises(NoEvaluableUsers):
        evaluate(random_model(rng, 12, 30, 4), empty)


def test_fit_tracks_best_and_stops(small_split):
    res = fit(small_split, _cfg(epochs=40, learning_rate=0.2, patience=3))
    aucs = [r.val_auc for r in res.history]
    assert res.best_val_auc == pytest.approx(max(aucs)) or res.best_val_auc >= max(aucs) - 1e-5
    assert res.history[res.best_epoch - 1].val_auc == res.best_val_auc
    assert mean_auc(res.best_model, small_split) == res.best_val_auc
    if res.stopped_early:
        assert len(res.history) < 40 and should_early_stop(aucs, 3, 1e-5)


def test_fit_without_validation_runs_all_epochs(small_split):
    split = DatasetSplit(small_split.train, [np.zeros(0, np.int64)] * 12, small_split.test)
    res = fit(split, _cfg(epochs=4))
    assert len(res.history) == 4 and res.best_epoch == 4
    assert all(np.isnan(r.val_auc) for r in res.history)


def test_log_format(small_split):
    res = fit(small_split, _cfg(epochs=2))
    lines = res.log_tsv(timing=False).splitlines()
    assert lines[0] == "epoch\tmean_train_loss\tval_auc\tseconds"
    assert len(lines) == 3 and lines[1].startswith("1\t") and lines[1].endswith("\t0.000")
    assert float(lines[1].split("\t")[1]) == res.history[0].train_loss


def test_grid_search_picks_best_validation(small_split):
    best, results = grid_search(small_split, _cfg(epochs=2), {"learning_rate": [0.0, 0.1], "margin": [1.0]})
    assert len(results) == 2
    assert best.best_val_auc == max(r.best_val_auc for r in results)
    best, results = grid_search(small_split, _cfg(epochs=1, method="sampled"), {"n_negatives": [1, 2]})
    assert [r.config.sampler.n_negatives for r in results] == [1, 2]

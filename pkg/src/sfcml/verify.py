"""Randomized cross-checks of the matrix-free route against brute-force oracles."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .laplacian import UserGraph, dense_laplacian, lap_mat_product, lap_vec_product
from .losses import (
    LossKind,
    naive_pairwise_grads,
    naive_pairwise_loss,
    sfcml_user_grads,
    sfcml_user_loss,
)
from .model import EmbeddingModel, project_to_sphere, score_vector

TOLERANCES = {
    "laplacian_product": 1e-12,
    "loss_equivalence": 1e-9,
    "grad_vs_naive": 1e-9,
    "grad_vs_finite_diff": 1e-4,
}

FD_STEP = 1e-4


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def random_instance(rng, n_items, dim, num_users=1, radius=None):
    """A projected random model plus a non-degenerate preference graph for user 0."""
    if radius is None:
        radius = float(rng.uniform(0.5, 2.0))
    model = EmbeddingModel(
        rng.normal(size=(num_users, dim)), rng.normal(size=(n_items, dim)), radius
    )
    project_to_sphere(model, "both")
    n_pos = int(rng.integers(1, n_items))
    y = np.zeros(n_items)
    y[rng.choice(n_items, n_pos, replace=False)] = 1.0
    return model, UserGraph.from_labels(y)


def loss_as_function(model: EmbeddingModel, i: int, g: UserGraph, margin: float):
    """``(user_vec, item_table) -> loss`` closure for finite differencing."""

    def fn(eu, V):
        return sfcml_user_loss(2.0 * (V @ eu), g, margin)

    return fn


def finite_difference_grads(model, i, g, margin, item_rows, step=FD_STEP):
    """Central differences of the sampling-free loss for ``e_u`` and selected item rows."""
    fn = loss_as_function(model, i, g, margin)
    eu = model.user_weights[i].copy()
    V = model.item_weights.copy()
    gu = np.empty_like(eu)
    for a in range(eu.size):
        e = np.zeros_like(eu)
        e[a] = step
        gu[a] = (fn(eu + e, V) - fn(eu - e, V)) / (2 * step)
    gv = np.empty((len(item_rows), V.shape[1]))
    for r, j in enumerate(item_rows):
        for a in range(V.shape[1]):
            Vp, Vm = V.copy(), V.copy()
            Vp[j, a] += step
            Vm[j, a] -= step
            gv[r, a] = (fn(eu, Vp) - fn(eu, Vm)) / (2 * step)
    return gu, gv


@dataclass
class OracleReport:
    max_errors: Dict[str, float] = field(default_factory=dict)
    trials: Dict[str, int] = field(default_factory=dict)

    def passed(self) -> bool:
        return all(self.max_errors[k] <= TOLERANCES[k] for k in self.max_errors)

    def lines(self):
        for k, v in self.max_errors.items():
            status = "PASS" if v <= TOLERANCES[k] else "FAIL"
            yield f"{k}\t{self.trials[k]}\t{v:.3e}\t{TOLERANCES[k]:.0e}\t{status}"


def check_laplacian(trials, max_n, rng) -> float:
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, max_n + 1))
        _, g = random_instance(rng, n, 2)
        L = dense_laplacian(g)
        v = rng.normal(size=n)
        worst = max(worst, float(np.abs(lap_vec_product(g, v) - L @ v).max()))
        Q = rng.normal(size=(n, 3))
        worst = max(worst, float(np.abs(lap_mat_product(g, Q) - L @ Q).max()))
    return worst


def check_loss_equivalence(trials, max_n, max_d, rng) -> float:
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(3, max_n + 1))
        d = int(rng.integers(2, max_d + 1))
        model, g = random_instance(rng, n, d)
        margin = float(rng.choice([1.0, 1.5, 2.0]))
        fast = sfcml_user_loss(score_vector(model, 0), g, margin)
        slow = naive_pairwise_loss(model, 0, g, LossKind("square", margin))
        worst = max(worst, abs(fast - slow) / max(1.0, abs(slow)))
    return worst


def check_grad_vs_naive(trials, max_n, max_d, rng) -> float:
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(3, max_n + 1))
        d = int(rng.integers(2, max_d + 1))
        model, g = random_instance(rng, n, d)
        margin = float(rng.choice([1.0, 1.5, 2.0]))
        gu, gv = sfcml_user_grads(model, 0, g, margin)
        nu, nv = naive_pairwise_grads(model, 0, g, LossKind("square", margin))
        worst = max(worst, relative_error(gu, nu), relative_error(gv, nv))
    return worst


def check_grad_vs_finite_diff(trials, max_n, max_d, rng, rows_per_trial=3) -> float:
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(3, max_n + 1))
        d = int(rng.integers(2, max_d + 1))
        model, g = random_instance(rng, n, d)
        margin = float(rng.choice([1.0, 1.5, 2.0]))
        rows = rng.choice(n, min(rows_per_trial, n), replace=False)
        gu, gv = sfcml_user_grads(model, 0, g, margin)
        fu, fv = finite_difference_grads(model, 0, g, margin, rows)
        worst = max(worst, relative_error(gu, fu), relative_error(gv[rows], fv))
    return worst


def run_oracle_suite(trials=1000, max_n=200, seed=0, max_d=32, grad_trials=None, fd_max_n=40) -> OracleReport:
    """Run every cross-check and collect the largest observed error of each."""
    rng = np.random.default_rng(seed)
    grad_trials = grad_trials if grad_trials is not None else max(100, trials // 10)
    rep = OracleReport()
    rep.max_errors["laplacian_product"] = check_laplacian(trials, min(max_n, 200), rng)
    rep.trials["laplacian_product"] = trials
    rep.max_errors["loss_equivalence"] = check_loss_equivalence(trials, max_n, max_d, rng)
    rep.trials["loss_equivalence"] = trials
    rep.max_errors["grad_vs_naive"] = check_grad_vs_naive(grad_trials, max_n, max_d, rng)
    rep.trials["grad_vs_naive"] = grad_trials
    rep.max_errors["grad_vs_finite_diff"] = check_grad_vs_finite_diff(
        grad_trials, min(max_n, fd_max_n), min(max_d, 8), rng
    )
    rep.trials["grad_vs_finite_diff"] = grad_trials
    return rep

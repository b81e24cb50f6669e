"""Scikit-learn style front-end over the training loops."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_interactions, check_users
from .data import DatasetSplit
from .exceptions import DegenerateGraph, NoEvaluableUsers
from .metrics import user_auc
from .model import distance_matrix, top_k_from_scores
from .samplers import SamplerKind
from .trainer import TrainConfig, fit


class SFCMLRecommender(BaseEstimator):
    """Collaborative metric learning trained on every (positive, unobserved) pair.

    Users and items share a ``dim``-dimensional sphere of squared radius
    ``radius``; items are ranked for a user by increasing Euclidean
    distance.

    Parameters
    ----------
    dim : int, default=256
    radius : float, default=1.0
        Squared norm every embedding is projected to.
    margin : float, default=1.0
    learning_rate : float, default=0.01
        Adagrad step size.
    epochs : int, default=200
    batch_size : int, default=256
    patience : int, default=15
        Early stopping patience on validation AUC. Ignored without
        validation data.
    improvement_epsilon : float, default=1e-5
    sequential : bool, default=False
        Update after every single user instead of per batch.
    random_state : int, default=0

    Attributes
    ----------
    user_embeddings_ : ndarray of shape (n_users, dim)
    item_embeddings_ : ndarray of shape (n_items, dim)
    history_ : list of EpochRecord
    best_epoch_ : int
    n_users_, n_items_ : int
    """

    _method = "sfcml"

    def __init__(
        self,
        dim=256,
        radius=1.0,
        margin=1.0,
        learning_rate=0.01,
        epochs=200,
        batch_size=256,
        patience=15,
        improvement_epsilon=1e-5,
        sequential=False,
        random_state=0,
    ):
        self.dim = dim
        self.radius = radius
        self.margin = margin
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.improvement_epsilon = improvement_epsilon
        self.sequential = sequential
        self.random_state = random_state

    def _sampler(self):
        return SamplerKind()

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=float(self.learning_rate),
            epochs=int(self.epochs),
            batch_size=int(self.batch_size),
            margin=float(self.margin),
            dim=int(self.dim),
            radius=float(self.radius),
            patience=int(self.patience),
            improvement_epsilon=float(self.improvement_epsilon),
            seed=int(self.random_state),
            method=self._method,
            sampler=self._sampler(),
            sequential=bool(self.sequential),
        )

    def fit(self, X, y=None, X_val=None):
        """Learn embeddings from a binary user-item matrix.

        Parameters
        ----------
        X : sparse matrix, array-like or InteractionMatrix of shape (n_users, n_items)
            Training positives. Every user needs at least one positive and
            one unobserved item.
        y : ignored
        X_val : same type as ``X``, optional
            Held-out positives for early stopping. Must not overlap ``X``.

        Returns
        -------
        self
        """
        train = check_interactions(X)
        n_pos = train.n_pos
        bad = np.flatnonzero((n_pos == 0) | (n_pos == train.num_items))
        if bad.size:
            raise DegenerateGraph(int(n_pos[bad[0]]), train.num_items, user=int(bad[0]))
        shape = (train.num_users, train.num_items)
        if X_val is None:
            val = [np.zeros(0, np.int64)] * train.num_users
        else:
            val = check_interactions(X_val, "X_val", shape).positives
            for u in range(train.num_users):
                if np.intersect1d(val[u], train.positives[u]).size:
                    raise ValueError(f"X_val overlaps X for user {u}")
        empty = [np.zeros(0, np.int64)] * train.num_users
        split = DatasetSplit(train, list(val), list(empty))
        result = fit(split, self._train_config())

        self.model_ = result.best_model
        self.user_embeddings_ = result.best_model.user_weights
        self.item_embeddings_ = result.best_model.item_weights
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.n_users_, self.n_items_ = shape
        self._train_positives = train.positives
        return self

    def transform(self, users=None):
        """Embeddings of ``users`` (all users by default)."""
        check_is_fitted(self, "model_")
        return self.user_embeddings_[check_users(users, self.n_users_)]

    def decision_function(self, users=None):
        """Preference scores ``-d(user, item)``, shape (n_selected_users, n_items)."""
        check_is_fitted(self, "model_")
        return -distance_matrix(self.model_, check_users(users, self.n_users_))

    def predict(self, users=None, k=10, exclude_seen=True):
        """Top-``k`` item indices per user, best first.

        Training positives are excluded unless ``exclude_seen`` is False.
        """
        check_is_fitted(self, "model_")
        users = check_users(users, self.n_users_)
        scores = self.decision_function(users)
        out = np.empty((users.size, k), dtype=np.int64)
        for row, u in enumerate(users):
            mask = self._train_positives[u] if exclude_seen else None
            out[row] = top_k_from_scores(scores[row], k, mask)
        return out

    def score(self, X, y=None):
        """Mean per-user AUC of held-out positives ``X``, training positives masked."""
        check_is_fitted(self, "model_")
        test = check_interactions(X, "X", (self.n_users_, self.n_items_))
        scores = self.decision_function()
        values = []
        for u in range(self.n_users_):
            if test.positives[u].size == 0:
                continue
            keep = np.ones(self.n_items_, dtype=bool)
            keep[self._train_positives[u]] = False
            keep[test.positives[u]] = True
            cand = np.flatnonzero(keep)
            values.append(user_auc(scores[u, cand], np.isin(cand, test.positives[u])))
        if not values:
            raise NoEvaluableUsers("X holds no positives")
        return float(np.mean(values))


class SampledCMLRecommender(SFCMLRecommender):
    """Hinge-loss CML trained on ``n_negatives`` sampled negatives per positive.

    Parameters
    ----------
    sampler : {'uniform', 'popularity', 'two_stage', 'hard'}, default='uniform'
    n_negatives : int, default=1
    candidate_multiplier : int, optional
        Candidate pool size per negative for ``two_stage`` and ``hard``.
    replace : bool, optional
        Draw negatives with replacement. Defaults per sampler.

    See :class:`SFCMLRecommender` for the remaining parameters.
    """

    _method = "sampled"

    def __init__(
        self,
        sampler="uniform",
        n_negatives=1,
        candidate_multiplier=None,
        replace=None,
        dim=256,
        radius=1.0,
        margin=1.0,
        learning_rate=0.01,
        epochs=200,
        batch_size=256,
        patience=15,
        improvement_epsilon=1e-5,
        sequential=False,
        random_state=0,
    ):
        super().__init__(
            dim=dim,
            radius=radius,
            margin=margin,
            learning_rate=learning_rate,
            epochs=epochs,
            batch_size=batch_size,
            patience=patience,
            improvement_epsilon=improvement_epsilon,
            sequential=sequential,
            random_state=random_state,
        )
        self.sampler = sampler
        self.n_negatives = n_negatives
        self.candidate_multiplier = candidate_multiplier
        self.replace = replace

    def _sampler(self):
        return SamplerKind(self.sampler, int(self.n_negatives), self.candidate_multiplier, self.replace)

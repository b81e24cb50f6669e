import numpy as np
import pytest
import scipy.sparse as sp
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sfcml import SampledCMLRecommender, SFCMLRecommender
from sfcml.exceptions import DegenerateGraph, IndexOutOfRange
from sfcml.trainer import evaluate

from conftest import random_interactions


def _matrices(split):
    M, N = split.num_users, split.num_items
    X = split.train.to_csr()

    def to(parts):
        rows = np.repeat(np.arange(M), [len(p) for p in parts])
        return sp.csr_matrix((np.ones(rows.size), (rows, np.concatenate(parts))), shape=(M, N))

    return X, to(split.validation), to(split.test)


def test_params_round_trip():
    est = SampledCMLRecommender(sampler="hard", n_negatives=3, dim=8)
    params = est.get_params()
    assert params["sampler"] == "hard" and params["n_negatives"] == 3 and params["dim"] == 8
    twin = clone(est)
    assert twin.get_params() == params
    assert SFCMLRecommender().set_params(margin=2.0).margin == 2.0


def test_not_fitted():
    with pytest.raises(NotFittedError):
        SFCMLRecommender().predict()


def test_fit_predict_score(small_split):
    X, X_val, X_test = _matrices(small_split)
    est = SFCMLRecommender(dim=4, epochs=5, batch_size=4, learning_rate=0.05, patience=2)
    assert est.fit(X, X_val=X_val) is est
    assert est.user_embeddings_.shape == (12, 4) and est.item_embeddings_.shape == (30, 4)
    top = est.predict([0, 3], k=5)
    assert top.shape == (2, 5)
    assert not set(top[0].tolist()) & set(small_split.train.positives[0].tolist())
    scores = est.decision_function([0])
    assert scores.shape == (1, 30)
    assert np.array_equal(est.predict([0], k=30 - len(small_split.train.positives[0]))[0],
                          np.argsort(-np.where(np.isin(np.arange(30), small_split.train.positives[0]), -np.inf, scores[0]), kind="stable")[: 30 - len(small_split.train.positives[0])])
    auc = est.score(X_val)
    assert 0.0 <= auc <= 1.0
    # the estimator's score on validation matches the trainer's masked validation AUC
    assert auc == pytest.approx(evaluate(est.model_, small_split, "validation").auc_score, abs=1e-12)
    assert est.transform([1]).shape == (1, 4)


def test_dense_input_and_no_validation(rng):
    m = random_interactions(rng, 6, 15, lo=5, hi=10)
    dense = m.to_csr().toarray()
    est = SampledCMLRecommender(n_negatives=2, dim=3, epochs=2).fit(dense)
    assert len(est.history_) == 2 and est.best_epoch_ == 2
    again = SampledCMLRecommender(n_negatives=2, dim=3, epochs=2).fit(sp.csr_matrix(dense))
    assert np.array_equal(est.item_embeddings_, again.item_embeddings_)


def test_input_validation(small_split):
    X, X_val, _ = _matrices(small_split)
    with pytest.raises(ValueError):
        SFCMLRecommender(epochs=1).fit(X * 2.0)
    with pytest.raises(ValueError):
        SFCMLRecommender(epochs=1).fit(np.ones(5))
    with pytest.raises(ValueError):
        SFCMLRecommender(epochs=1).fit(X, X_val=X)
    with pytest.raises(ValueError):
        SFCMLRecommender(epochs=1).fit(X, X_val=X_val[:, :10])
    bad = X.toarray()
    bad[0] = 0
    with pytest.raises(DegenerateGraph):
        SFCMLRecommender(epochs=1).fit(bad)
    est = SFCMLRecommender(dim=2, epochs=1).fit(X)
    with pytest.raises(IndexOutOfRange):
        est.predict([99])
    with pytest.raises(ValueError):
        est.predict([0.5])

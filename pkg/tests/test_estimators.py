import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from bcpo.errors import ValidationError
from bcpo.estimators import BCPO, BehaviorCloning, NaiveFQI, check_states, check_transitions
from bcpo.mdp import random_mdp, random_policy
from bcpo.theory import random_dataset


@pytest.fixture
def small_data():
    rng = np.random.default_rng(2)
    mdp = random_mdp(rng, 5, 3, discount=0.5)
    return mdp, random_dataset(rng, mdp, random_policy(rng, 5, 3), 1000)


def as_array(dataset):
    return np.array([list(r) for r in dataset.records()], dtype=float)


def test_params_roundtrip():
    est = BCPO(36, 4, alpha=0.2, penalty_scale=0.5)
    params = est.get_params()
    assert params["alpha"] == 0.2 and params["penalty_scale"] == 0.5
    assert clone(est).get_params() == params
    est.set_params(alpha=0.3)
    assert est.config().alpha == 0.3
    assert NaiveFQI(3, 2).get_params() == {"n_states": 3, "n_actions": 2, "gamma": 0.97,
                                           "n_iter": 500}


@pytest.mark.parametrize("cls", [BehaviorCloning, NaiveFQI, BCPO])
def test_not_fitted(cls):
    with pytest.raises(NotFittedError):
        cls(3, 2).predict([0])


def test_array_and_dataset_inputs_agree(small_data):
    _, ds = small_data
    a = BehaviorCloning(5, 3).fit(ds)
    b = BehaviorCloning(5, 3).fit(as_array(ds))
    np.testing.assert_array_equal(a.predict_proba(range(5)), b.predict_proba(range(5)))
    assert a.predict([0, 4]).shape == (2,)


def test_fqi_estimator(small_data):
    _, ds = small_data
    est = NaiveFQI(5, 3, gamma=0.5, n_iter=50).fit(ds)
    np.testing.assert_array_equal(est.predict(range(5)), est.q_.argmax(axis=1))
    np.testing.assert_array_equal(est.state_values(), est.q_.max(axis=1))


def test_bcpo_estimator(small_data):
    mdp, ds = small_data
    est = BCPO(5, 3, gamma=0.5, n_outer_iters=5).fit(ds, oracle_mdp=mdp)
    proba = est.predict_proba(range(5))
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    assert est.q_lcb_.shape == (5, 3)
    assert len(est.logs_) >= 2
    assert np.all(est.greedy_policy().probs.max(axis=1) == 1.0)
    again = clone(est).fit(ds, oracle_mdp=mdp)
    np.testing.assert_array_equal(again.q_lcb_, est.q_lcb_)


def test_invalid_inputs(small_data):
    _, ds = small_data
    X = as_array(ds)
    bad = X.copy()
    bad[0, 1] = 0.5
    with pytest.raises(ValidationError):
        check_transitions(bad, 5, 3)
    with pytest.raises(ValueError):
        check_transitions(np.full((3, 5), np.nan), 5, 3)
    with pytest.raises(ValidationError):
        check_transitions(ds, 6, 3)
    with pytest.raises(ValidationError):
        check_states([0, 5], 5)
    est = BehaviorCloning(5, 3).fit(ds)
    with pytest.raises(ValidationError):
        est.predict([-1])

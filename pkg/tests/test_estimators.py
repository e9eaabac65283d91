import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from antijam.equilibrium import StagePayoffs
from antijam.estimators import BayesianLearner, EquilibriumSolver, StageSolver
from antijam.exceptions import InfeasibleStateError, InvalidParameterError
from antijam.game import config_to_dict, reachable_states

from helpers import make_game, random_regular_stage


def test_params_and_clone():
    est = EquilibriumSolver(mode="NE", soldier_frustration_weight=0.2)
    assert est.get_params() == {"mode": "NE", "soldier_frustration_weight": 0.2, "attacker_frustration_weight": None}
    other = clone(est).set_params(mode="PE")
    assert other.mode == "PE" and est.mode == "NE"


def test_solver_fit_predict():
    cfg = make_game(3)
    est = EquilibriumSolver().fit(cfg)
    out = est.predict()
    assert out.shape == (len(reachable_states(cfg)), 2)
    assert np.all((0 <= out) & (out <= 1))
    assert est.predict([[1, 0, 0]]).shape == (1, 2)
    assert est.score() >= -1e-6
    # dict input works too
    again = EquilibriumSolver().fit(config_to_dict(cfg))
    assert np.array_equal(again.predict(), out)


def test_weight_override():
    cfg = make_game(3)
    a = EquilibriumSolver(soldier_frustration_weight=0.0, attacker_frustration_weight=0.0).fit(cfg)
    b = EquilibriumSolver(mode="NE").fit(cfg)
    assert np.allclose(a.predict(), b.predict(), atol=1e-10)


def test_not_fitted_and_bad_input():
    with pytest.raises(NotFittedError):
        EquilibriumSolver().predict()
    with pytest.raises(InvalidParameterError):
        EquilibriumSolver(mode="XX").fit(make_game(2))
    est = EquilibriumSolver().fit(make_game(3))
    with pytest.raises(InfeasibleStateError):
        est.predict([[9, 0, 0]])
    with pytest.raises(InfeasibleStateError):
        est.predict([[4, 1, 0]])
    with pytest.raises(InvalidParameterError):
        est.predict([[1, 0]])


def test_stage_solver():
    rng = np.random.default_rng(0)
    stages = [random_regular_stage(rng) for _ in range(4)]
    X = np.array([[s.soldier, s.attacker] for s in stages])
    pred = StageSolver(mode="NE").fit().predict(X)
    assert pred.shape == (4, 2)
    sp = StagePayoffs(*X[0])
    q, p = sp.attacker, sp.soldier
    assert pred[0, 0] == pytest.approx((q[1, 1] - q[1, 0]) / (q[0, 0] + q[1, 1] - q[0, 1] - q[1, 0]))
    with pytest.raises(InvalidParameterError):
        StageSolver().fit().predict(np.zeros((2, 3, 2, 2)))


def test_learner():
    cfg = make_game(3)
    est = BayesianLearner(max_iterations=50, rng_seed=2).fit(cfg)
    assert est.n_iter_ <= 50
    assert est.predict().shape == (len(reachable_states(cfg)), 2)
    same = clone(est).fit(cfg)
    assert np.array_equal(same.predict(), est.predict())

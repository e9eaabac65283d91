"""Estimator-style wrappers around the solvers and the learning loop.

``fit`` takes a game (a GameConfig or its dict form) and ``predict`` maps
states to an ``(n, 2)`` array of ``[P(connect), P(jam)]``.
"""
from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .equilibrium import solve_game, solve_stage_ne, solve_stage_pe, verify_equilibrium
from .learning import LearningConfig, run_learning
from .validation import check_game, check_mode, check_stage_payoffs, check_states


def _with_weights(config, w_s, w_a):
    changes = {}
    if w_s is not None:
        changes["soldier_frustration_weight"] = w_s
    if w_a is not None:
        changes["attacker_frustration_weight"] = w_a
    return dataclasses.replace(config, **changes) if changes else config


class EquilibriumSolver(BaseEstimator):
    """Backward-induction NE/PE solver.

    The frustration weights, when given, override those of the fitted game.
    """

    def __init__(self, mode="PE", soldier_frustration_weight=None, attacker_frustration_weight=None):
        self.mode = mode
        self.soldier_frustration_weight = soldier_frustration_weight
        self.attacker_frustration_weight = attacker_frustration_weight

    def fit(self, X, y=None):
        mode = check_mode(self.mode)
        config = _with_weights(check_game(X), self.soldier_frustration_weight, self.attacker_frustration_weight)
        self.config_ = config
        self.solution_ = solve_game(config, mode)
        self.profile_ = self.solution_.profile
        self.soldier_value_ = self.solution_.soldier_value
        self.attacker_value_ = self.solution_.attacker_value
        return self

    def predict(self, X=None):
        check_is_fitted(self, "solution_")
        states = check_states(self.config_, X)
        return np.array([[self.profile_.soldier[s].p_first, self.profile_.attacker[s].p_first] for s in states])

    def diagnostics(self):
        check_is_fitted(self, "solution_")
        return verify_equilibrium(self.config_, self.solution_)

    def score(self, X=None, y=None):
        """Negative largest unilateral deviation gain; 0 for an exact equilibrium."""
        return -self.diagnostics().max_deviation_gain


class StageSolver(BaseEstimator):
    """Stateless solver for batches of 2x2 stage games."""

    def __init__(self, mode="PE", soldier_frustration_weight=0.5, attacker_frustration_weight=0.5):
        self.mode = mode
        self.soldier_frustration_weight = soldier_frustration_weight
        self.attacker_frustration_weight = attacker_frustration_weight

    def fit(self, X=None, y=None):
        self.mode_ = check_mode(self.mode)
        return self

    def predict(self, X):
        check_is_fitted(self, "mode_")
        out = []
        for payoffs in check_stage_payoffs(X):
            if self.mode_ == "NE":
                eq = solve_stage_ne(payoffs)
            else:
                eq = solve_stage_pe(payoffs, self.soldier_frustration_weight, self.attacker_frustration_weight)
            out.append([eq.soldier_mix.p_first, eq.attacker_mix.p_first])
        return np.array(out)


class BayesianLearner(BaseEstimator):
    """Repeated play with Bayesian belief updating; predictions are empirical mixes."""

    def __init__(
        self,
        max_iterations=1000,
        epsilon=0.05,
        rng_seed=0,
        convergence_window=50,
        exploration=0.05,
        pseudocount=1.0,
        utility="psychological",
        stop_on_convergence=True,
    ):
        self.max_iterations = max_iterations
        self.epsilon = epsilon
        self.rng_seed = rng_seed
        self.convergence_window = convergence_window
        self.exploration = exploration
        self.pseudocount = pseudocount
        self.utility = utility
        self.stop_on_convergence = stop_on_convergence

    def fit(self, X, y=None):
        config = check_game(X)
        learn = LearningConfig(**self.get_params())
        self.config_ = config
        self.trace_ = run_learning(config, learn)
        self.profile_ = self.trace_.final_profile()
        self.beliefs_ = self.trace_.final_beliefs()
        self.converged_at_ = self.trace_.converged_at
        self.n_iter_ = self.trace_.iterations
        return self

    def predict(self, X=None):
        check_is_fitted(self, "trace_")
        states = check_states(self.config_, X)
        return np.array([[self.profile_.soldier[s].p_first, self.profile_.attacker[s].p_first] for s in states])

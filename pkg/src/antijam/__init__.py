"""Equilibrium analysis and belief learning for a soldier/jammer IoBT game."""
from .channel import FadingModel, LinkBudget, success_probability, stage_delay
from .equilibrium import (
    EquilibriumSolution,
    StageEquilibrium,
    StagePayoffs,
    build_stage_payoffs,
    solve_game,
    solve_stage_ne,
    solve_stage_pe,
    verify_equilibrium,
)
from .estimators import BayesianLearner, EquilibriumSolver, StageSolver
from .exceptions import (
    AntiJamError,
    InfeasibleStateError,
    InvalidParameterError,
    NumericFailure,
    SingularityError,
    SolverFailure,
)
from .game import BeliefSystem, GameConfig, MixedAction, StageState, StrategyProfile
from .learning import LearningConfig, LearningTrace, detect_psce, run_learning

__version__ = "0.1.0"

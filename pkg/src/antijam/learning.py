"""Repeated play with Bayesian belief updating.

Both players observe every realized history and keep visit/action counters
per state. First-order beliefs are the Bayes posterior of the opponent's
action given the state, computed from empirical frequencies; second-order
beliefs are set to the player's own posterior, so that

    delta1 = rho2 = P(jam | state),   delta2 = rho1 = P(connect | state).

Each iteration both players best-respond to their current beliefs, one
history is realized (with a small, harmonically decaying exploration rate),
and the counters are updated.
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import numpy as np

from .equilibrium import EquilibriumSolution, build_stage_payoffs, psychological_payoffs
from .exceptions import InvalidParameterError
from .game import (
    CONNECT,
    JAM,
    UNIFORM,
    BeliefSystem,
    GameConfig,
    MixedAction,
    StageState,
    StrategyProfile,
    advance,
    attacker_terminal_payoff,
    config_from_dict,
    config_to_dict,
    feasible_actions,
    initial_state,
    is_terminal,
    profile_values,
    reachable_states,
    soldier_terminal_payoff,
    state_reach,
    terminal_states,
)

TIE_TOL = 1e-12
RATIONALITY_TOL = 1e-6


@dataclass(frozen=True)
class LearningConfig:
    max_iterations: int = 1000
    epsilon: float = 0.05
    rng_seed: int = 0
    convergence_window: int = 50
    exploration: float = 0.05
    pseudocount: float = 1.0
    utility: str = "psychological"
    stop_on_convergence: bool = True

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 0:
            raise InvalidParameterError("max_iterations must be a nonnegative integer")
        if not 0.0 < self.epsilon < 1.0:
            raise InvalidParameterError("epsilon must lie in (0, 1)")
        if int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise InvalidParameterError("rng_seed must be an unsigned integer")
        if int(self.convergence_window) != self.convergence_window or self.convergence_window < 1:
            raise InvalidParameterError("convergence_window must be a positive integer")
        if not 0.0 <= self.exploration <= 1.0:
            raise InvalidParameterError("exploration must lie in [0, 1]")
        if self.pseudocount < 0:
            raise InvalidParameterError("pseudocount must be nonnegative")
        if self.utility not in ("psychological", "material"):
            raise InvalidParameterError("utility must be 'psychological' or 'material'")


class PosteriorCounters:
    """Visit and action counts per state, with Bayes-form posteriors.

    With ``N'(h, a) = N(h, a) + c`` for feasible actions, the factors are
    ``Pr(a) = N'(a) / N'``, ``Pr(h | a) = N'(h, a) / N'(a)`` and
    ``Pr(h) = N'(h) / N'``, all totals taken over the states of one step.
    Their Bayes combination reduces to ``N'(h, a) / N'(h)``; the longer form
    is kept because the individual factors are reported.
    """

    def __init__(self, config: GameConfig, pseudocount: float = 1.0):
        self.config = config
        self.pseudocount = float(pseudocount)
        self.iteration = 0
        self.state_visits = {s: 0 for s in reachable_states(config)}
        self.soldier_counts = {s: np.zeros(2, dtype=np.int64) for s in reachable_states(config)}
        self.attacker_counts = {s: np.zeros(2, dtype=np.int64) for s in reachable_states(config)}
        self._feasible = {s: feasible_actions(config, s) for s in reachable_states(config)}
        self._by_step = {}
        for s in reachable_states(config):
            self._by_step.setdefault(s.step, []).append(s)

    def copy(self) -> "PosteriorCounters":
        return copy.deepcopy(self)

    def record(self, history) -> None:
        state = initial_state(self.config)
        for a, b in history:
            soldier, attacker = self._feasible[state]
            if a not in soldier or b not in attacker:
                raise InvalidParameterError(f"realized pair ({a}, {b}) infeasible at {state}")
            self.state_visits[state] += 1
            self.soldier_counts[state][a] += 1
            self.attacker_counts[state][b] += 1
            state = advance(state, a, b)
        if not is_terminal(self.config, state):
            raise InvalidParameterError("realized history is not a complete traversal")
        self.iteration += 1

    def _smoothed(self, role, state):
        counts = (self.soldier_counts if role == "soldier" else self.attacker_counts)[state]
        actions = self._feasible[state][0 if role == "soldier" else 1]
        out = counts.astype(float)
        for a in actions:
            out[a] += self.pseudocount
        return out

    def action_totals(self, role: str, step: int) -> np.ndarray:
        """``N'(a)`` for both actions, summed over the states of ``step``."""
        return sum((self._smoothed(role, s) for s in self._by_step[step]), np.zeros(2))

    def bayes_factors(self, role: str, state: StageState) -> dict:
        """The individual factors ``Pr(a)``, ``Pr(h | a)`` and ``Pr(h)``."""
        local = self._smoothed(role, state)
        totals = self.action_totals(role, state.step)
        grand = totals.sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            prior = totals / grand if grand > 0 else np.full(2, 0.5)
            likelihood = np.where(totals > 0, local / np.where(totals > 0, totals, 1.0), 0.0)
            evidence = local.sum() / grand if grand > 0 else 0.0
        return {"prior": prior, "likelihood": likelihood, "evidence": evidence}

    def posterior(self, role: str, state: StageState) -> MixedAction:
        actions = self._feasible[state][0 if role == "soldier" else 1]
        if len(actions) == 1:
            return MixedAction.pure(actions[0])
        f = self.bayes_factors(role, state)
        if f["evidence"] == 0.0:
            return UNIFORM
        post = f["likelihood"] * f["prior"] / f["evidence"]
        p = float(post[0] / post.sum())
        return MixedAction(min(1.0, max(0.0, p)))

    def soldier_posterior(self) -> dict:
        return {s: self.posterior("soldier", s) for s in self.state_visits}

    def attacker_posterior(self) -> dict:
        return {s: self.posterior("attacker", s) for s in self.state_visits}

    def beliefs(self) -> BeliefSystem:
        p_soldier = self.soldier_posterior()
        p_attacker = self.attacker_posterior()
        return BeliefSystem(
            soldier_first=p_attacker,
            soldier_second=p_soldier,
            attacker_first=p_soldier,
            attacker_second=p_attacker,
        )


def init_priors(config: GameConfig, pseudocount: float = 1.0) -> PosteriorCounters:
    return PosteriorCounters(config, pseudocount)


def update_posteriors(counters: PosteriorCounters, realized) -> PosteriorCounters:
    """Return a new counter table with ``realized`` recorded; the input is untouched."""
    out = counters.copy()
    out.record(realized)
    return out


def _argmax_first(utilities, actions):
    best = max(utilities[a] for a in actions)
    for a in sorted(actions):
        if utilities[a] >= best - TIE_TOL:
            return a


def best_response_step(
    config: GameConfig, first: Mapping, second: Mapping, role: str, utility: str = "psychological"
) -> dict:
    """Pure best response of ``role`` at every state.

    ``first`` is the belief about the opponent's play and ``second`` the
    belief about the opponent's belief about the player. The player's own
    continuation follows its best response further down the tree; the
    opponent's payoffs inside the frustration terms are valued under the
    belief profile. Ties go to connect/jam.
    """
    if role not in ("soldier", "attacker"):
        raise InvalidParameterError(f"role must be 'soldier' or 'attacker', got {role!r}")
    psych = utility == "psychological"
    own = {}
    if role == "soldier":
        w = config.soldier_frustration_weight if psych else 0.0
        _, opp_values = profile_values(config, second, first)
        own.update({s: 1.0 for s in terminal_states(config)})
    else:
        w = config.attacker_frustration_weight if psych else 0.0
        opp_values, _ = profile_values(config, first, second)
        own.update({s: config.power_weight for s in terminal_states(config)})

    out = {}
    for state in reversed(reachable_states(config)):
        soldier_actions, attacker_actions = feasible_actions(config, state)
        if role == "soldier":
            payoffs = build_stage_payoffs(config, state, own, opp_values)
            ps, _ = psychological_payoffs(payoffs, second[state].p_first, 0.0, w, 0.0)
            b = first[state].p_first
            u = [b * ps[n, 0] + (1 - b) * ps[n, 1] for n in (0, 1)]
            choice = _argmax_first(u, soldier_actions)
            own[state] = b * payoffs.soldier[choice, 0] + (1 - b) * payoffs.soldier[choice, 1]
        else:
            payoffs = build_stage_payoffs(config, state, opp_values, own)
            _, pa = psychological_payoffs(payoffs, 0.0, second[state].p_first, 0.0, w)
            a = first[state].p_first
            u = [a * pa[0, m] + (1 - a) * pa[1, m] for m in (0, 1)]
            choice = _argmax_first(u, attacker_actions)
            own[state] = a * payoffs.attacker[0, choice] + (1 - a) * payoffs.attacker[1, choice]
        out[state] = MixedAction.pure(choice)
    return out


def epsilon_like(belief, target, epsilon: float) -> bool:
    """Whether ``belief`` epsilon-likes ``target``.

    Both total masses must exceed ``1 - epsilon`` and every component must
    satisfy ``(1 - eps) t <= b <= (1 + eps) t``.
    """
    if not 0.0 < epsilon < 1.0:
        raise InvalidParameterError("epsilon must lie in (0, 1)")
    b = np.asarray(belief.probs if isinstance(belief, MixedAction) else belief, dtype=float)
    t = np.asarray(target.probs if isinstance(target, MixedAction) else target, dtype=float)
    if b.sum() <= 1.0 - epsilon or t.sum() <= 1.0 - epsilon:
        return False
    return bool(np.all((1.0 - epsilon) * t <= b) and np.all(b <= (1.0 + epsilon) * t))


@dataclass
class LearningTrace:
    seed: int
    game: dict
    learning: dict
    histories: list = field(default_factory=list)
    beliefs: list = field(default_factory=list)
    soldier_payoffs: list = field(default_factory=list)
    attacker_payoffs: list = field(default_factory=list)
    soldier_frustration: list = field(default_factory=list)
    attacker_frustration: list = field(default_factory=list)
    epsilon_flags: list = field(default_factory=list)
    converged_at: int | None = None
    visits: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.histories)

    def final_beliefs(self) -> BeliefSystem:
        snap = self.beliefs[-1]
        p_soldier = {s: MixedAction(v[0]) for s, v in snap.items()}
        p_attacker = {s: MixedAction(v[1]) for s, v in snap.items()}
        return BeliefSystem(p_attacker, p_soldier, p_soldier, p_attacker)

    def final_profile(self) -> StrategyProfile:
        """Behavioral strategies implied by the empirical play frequencies."""
        snap = self.beliefs[-1]
        return StrategyProfile(
            soldier={s: MixedAction(v[0]) for s, v in snap.items()},
            attacker={s: MixedAction(v[1]) for s, v in snap.items()},
        )

    def to_dict(self) -> dict:
        def key(s):
            return f"{s.step},{s.connections},{s.attacks}"

        data = asdict(self)
        data["beliefs"] = [{key(s): list(v) for s, v in snap.items()} for snap in self.beliefs]
        data["visits"] = {key(s): v for s, v in self.visits.items()}
        data["histories"] = [[list(p) for p in h] for h in self.histories]
        return data

    @classmethod
    def from_dict(cls, data: Mapping) -> "LearningTrace":
        def state(k):
            return StageState(*(int(x) for x in k.split(",")))

        data = dict(data)
        data["beliefs"] = [{state(k): tuple(v) for k, v in snap.items()} for snap in data["beliefs"]]
        data["visits"] = {state(k): v for k, v in data.get("visits", {}).items()}
        data["histories"] = [tuple(tuple(p) for p in h) for h in data["histories"]]
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "LearningTrace":
        return cls.from_dict(json.loads(text))


def _snapshot(beliefs: BeliefSystem) -> dict:
    return {s: (beliefs.attacker_first[s].p_first, beliefs.soldier_first[s].p_first) for s in beliefs.soldier_first}


def _snapshots_close(current, previous, epsilon):
    # absolute closeness: the multiplicative test never settles on the tiny
    # smoothed mass of an action that is never played
    return all(
        abs(p_s - previous[s][0]) <= epsilon and abs(p_a - previous[s][1]) <= epsilon
        for s, (p_s, p_a) in current.items()
    )


def _sample(rng, mix: MixedAction, actions, explore_p):
    # three draws per player and state keep the stream aligned across branches
    u_explore, u_pick, u_mix = rng.random(3)
    if len(actions) == 1:
        return actions[0]
    if u_explore < explore_p:
        return actions[int(u_pick * len(actions))]
    return actions[0] if u_mix < mix.p_first else actions[1]


def run_learning(
    config: GameConfig,
    learn_config: LearningConfig,
    soldier_script: Mapping | None = None,
    attacker_script: Mapping | None = None,
    on_iteration: Callable | None = None,
) -> LearningTrace:
    """Repeat best-response play and belief updating.

    A scripted player plays its fixed mixed strategy instead of best
    responding, which gives the opponent's beliefs a known target.
    """
    rng = np.random.default_rng(learn_config.rng_seed)
    counters = init_priors(config, learn_config.pseudocount)
    trace = LearningTrace(
        seed=int(learn_config.rng_seed),
        game=config_to_dict(config),
        learning=asdict(learn_config),
    )
    beliefs = counters.beliefs()
    snapshots = [_snapshot(beliefs)]
    trace.beliefs.append(snapshots[0])
    streak = 0
    window = learn_config.convergence_window
    for t in range(1, learn_config.max_iterations + 1):
        if soldier_script is None:
            s_play = best_response_step(config, beliefs.soldier_first, beliefs.soldier_second, "soldier", learn_config.utility)
        else:
            s_play = soldier_script
        if attacker_script is None:
            a_play = best_response_step(config, beliefs.attacker_first, beliefs.attacker_second, "attacker", learn_config.utility)
        else:
            a_play = attacker_script

        explore_p = learn_config.exploration / t
        state = initial_state(config)
        history = []
        while not is_terminal(config, state):
            soldier_actions, attacker_actions = feasible_actions(config, state)
            a = _sample(rng, s_play[state], soldier_actions, 0.0 if soldier_script is not None else explore_p)
            b = _sample(rng, a_play[state], attacker_actions, 0.0 if attacker_script is not None else explore_p)
            history.append((a, b))
            state = advance(state, a, b)
        history = tuple(history)

        # expectations use the beliefs held before this traversal
        sv, _ = profile_values(config, beliefs.soldier_second, beliefs.soldier_first)
        _, av = profile_values(config, beliefs.attacker_first, beliefs.attacker_second)
        root = initial_state(config)
        actual_s = soldier_terminal_payoff(config, history)
        actual_a = attacker_terminal_payoff(config, history)
        counters.record(history)
        beliefs = counters.beliefs()

        snap = _snapshot(beliefs)
        snapshots.append(snap)
        trace.histories.append(history)
        trace.beliefs.append(snap)
        trace.soldier_payoffs.append(sv[root])
        trace.attacker_payoffs.append(av[root])
        trace.soldier_frustration.append(max(0.0, sv[root] - actual_s))
        trace.attacker_frustration.append(max(0.0, av[root] - actual_a))
        flag = t >= window and _snapshots_close(snap, snapshots[t - window], learn_config.epsilon)
        trace.epsilon_flags.append(bool(flag))
        streak = streak + 1 if flag else 0
        if on_iteration is not None:
            on_iteration(t, counters)
        if streak >= window and trace.converged_at is None:
            trace.converged_at = t
            if learn_config.stop_on_convergence:
                break
    trace.visits = dict(counters.state_visits)
    return trace


@dataclass
class PSCEReport:
    is_psce: bool
    reached_states: list
    belief_violations: list
    deviation_gains: dict
    max_deviation_gain: float


def _rationality_gains(config, profile: StrategyProfile, beliefs: BeliefSystem, utility="psychological"):
    """Best stage-level deviation gain of each player's strategy against its beliefs."""
    psych = utility == "psychological"
    w_s = config.soldier_frustration_weight if psych else 0.0
    w_a = config.attacker_frustration_weight if psych else 0.0
    own_s, _ = profile_values(config, profile.soldier, beliefs.soldier_first)
    _, perceived_a = profile_values(config, beliefs.soldier_second, beliefs.soldier_first)
    perceived_s, _ = profile_values(config, beliefs.attacker_first, beliefs.attacker_second)
    _, own_a = profile_values(config, beliefs.attacker_first, profile.attacker)
    gains = {}
    for state in reachable_states(config):
        soldier_actions, attacker_actions = feasible_actions(config, state)
        gs = ga = 0.0
        if len(soldier_actions) == 2:
            payoffs = build_stage_payoffs(config, state, own_s, perceived_a)
            ps, _ = psychological_payoffs(payoffs, beliefs.soldier_second[state].p_first, 0.0, w_s, 0.0)
            b = beliefs.soldier_first[state].p_first
            u = [b * ps[n, 0] + (1 - b) * ps[n, 1] for n in (0, 1)]
            x = profile.soldier[state].p_first
            gs = max(u) - (x * u[0] + (1 - x) * u[1])
        if len(attacker_actions) == 2:
            payoffs = build_stage_payoffs(config, state, perceived_s, own_a)
            _, pa = psychological_payoffs(payoffs, 0.0, beliefs.attacker_second[state].p_first, 0.0, w_a)
            a = beliefs.attacker_first[state].p_first
            u = [a * pa[0, m] + (1 - a) * pa[1, m] for m in (0, 1)]
            y = profile.attacker[state].p_first
            ga = max(u) - (y * u[0] + (1 - y) * u[1])
        gains[state] = (max(gs, 0.0), max(ga, 0.0))
    return gains


def detect_psce(
    config: GameConfig,
    trace: LearningTrace,
    epsilon: float,
    profile: StrategyProfile | None = None,
    tol: float = RATIONALITY_TOL,
) -> PSCEReport:
    """Check the self-confirming conditions at states the final profile reaches.

    Unless ``profile`` is given, the final strategies are the empirical play
    frequencies recorded in the trace.
    """
    if not trace.beliefs:
        raise InvalidParameterError("trace is empty")
    beliefs = trace.final_beliefs()
    profile = profile or trace.final_profile()
    reach = state_reach(config, profile.soldier, profile.attacker)
    reached = [s for s, p in reach.items() if p > 0.0]
    utility = trace.learning.get("utility", "psychological")
    gains = _rationality_gains(config, profile, beliefs, utility)
    violations = []
    checks = (
        ("rho1~alpha", beliefs.attacker_first, profile.soldier),
        ("delta1~beta", beliefs.soldier_first, profile.attacker),
        ("rho2~delta1", beliefs.attacker_second, beliefs.soldier_first),
        ("delta2~rho1", beliefs.soldier_second, beliefs.attacker_first),
    )
    for s in reached:
        for name, belief, target in checks:
            if not epsilon_like(belief[s], target[s], epsilon):
                violations.append((s, name))
    max_gain = max((max(gains[s]) for s in reached), default=0.0)
    return PSCEReport(
        is_psce=not violations and max_gain <= tol,
        reached_states=reached,
        belief_violations=violations,
        deviation_gains=gains,
        max_deviation_gain=max_gain,
    )


# spelling used in the public interface description
detect_pscE = detect_psce


def trace_from_solution(config: GameConfig, solution: EquilibriumSolution, seed: int = 0) -> LearningTrace:
    """A single-snapshot trace whose beliefs are the solution's (error-free) beliefs."""
    snap = {s: (solution.profile.soldier[s].p_first, solution.profile.attacker[s].p_first) for s in solution.stages}
    return LearningTrace(
        seed=seed,
        game=config_to_dict(config),
        learning=asdict(LearningConfig(max_iterations=0, rng_seed=seed)),
        beliefs=[snap],
    )


def replay(trace: LearningTrace, **overrides) -> LearningTrace:
    """Re-run the learning run recorded in ``trace`` from its stored configs."""
    config = config_from_dict(trace.game)
    learn = LearningConfig(**{**trace.learning, **overrides})
    return run_learning(config, learn)

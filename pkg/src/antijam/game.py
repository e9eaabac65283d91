"""The constrained finite-horizon soldier/jammer game.

At every device along the path the soldier either connects (action 0) or
skips (action 1) while the attacker either jams (action 0) or idles
(action 1). The soldier must make exactly ``required_connections`` connections
and the attacker may jam at most ``max_attacks`` times. Payoffs depend on the
history only through the step index and the two counters, so strategies and
beliefs are keyed by :class:`StageState`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .channel import FadingModel, LinkBudget, stage_delay
from .exceptions import InfeasibleStateError, InvalidParameterError

CONNECT, SKIP = 0, 1
JAM, IDLE = 0, 1
SOLDIER_ACTIONS = ("connect", "skip")
ATTACKER_ACTIONS = ("jam", "idle")

History = tuple  # tuple of (soldier_action, attacker_action) pairs


class StageState(NamedTuple):
    step: int
    connections: int
    attacks: int


@dataclass(frozen=True)
class MixedAction:
    """Two-point distribution; ``p_first`` is P(connect) or P(jam)."""

    p_first: float

    def __post_init__(self):
        object.__setattr__(self, "p_first", float(self.p_first))
        if not (0.0 <= self.p_first <= 1.0) or math.isnan(self.p_first):
            raise InvalidParameterError(f"probability out of range: {self.p_first!r}")

    @property
    def p_second(self) -> float:
        return 1.0 - self.p_first

    @property
    def probs(self) -> tuple[float, float]:
        return (self.p_first, 1.0 - self.p_first)

    def prob(self, action: int) -> float:
        return self.p_first if action == 0 else 1.0 - self.p_first

    @classmethod
    def pure(cls, action: int) -> "MixedAction":
        return cls(1.0 if action == 0 else 0.0)


UNIFORM = MixedAction(0.5)


@dataclass
class StrategyProfile:
    soldier: dict = field(default_factory=dict)
    attacker: dict = field(default_factory=dict)


@dataclass
class BeliefSystem:
    """First- and second-order beliefs of both players, per state.

    ``soldier_first`` is the soldier's belief about the attacker,
    ``soldier_second`` its belief about the attacker's belief about the
    soldier; the attacker's maps mirror these.
    """

    soldier_first: dict = field(default_factory=dict)
    soldier_second: dict = field(default_factory=dict)
    attacker_first: dict = field(default_factory=dict)
    attacker_second: dict = field(default_factory=dict)

    @classmethod
    def error_free(cls, profile: StrategyProfile) -> "BeliefSystem":
        return cls(
            soldier_first=dict(profile.attacker),
            soldier_second=dict(profile.soldier),
            attacker_first=dict(profile.soldier),
            attacker_second=dict(profile.attacker),
        )


@dataclass(frozen=True)
class GameConfig:
    links: tuple
    required_connections: int = 1
    jam_power_per_attack_mw: float = 100.0
    power_budget_mw: float = 100.0
    delay_tolerance_s: float = 0.08
    delay_weight: float = 0.5
    power_weight: float = 0.5
    soldier_frustration_weight: float = 0.5
    attacker_frustration_weight: float = 0.5
    fading: FadingModel = FadingModel()
    channel_method: str = "closed_form"

    def __post_init__(self):
        links = tuple(self.links)
        object.__setattr__(self, "links", links)
        if not links:
            raise InvalidParameterError("at least one device link is required")
        if not all(isinstance(link, LinkBudget) for link in links):
            raise InvalidParameterError("links must be LinkBudget instances")
        if not 1 <= self.required_connections <= len(links):
            raise InvalidParameterError("required_connections must lie in [1, device_count]")
        if not self.jam_power_per_attack_mw > 0:
            raise InvalidParameterError("jam_power_per_attack_mw must be positive")
        if self.power_budget_mw < 0:
            raise InvalidParameterError("power_budget_mw must be nonnegative")
        if not self.delay_tolerance_s > 0:
            raise InvalidParameterError("delay_tolerance_s must be positive")
        for name in (
            "delay_weight",
            "power_weight",
            "soldier_frustration_weight",
            "attacker_frustration_weight",
        ):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1]")
        if abs(self.delay_weight + self.power_weight - 1.0) > 1e-12:
            raise InvalidParameterError("delay_weight + power_weight must equal 1")

    @property
    def device_count(self) -> int:
        return len(self.links)

    @property
    def max_attacks(self) -> int:
        return int(math.floor(self.power_budget_mw / self.jam_power_per_attack_mw + 1e-9))

    @cached_property
    def delays(self) -> np.ndarray:
        """``delays[x, jam]`` is the delay of connecting at device ``x``; column 0 jammed."""
        out = np.empty((self.device_count, 2))
        for x, link in enumerate(self.links):
            out[x, JAM] = stage_delay(link, self.fading, True, True, self.channel_method)
            out[x, IDLE] = stage_delay(link, self.fading, True, False, self.channel_method)
        return out

    def delay(self, step: int, soldier_action: int, attacker_action: int) -> float:
        if soldier_action != CONNECT:
            return 0.0
        return float(self.delays[step - 1, attacker_action])

    def jam_cost(self) -> float:
        """Fraction of the power budget spent by one attack (0 when there is no budget)."""
        if self.power_budget_mw == 0:
            return 0.0
        return self.jam_power_per_attack_mw / self.power_budget_mw


def initial_state(config: GameConfig | None = None) -> StageState:
    return StageState(1, 0, 0)


def is_terminal(config: GameConfig, state: StageState) -> bool:
    return state.step > config.device_count


def check_state(config: GameConfig, state: StageState) -> None:
    x, c, k = state
    n = config.device_count
    if not 1 <= x <= n + 1:
        raise InfeasibleStateError(f"step {x} outside [1, {n + 1}]")
    if c < 0 or k < 0 or c > x - 1 or k > x - 1:
        raise InfeasibleStateError(f"counters of {state} inconsistent with its step")
    if c > config.required_connections or k > config.max_attacks:
        raise InfeasibleStateError(f"{state} exceeds a constraint")
    if config.required_connections - c > n - x + 1:
        raise InfeasibleStateError(f"{state} cannot reach the required connections")


def feasible_actions(config: GameConfig, state: StageState) -> tuple[tuple, tuple]:
    check_state(config, state)
    if is_terminal(config, state):
        raise InfeasibleStateError(f"{state} is terminal")
    remaining_steps = config.device_count - state.step + 1
    remaining_needed = config.required_connections - state.connections
    if remaining_needed == 0:
        soldier = (SKIP,)
    elif remaining_needed == remaining_steps:
        soldier = (CONNECT,)
    else:
        soldier = (CONNECT, SKIP)
    attacker = (IDLE,) if state.attacks >= config.max_attacks else (JAM, IDLE)
    return soldier, attacker


def advance(state: StageState, soldier_action: int, attacker_action: int, config: GameConfig | None = None):
    """Successor state after the action pair; validated against ``config`` when given."""
    if soldier_action not in (CONNECT, SKIP) or attacker_action not in (JAM, IDLE):
        raise InvalidParameterError("actions must be 0 or 1")
    if config is not None:
        soldier, attacker = feasible_actions(config, state)
        if soldier_action not in soldier or attacker_action not in attacker:
            raise InfeasibleStateError(
                f"action pair ({soldier_action}, {attacker_action}) infeasible at {state}"
            )
    return StageState(
        state.step + 1,
        state.connections + (soldier_action == CONNECT),
        state.attacks + (attacker_action == JAM),
    )


@lru_cache(maxsize=64)
def _state_tables(config: GameConfig):
    nonterminal = []
    terminal = []
    frontier = [initial_state(config)]
    seen = set(frontier)
    while frontier:
        nxt = []
        for state in frontier:
            if is_terminal(config, state):
                terminal.append(state)
                continue
            nonterminal.append(state)
            soldier, attacker = feasible_actions(config, state)
            for a in soldier:
                for b in attacker:
                    child = advance(state, a, b)
                    if child not in seen:
                        seen.add(child)
                        nxt.append(child)
        frontier = nxt
    return tuple(sorted(nonterminal)), tuple(sorted(terminal))


def reachable_states(config: GameConfig) -> tuple:
    """Non-terminal states reachable under feasible play, sorted by (step, counters)."""
    return _state_tables(config)[0]


def terminal_states(config: GameConfig) -> tuple:
    return _state_tables(config)[1]


def states_along(history: Sequence) -> list:
    """States visited by a (partial) history, one per action pair."""
    state = initial_state()
    out = []
    for a, b in history:
        out.append(state)
        state = advance(state, a, b)
    return out


@lru_cache(maxsize=64)
def enumerate_terminals(config: GameConfig) -> tuple:
    """All feasible terminal histories in lexicographic order of (step, soldier, attacker)."""
    out = []

    def walk(state, prefix):
        if is_terminal(config, state):
            out.append(tuple(prefix))
            return
        soldier, attacker = feasible_actions(config, state)
        for a in soldier:
            for b in attacker:
                prefix.append((a, b))
                walk(advance(state, a, b), prefix)
                prefix.pop()

    walk(initial_state(config), [])
    return tuple(out)


def check_terminal(config: GameConfig, history: Sequence) -> None:
    if len(history) != config.device_count:
        raise InfeasibleStateError("terminal history must have one action pair per device")
    connections = sum(1 for a, _ in history if a == CONNECT)
    jams = sum(1 for _, b in history if b == JAM)
    if connections != config.required_connections:
        raise InfeasibleStateError(f"history makes {connections} connections, need {config.required_connections}")
    if jams * config.jam_power_per_attack_mw > config.power_budget_mw * (1 + 1e-12):
        raise InfeasibleStateError("history exceeds the jamming power budget")


def total_delay(config: GameConfig, history: Sequence) -> float:
    return sum(config.delay(x, a, b) for x, (a, b) in enumerate(history, start=1))


def soldier_terminal_payoff(config: GameConfig, history: Sequence) -> float:
    """Normalized delay slack ``(Delta - tau) / Delta``; negative once delay exceeds Delta."""
    check_terminal(config, history)
    return (config.delay_tolerance_s - total_delay(config, history)) / config.delay_tolerance_s


def attacker_terminal_payoff(config: GameConfig, history: Sequence) -> float:
    check_terminal(config, history)
    delay_term = config.delay_weight * total_delay(config, history) / config.delay_tolerance_s
    if config.power_budget_mw == 0:
        return delay_term + config.power_weight
    spent = config.jam_power_per_attack_mw * sum(1 for _, b in history if b == JAM)
    return delay_term + config.power_weight * (config.power_budget_mw - spent) / config.power_budget_mw


def reach_probability(history: Sequence, soldier_side: Mapping, attacker_side: Mapping) -> float:
    """Product of per-step probabilities of the realized actions.

    Which maps are passed decides which quantity this is: strategies for the
    true distribution, or any mix of first/second-order beliefs for the
    perceived ones.
    """
    prob = 1.0
    state = initial_state()
    for a, b in history:
        try:
            prob *= soldier_side[state].prob(a) * attacker_side[state].prob(b)
        except KeyError:
            raise InfeasibleStateError(f"no distribution supplied for {state}") from None
        if prob == 0.0:
            return 0.0
        state = advance(state, a, b)
    return prob


@dataclass(frozen=True)
class TerminalTable:
    histories: tuple
    soldier_payoffs: np.ndarray
    attacker_payoffs: np.ndarray


@lru_cache(maxsize=64)
def terminal_table(config: GameConfig) -> TerminalTable:
    histories = enumerate_terminals(config)
    soldier = np.array([soldier_terminal_payoff(config, h) for h in histories])
    attacker = np.array([attacker_terminal_payoff(config, h) for h in histories])
    return TerminalTable(histories, soldier, attacker)


def reach_vector(config: GameConfig, soldier_side: Mapping, attacker_side: Mapping) -> np.ndarray:
    table = terminal_table(config)
    return np.array([reach_probability(h, soldier_side, attacker_side) for h in table.histories])


def expected_material_payoff(config: GameConfig, soldier_side: Mapping, attacker_side: Mapping, who: str) -> float:
    """Expected terminal payoff of ``who`` when the two maps drive the actions."""
    table = terminal_table(config)
    reach = reach_vector(config, soldier_side, attacker_side)
    if who == "soldier":
        return float(reach @ table.soldier_payoffs)
    if who == "attacker":
        return float(reach @ table.attacker_payoffs)
    raise InvalidParameterError(f"who must be 'soldier' or 'attacker', got {who!r}")


def uniform_map(config: GameConfig, role: str) -> dict:
    """Uniform distribution over feasible actions at every reachable state."""
    out = {}
    for state in reachable_states(config):
        soldier, attacker = feasible_actions(config, state)
        actions = soldier if role == "soldier" else attacker
        out[state] = UNIFORM if len(actions) == 2 else MixedAction.pure(actions[0])
    return out


def restrict_to_feasible(config: GameConfig, role: str, mapping: Mapping) -> dict:
    """Replace entries at forced states by the forced pure action."""
    out = dict(mapping)
    for state in reachable_states(config):
        soldier, attacker = feasible_actions(config, state)
        actions = soldier if role == "soldier" else attacker
        if len(actions) == 1:
            out[state] = MixedAction.pure(actions[0])
    return out


def profile_values(config: GameConfig, soldier_side: Mapping, attacker_side: Mapping):
    """Expected material continuation values of both players at every state.

    Returns ``(soldier_values, attacker_values)`` keyed by state, terminal
    states included. Each value covers the payoff still to come from that
    state on, plus the constant terminal term (1 for the soldier, the power
    weight for the attacker).
    """
    soldier_values = {}
    attacker_values = {}
    for state in terminal_states(config):
        soldier_values[state] = 1.0
        attacker_values[state] = config.power_weight
    delta = config.delay_tolerance_s
    theta1 = config.delay_weight
    jam_cost = config.power_weight * config.jam_cost()
    for state in reversed(reachable_states(config)):
        soldier, attacker = feasible_actions(config, state)
        ps = soldier_side[state]
        pa = attacker_side[state]
        vs = va = 0.0
        for a in soldier:
            for b in attacker:
                p = ps.prob(a) * pa.prob(b)
                if p == 0.0:
                    continue
                child = advance(state, a, b)
                tau = config.delay(state.step, a, b)
                vs += p * (soldier_values[child] - tau / delta)
                va += p * (attacker_values[child] + theta1 * tau / delta - (jam_cost if b == JAM else 0.0))
        soldier_values[state] = vs
        attacker_values[state] = va
    return soldier_values, attacker_values


def state_reach(config: GameConfig, soldier_side: Mapping, attacker_side: Mapping) -> dict:
    """Probability of reaching each non-terminal state."""
    reach = {state: 0.0 for state in reachable_states(config)}
    reach[initial_state(config)] = 1.0
    for state in reachable_states(config):
        p_state = reach[state]
        if p_state == 0.0:
            continue
        soldier, attacker = feasible_actions(config, state)
        for a in soldier:
            for b in attacker:
                child = advance(state, a, b)
                if child in reach:
                    reach[child] += p_state * soldier_side[state].prob(a) * attacker_side[state].prob(b)
    return reach


def device_marginals(config: GameConfig, profile: StrategyProfile) -> tuple[np.ndarray, np.ndarray]:
    """Per-device probabilities that the soldier connects and the attacker jams."""
    reach = state_reach(config, profile.soldier, profile.attacker)
    connect = np.zeros(config.device_count)
    jam = np.zeros(config.device_count)
    for state, p in reach.items():
        connect[state.step - 1] += p * profile.soldier[state].p_first
        jam[state.step - 1] += p * profile.attacker[state].p_first
    return connect, jam


_LINK_FIELDS = (
    "soldier_tx_power_mw",
    "jammer_tx_power_mw",
    "soldier_distance_m",
    "jammer_distance_m",
    "pathloss_exponent",
    "noise_power_mw",
    "sinr_threshold",
    "success_target",
    "max_retransmissions",
    "block_size_bits",
    "bandwidth_hz",
)
_GAME_FIELDS = (
    "required_connections",
    "jam_power_per_attack_mw",
    "power_budget_mw",
    "delay_tolerance_s",
    "delay_weight",
    "power_weight",
    "soldier_frustration_weight",
    "attacker_frustration_weight",
    "channel_method",
)


def config_to_dict(config: GameConfig) -> dict:
    """Plain-data form of ``config`` (linear units), used by traces and replay."""
    out = {name: getattr(config, name) for name in _GAME_FIELDS}
    out["fading"] = {"kind": config.fading.kind, "mean": config.fading.mean}
    out["links"] = [{name: getattr(link, name) for name in _LINK_FIELDS} for link in config.links]
    return out


def config_from_dict(data: Mapping) -> GameConfig:
    data = dict(data)
    links = tuple(LinkBudget(**link) for link in data.pop("links"))
    fading = FadingModel(**data.pop("fading", {}))
    return GameConfig(links=links, fading=fading, **data)

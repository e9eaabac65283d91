import itertools

import numpy as np
import pytest

from antijam.exceptions import InfeasibleStateError, InvalidParameterError
from antijam.game import (
    CONNECT,
    IDLE,
    JAM,
    SKIP,
    GameConfig,
    MixedAction,
    StageState,
    advance,
    attacker_terminal_payoff,
    check_terminal,
    config_from_dict,
    config_to_dict,
    enumerate_terminals,
    expected_material_payoff,
    feasible_actions,
    profile_values,
    reach_probability,
    reachable_states,
    soldier_terminal_payoff,
    state_reach,
    total_delay,
    uniform_map,
)

from helpers import brute_force_reach, make_game


def test_feasible_actions_forcing():
    cfg = make_game(3, required_connections=1)
    assert feasible_actions(cfg, StageState(1, 0, 0)) == ((CONNECT, SKIP), (JAM, IDLE))
    # one connection still needed on the last device
    assert feasible_actions(cfg, StageState(3, 0, 1))[0] == (CONNECT,)
    # requirement met
    assert feasible_actions(cfg, StageState(2, 1, 0))[0] == (SKIP,)
    # budget exhausted
    assert feasible_actions(cfg, StageState(2, 0, 1))[1] == (IDLE,)


def test_infeasible_states_rejected():
    cfg = make_game(3)
    with pytest.raises(InfeasibleStateError):
        feasible_actions(cfg, StageState(4, 1, 0))
    with pytest.raises(InfeasibleStateError):
        feasible_actions(cfg, StageState(2, 2, 0))
    with pytest.raises(InfeasibleStateError):
        advance(StageState(2, 1, 1), CONNECT, JAM, cfg)


def test_advance_counts():
    assert advance(StageState(1, 0, 0), CONNECT, JAM) == StageState(2, 1, 1)
    assert advance(StageState(1, 0, 0), SKIP, IDLE) == StageState(2, 0, 0)
    with pytest.raises(InvalidParameterError):
        advance(StageState(1, 0, 0), 2, 0)


@pytest.mark.parametrize("devices,j,attacks", [(3, 1, 1), (4, 2, 1), (4, 2, 2), (3, 3, 1)])
def test_terminal_enumeration_matches_brute_force(devices, j, attacks):
    cfg = make_game(devices, required_connections=j, power_budget_mw=100.0 * attacks)
    brute = set()
    for pairs in itertools.product(itertools.product((0, 1), repeat=2), repeat=devices):
        if sum(a == CONNECT for a, _ in pairs) == j and sum(b == JAM for _, b in pairs) <= attacks:
            brute.add(pairs)
    got = enumerate_terminals(cfg)
    assert set(got) == brute and len(got) == len(brute)
    assert list(got) == sorted(got)
    for h in got:
        check_terminal(cfg, h)


def test_terminal_payoffs_by_hand():
    cfg = make_game(3)
    h = ((SKIP, JAM), (CONNECT, IDLE), (SKIP, IDLE))
    tau = cfg.delays[1, IDLE]
    assert total_delay(cfg, h) == pytest.approx(tau)
    assert soldier_terminal_payoff(cfg, h) == pytest.approx((0.08 - tau) / 0.08)
    assert attacker_terminal_payoff(cfg, h) == pytest.approx(0.5 * tau / 0.08 + 0.5 * 0.0)
    with pytest.raises(InfeasibleStateError):
        soldier_terminal_payoff(cfg, ((SKIP, IDLE),) * 3)


def test_zero_budget_attacker_payoff():
    cfg = make_game(2, power_budget_mw=0.0)
    assert cfg.max_attacks == 0
    h = ((CONNECT, IDLE), (SKIP, IDLE))
    assert attacker_terminal_payoff(cfg, h) == pytest.approx(0.5 * cfg.delays[0, IDLE] / 0.08 + 0.5)


def test_weights_must_sum_to_one():
    with pytest.raises(InvalidParameterError):
        make_game(2, delay_weight=0.7, power_weight=0.7)


def _random_maps(cfg, rng):
    s = {st: MixedAction(float(rng.uniform())) for st in reachable_states(cfg)}
    a = {st: MixedAction(float(rng.uniform())) for st in reachable_states(cfg)}
    from antijam.game import restrict_to_feasible

    return restrict_to_feasible(cfg, "soldier", s), restrict_to_feasible(cfg, "attacker", a)


@pytest.mark.parametrize("seed", range(5))
def test_reach_sums_to_one_and_values_agree(seed):
    rng = np.random.default_rng(seed)
    cfg = make_game(4, seed=seed, required_connections=2)
    s_map, a_map = _random_maps(cfg, rng)
    histories = enumerate_terminals(cfg)
    reach = [reach_probability(h, s_map, a_map) for h in histories]
    assert sum(reach) == pytest.approx(1.0, abs=1e-12)
    assert reach == pytest.approx([brute_force_reach(h, s_map, a_map) for h in histories])
    sv, av = profile_values(cfg, s_map, a_map)
    root = StageState(1, 0, 0)
    assert sv[root] == pytest.approx(expected_material_payoff(cfg, s_map, a_map, "soldier"), abs=1e-12)
    assert av[root] == pytest.approx(expected_material_payoff(cfg, s_map, a_map, "attacker"), abs=1e-12)


def test_state_reach_matches_history_sums():
    rng = np.random.default_rng(3)
    cfg = make_game(3)
    s_map, a_map = _random_maps(cfg, rng)
    reach = state_reach(cfg, s_map, a_map)
    per_step = {}
    for st, p in reach.items():
        per_step[st.step] = per_step.get(st.step, 0.0) + p
    assert all(v == pytest.approx(1.0) for v in per_step.values())


def test_uniform_map_is_pure_at_forced_states():
    cfg = make_game(3)
    u = uniform_map(cfg, "soldier")
    assert u[StageState(3, 0, 0)].p_first == 1.0
    assert u[StageState(1, 0, 0)].p_first == 0.5


def test_config_roundtrip():
    cfg = make_game(3, delay_weight=0.3, power_weight=0.7)
    again = config_from_dict(config_to_dict(cfg))
    assert again == cfg
    assert np.array_equal(again.delays, cfg.delays)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from antijam.equilibrium import (
    StagePayoffs,
    attacker_curve_coefficients,
    attacker_gap,
    build_stage_payoffs,
    curve_alpha_of_beta,
    curve_alpha_of_beta_soldier,
    psychological_payoffs,
    soldier_gap,
    solve_game,
    solve_stage_ne,
    solve_stage_pe,
    verify_equilibrium,
)
from antijam.exceptions import InvalidParameterError, SingularityError
from antijam.game import (
    CONNECT,
    JAM,
    StageState,
    advance,
    enumerate_terminals,
    expected_material_payoff,
    feasible_actions,
    reachable_states,
    soldier_terminal_payoff,
    attacker_terminal_payoff,
)

import oracles
from helpers import make_game, random_regular_stage


def test_matching_pennies_shape_gives_half():
    p = np.array([[0.0, 1.0], [1.0, 0.0]]) * 3 + 2
    q = np.array([[1.0, 0.0], [0.0, 1.0]]) * 5 - 1
    eq = solve_stage_ne(StagePayoffs(p, q))
    assert eq.soldier_mix.p_first == pytest.approx(0.5)
    assert eq.attacker_mix.p_first == pytest.approx(0.5)
    assert eq.kind == "interior_mixed"


def test_dominant_strategy_goes_pure():
    p = np.array([[1.0, 2.0], [0.0, 1.0]])  # connect dominates
    q = np.array([[1.0, 0.0], [0.0, 0.5]])
    eq = solve_stage_ne(StagePayoffs(p, q))
    assert (eq.soldier_mix.p_first, eq.attacker_mix.p_first) == (1.0, 1.0)
    pe = solve_stage_pe(StagePayoffs(p, q), 0.5, 0.5)
    assert pe.soldier_mix.p_first == 1.0


def test_forced_stage():
    p = np.array([[0.2, 0.9], [0.0, 0.0]])
    q = np.array([[0.4, 0.1], [0.0, 0.0]])
    eq = solve_stage_ne(StagePayoffs(p, q, soldier_actions=(CONNECT,)))
    assert eq.soldier_mix.p_first == 1.0 and eq.attacker_mix.p_first == 1.0
    assert eq.kind == "forced"


@pytest.mark.parametrize("seed", range(20))
def test_psych_matrices_match_definition(seed):
    rng = np.random.default_rng(seed)
    sp = random_regular_stage(rng)
    a, b, ws, wa = rng.uniform(size=4)
    ps, pa = psychological_payoffs(sp, a, b, ws, wa)
    ops, opa = oracles.psych_matrices(sp.soldier, sp.attacker, a, b, ws, wa)
    assert np.allclose(ps, ops, atol=1e-14) and np.allclose(pa, opa, atol=1e-14)
    assert soldier_gap(sp, a, b, ws) == pytest.approx(oracles.soldier_gap(sp.soldier, sp.attacker, a, b, ws), abs=1e-14)
    assert attacker_gap(sp, a, b, wa) == pytest.approx(oracles.attacker_gap(sp.soldier, sp.attacker, a, b, wa), abs=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_curves_make_players_indifferent(seed):
    rng = np.random.default_rng(100 + seed)
    sp = random_regular_stage(rng)
    ws, wa = rng.uniform(0.05, 1.0, 2)
    for b in np.linspace(0, 1, 11):
        a = curve_alpha_of_beta(sp, wa, b)
        assert attacker_gap(sp, a, b, wa) == pytest.approx(0.0, abs=1e-12)
        a2 = curve_alpha_of_beta_soldier(sp, ws, b)
        assert soldier_gap(sp, a2, b, ws) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_attacker_curve_is_monotone(seed):
    # finite differences: opposite monotonicity is what makes the crossing unique
    rng = np.random.default_rng(200 + seed)
    sp = random_regular_stage(rng)
    ws, wa = rng.uniform(0.05, 1.0, 2)
    betas = np.linspace(0, 1, 201)
    att = np.array([curve_alpha_of_beta(sp, wa, b) for b in betas])
    sol = np.array([curve_alpha_of_beta_soldier(sp, ws, b) for b in betas])
    assert np.all(np.diff(att) >= -1e-12)
    assert np.all(np.diff(sol) <= 1e-12)


def test_singular_curve_raises():
    p = np.array([[0.0, 1.0], [1.0, 0.0]])
    q = np.array([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(SingularityError):
        curve_alpha_of_beta_soldier(StagePayoffs(p, q), 0.0, 0.5)
    f1, f2, *_ = attacker_curve_coefficients(StagePayoffs(p, q), 0.0)
    assert f1 == 0.0 and f2 > 0


@pytest.mark.parametrize("seed", range(25))
def test_pe_matches_grid_root(seed):
    rng = np.random.default_rng(300 + seed)
    sp = random_regular_stage(rng)
    ws, wa = rng.uniform(0.01, 1.0, 2)
    betas, gaps = oracles.curve_gap_grid(sp.soldier, sp.attacker, ws, wa, n=2001)
    roots = oracles.sign_changes(betas, gaps)
    assert len(roots) == 1
    eq = solve_stage_pe(sp, ws, wa)
    assert eq.attacker_mix.p_first == pytest.approx(roots[0], abs=1e-6)
    assert eq.kind == "interior_mixed"


def test_pe_with_zero_weights_is_ne():
    rng = np.random.default_rng(7)
    for _ in range(50):
        sp = random_regular_stage(rng)
        ne, pe = solve_stage_ne(sp), solve_stage_pe(sp, 0.0, 0.0)
        assert pe.soldier_mix.p_first == pytest.approx(ne.soldier_mix.p_first, abs=1e-10)
        assert pe.attacker_mix.p_first == pytest.approx(ne.attacker_mix.p_first, abs=1e-10)


def test_pe_weight_validation():
    sp = random_regular_stage(np.random.default_rng(0))
    with pytest.raises(InvalidParameterError):
        solve_stage_pe(sp, 1.5, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=8, max_size=8), st.floats(0, 1), st.floats(0, 1))
def test_any_stage_yields_a_valid_equilibrium(values, ws, wa):
    """Exhaustive search and closed forms both return a point no pure deviation beats."""
    p = np.array(values[:4]).reshape(2, 2)
    q = np.array(values[4:]).reshape(2, 2)
    sp = StagePayoffs(p, q)
    eq = solve_stage_pe(sp, ws, wa)
    a, b = eq.soldier_mix.p_first, eq.attacker_mix.p_first
    assert 0.0 <= a <= 1.0 and 0.0 <= b <= 1.0
    ps, pa = oracles.psych_matrices(p, q, a, b, ws, wa)
    us = ps @ np.array([b, 1 - b])
    ua = np.array([a, 1 - a]) @ pa
    scale = 1e-8 * (1 + np.abs(values).max())
    assert a * us[0] + (1 - a) * us[1] >= us.max() - scale
    assert b * ua[0] + (1 - b) * ua[1] >= ua.max() - scale


def test_build_stage_payoffs_x2_by_enumeration():
    cfg = make_game(2, seed=4)
    sol = solve_game(cfg, "NE")
    root = StageState(1, 0, 0)
    sp = build_stage_payoffs(cfg, root, sol.soldier_values, sol.attacker_values)
    # after the first action pair the second stage is forced for at least one player, so the
    # material value of each root cell is the expectation over the two-step continuations
    for a, b in [(0, 0), (0, 1), (1, 0), (1, 1)]:
        child = advance(root, a, b)
        s_acts, a_acts = feasible_actions(cfg, child)
        vs = va = 0.0
        for a2 in s_acts:
            for b2 in a_acts:
                ps = sol.profile.soldier[child].prob(a2)
                pb = sol.profile.attacker[child].prob(b2)
                h = ((a, b), (a2, b2))
                vs += ps * pb * soldier_terminal_payoff(cfg, h)
                va += ps * pb * attacker_terminal_payoff(cfg, h)
        assert sp.soldier[a, b] == pytest.approx(vs, abs=1e-12)
        assert sp.attacker[a, b] == pytest.approx(va, abs=1e-12)


@pytest.mark.parametrize("mode", ["NE", "PE"])
@pytest.mark.parametrize("seed", range(3))
def test_solutions_pass_verification(mode, seed):
    cfg = make_game(3 + seed % 2, seed=seed, soldier_frustration_weight=0.6, attacker_frustration_weight=0.4)
    sol = solve_game(cfg, mode)
    diag = verify_equilibrium(cfg, sol)
    assert diag.is_equilibrium(1e-6)
    assert set(sol.stages) == set(reachable_states(cfg))
    root = sol.root
    assert sol.soldier_value == pytest.approx(sol.soldier_values[root])


def test_ne_root_value_equals_tree_enumeration():
    cfg = make_game(4, seed=11, required_connections=2)
    sol = solve_game(cfg, "NE")
    assert sol.soldier_value == pytest.approx(
        expected_material_payoff(cfg, sol.profile.soldier, sol.profile.attacker, "soldier"), abs=1e-12
    )
    assert len(enumerate_terminals(cfg)) > 0


def test_perturbed_profile_fails_verification():
    cfg = make_game(3, seed=2, delay_weight=0.1, power_weight=0.9)
    sol = solve_game(cfg, "NE")
    mixed = [s for s, e in sol.stages.items() if e.kind == "interior_mixed"]
    assert mixed, "fixture should contain an interior stage"
    s = mixed[0]
    from antijam.game import MixedAction

    sol.profile.soldier[s] = MixedAction(min(1.0, sol.profile.soldier[s].p_first + 0.3))
    assert not verify_equilibrium(cfg, sol).is_equilibrium(1e-6)


def test_all_forced_game():
    cfg = make_game(2, required_connections=2, power_budget_mw=0.0)
    sol = solve_game(cfg, "PE")
    for eq in sol.stages.values():
        assert eq.kind == "forced"
    assert sol.profile.soldier[sol.root].p_first == 1.0
    assert sol.profile.attacker[sol.root].p_first == 0.0


def test_unknown_mode():
    with pytest.raises(InvalidParameterError):
        solve_game(make_game(2), "QRE")


def test_jam_ordering_exact_characterization():
    """The jam probability rises under frustration exactly when the attacker
    curve at the NE jam rate lies below the soldier curve there."""
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 300:
        sp = random_regular_stage(rng)
        if not sp.soldier[1, 0] < sp.soldier[0, 1]:
            continue
        ws, wa = rng.uniform(0.01, 1.0, 2)
        b_ne = solve_stage_ne(sp).attacker_mix.p_first
        b_pe = solve_stage_pe(sp, ws, wa).attacker_mix.p_first
        gap = curve_alpha_of_beta(sp, wa, b_ne) - curve_alpha_of_beta_soldier(sp, ws, b_ne)
        if abs(gap) < 1e-9:
            continue
        assert (b_pe > b_ne) == (gap < 0)
        checked += 1


@pytest.mark.parametrize("seed", range(20))
def test_ne_closed_form_matches_root_oracle(seed):
    from scipy.optimize import brentq

    rng = np.random.default_rng(400 + seed)
    sp = random_regular_stage(rng)
    eq = solve_stage_ne(sp)
    beta = brentq(lambda b: oracles.soldier_gap(sp.soldier, sp.attacker, 0.5, b, 0.0), 0, 1, xtol=1e-14)
    alpha = brentq(lambda a: oracles.attacker_gap(sp.soldier, sp.attacker, a, 0.5, 0.0), 0, 1, xtol=1e-14)
    assert eq.soldier_mix.p_first == pytest.approx(alpha, abs=1e-8)
    assert eq.attacker_mix.p_first == pytest.approx(beta, abs=1e-8)


def test_equal_differences_give_half_jam():
    # pi22 - pi12 == pi11 - pi21
    p = np.array([[-0.3, 0.5], [0.2, 0.0]])
    q = np.array([[0.4, -0.2], [-0.1, 0.0]])
    assert solve_stage_ne(StagePayoffs(p, q)).attacker_mix.p_first == pytest.approx(0.5)


def test_soldier_curve_endpoint():
    """At the NE jam rate the soldier curve reduces to a weight-free ratio,
    which is at least one half under the two theta-scaled bounds."""
    rng = np.random.default_rng(9)
    hits = 0
    for _ in range(3000):
        sp = random_regular_stage(rng)
        p, q = sp.soldier, sp.attacker
        ws = rng.uniform(0.05, 1.0)
        b_ne = solve_stage_ne(sp).attacker_mix.p_first
        top = (q[1, 1] - q[0, 1]) * (p[1, 0] - p[0, 0])
        ratio = top / (top + (q[0, 0] - q[1, 0]) * (p[0, 1] - p[1, 1]))
        assert curve_alpha_of_beta_soldier(sp, ws, b_ne) == pytest.approx(ratio, abs=1e-10)
        theta1 = rng.uniform(0.05, 1.0)
        if q[0, 0] - q[1, 0] <= theta1 * (p[1, 0] - p[0, 0]) and q[1, 1] - q[0, 1] >= theta1 * (p[0, 1] - p[1, 1]):
            assert ratio >= 0.5
            hits += 1
    assert hits > 50

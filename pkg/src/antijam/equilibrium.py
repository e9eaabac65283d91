"""Stage-wise equilibrium solvers and backward induction over the game tree.

Each non-terminal state is a 2x2 stage game whose entries add the immediate
payoff of the action pair to the continuation value of the successor state.
Rows are soldier actions (connect, skip), columns attacker actions (jam,
idle).

In the psychological version the stage payoffs are augmented by the
frustration each player expects to inflict on the other, which depends on
the (error-free) beliefs ``alpha'`` and ``beta'``:

* soldier, (connect, idle): ``+ w_s (1 - alpha') (pi'_22 - pi'_12)``
* soldier, (skip, jam):     ``+ w_s alpha' (pi'_11 - pi'_21)``
* attacker, (connect, jam): ``+ w_a (1 - beta') (pi_12 - pi_11)``
* attacker, (skip, idle):   ``+ w_a beta' (pi_21 - pi_22)``
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidParameterError, SingularityError, SolverFailure
from .game import (
    CONNECT,
    IDLE,
    JAM,
    SKIP,
    BeliefSystem,
    GameConfig,
    MixedAction,
    StageState,
    StrategyProfile,
    advance,
    expected_material_payoff,
    feasible_actions,
    profile_values,
    reachable_states,
    terminal_states,
)

PURE_TOL = 1e-12
MIXED_TOL = 1e-9
BISECTION_TOL = 1e-12
BISECTION_MAX_ITER = 200


@dataclass(frozen=True)
class StagePayoffs:
    soldier: np.ndarray
    attacker: np.ndarray
    soldier_actions: tuple = (CONNECT, SKIP)
    attacker_actions: tuple = (JAM, IDLE)

    def __post_init__(self):
        soldier = np.array(self.soldier, dtype=float).reshape(2, 2)
        attacker = np.array(self.attacker, dtype=float).reshape(2, 2)
        for a in self.soldier_actions:
            for b in self.attacker_actions:
                if not (np.isfinite(soldier[a, b]) and np.isfinite(attacker[a, b])):
                    raise InvalidParameterError("stage payoffs must be finite")
        object.__setattr__(self, "soldier", soldier)
        object.__setattr__(self, "attacker", attacker)

    @property
    def full(self) -> bool:
        return len(self.soldier_actions) == 2 and len(self.attacker_actions) == 2

    @property
    def regular(self) -> bool:
        """Whether the payoff orderings behind the uniqueness argument hold."""
        if not self.full:
            return False
        p, q = self.soldier, self.attacker
        return bool(
            p[0, 1] > p[1, 1] >= p[0, 0]
            and p[1, 0] > p[1, 1]
            and q[0, 0] >= q[1, 1] > q[0, 1]
            and q[1, 1] > q[1, 0]
        )


@dataclass(frozen=True)
class StageEquilibrium:
    soldier_mix: MixedAction
    attacker_mix: MixedAction
    soldier_value: float
    attacker_value: float
    soldier_psych_value: float
    attacker_psych_value: float
    kind: str
    residuals: dict = field(default_factory=dict)


def psychological_payoffs(payoffs: StagePayoffs, alpha: float, beta: float, w_s: float, w_a: float):
    """Stage payoff matrices including the expected-frustration terms.

    The opponent's frustration at a cell is the positive part of what it
    expected from its own action minus what it got. For a mix in [0, 1] that
    factors as the mix weight times a positive part of a payoff difference, so
    the matrices stay bilinear in ``(alpha, beta)``.
    """
    p, q = payoffs.soldier, payoffs.attacker
    ps = p.copy()
    pa = q.copy()
    for b in (0, 1):
        ps[0, b] += w_s * (1.0 - alpha) * max(0.0, q[1, b] - q[0, b])
        ps[1, b] += w_s * alpha * max(0.0, q[0, b] - q[1, b])
    for a in (0, 1):
        pa[a, 0] += w_a * (1.0 - beta) * max(0.0, p[a, 1] - p[a, 0])
        pa[a, 1] += w_a * beta * max(0.0, p[a, 0] - p[a, 1])
    return ps, pa


def soldier_gap(payoffs, alpha, beta, w_s):
    """Utility of connect minus utility of skip at beliefs ``(alpha, beta)``."""
    ps, _ = psychological_payoffs(payoffs, alpha, beta, w_s, 0.0)
    return (beta * ps[0, 0] + (1.0 - beta) * ps[0, 1]) - (beta * ps[1, 0] + (1.0 - beta) * ps[1, 1])


def attacker_gap(payoffs, alpha, beta, w_a):
    """Utility of jam minus utility of idle at beliefs ``(alpha, beta)``."""
    _, pa = psychological_payoffs(payoffs, alpha, beta, 0.0, w_a)
    return (alpha * pa[0, 0] + (1.0 - alpha) * pa[1, 0]) - (alpha * pa[0, 1] + (1.0 - alpha) * pa[1, 1])


def attacker_curve_coefficients(payoffs: StagePayoffs, w_a: float):
    """``(F1, F2, F3, F4)`` of the attacker-indifference curve ``alpha(beta)``."""
    p, q = payoffs.soldier, payoffs.attacker
    f1 = w_a * (p[1, 0] + p[0, 0] - p[0, 1] - p[1, 1])
    f2 = q[1, 1] - q[1, 0] + q[0, 0] - q[0, 1] + w_a * (p[0, 1] - p[0, 0])
    f3 = w_a * (p[1, 0] - p[1, 1])
    f4 = q[1, 1] - q[1, 0]
    return f1, f2, f3, f4


def soldier_curve_coefficients(payoffs: StagePayoffs, w_s: float):
    p, q = payoffs.soldier, payoffs.attacker
    d = p[0, 1] + p[1, 0] - p[0, 0] - p[1, 1]
    f1 = w_s * (q[0, 1] + q[0, 0] - q[1, 0] - q[1, 1])
    f2 = w_s * (q[1, 1] - q[0, 1])
    f3 = -d - w_s * (q[1, 1] - q[0, 1])
    f4 = p[0, 1] - p[1, 1] + w_s * (q[1, 1] - q[0, 1])
    return f1, f2, f3, f4


def _mobius(coefs, beta):
    f1, f2, f3, f4 = coefs
    den = f1 * beta + f2
    if abs(den) < 1e-15:
        raise SingularityError(f"curve denominator vanishes at beta={beta}", beta)
    return (f3 * beta + f4) / den


def curve_alpha_of_beta(payoffs: StagePayoffs, w_a: float, beta: float) -> float:
    """Soldier mix that leaves the attacker indifferent when it jams with ``beta``."""
    return _mobius(attacker_curve_coefficients(payoffs, w_a), beta)


def curve_alpha_of_beta_soldier(payoffs: StagePayoffs, w_s: float, beta: float) -> float:
    """Attacker belief ``alpha'`` that leaves the soldier indifferent at ``beta``."""
    return _mobius(soldier_curve_coefficients(payoffs, w_s), beta)


def _stage_result(payoffs, alpha, beta, w_s, w_a, kind):
    alpha = min(1.0, max(0.0, alpha))
    beta = min(1.0, max(0.0, beta))
    ps, pa = psychological_payoffs(payoffs, alpha, beta, w_s, w_a)
    weights = np.outer([alpha, 1.0 - alpha], [beta, 1.0 - beta])
    # infeasible cells carry zero probability already, but may hold junk
    mask = np.zeros((2, 2), dtype=bool)
    for a in payoffs.soldier_actions:
        for b in payoffs.attacker_actions:
            mask[a, b] = True
    weights = np.where(mask, weights, 0.0)
    residuals = {
        "soldier": abs(soldier_gap(payoffs, alpha, beta, w_s)) if 0.0 < alpha < 1.0 else 0.0,
        "attacker": abs(attacker_gap(payoffs, alpha, beta, w_a)) if 0.0 < beta < 1.0 else 0.0,
    }
    return StageEquilibrium(
        soldier_mix=MixedAction(alpha),
        attacker_mix=MixedAction(beta),
        soldier_value=float(np.sum(weights * np.where(mask, payoffs.soldier, 0.0))),
        attacker_value=float(np.sum(weights * np.where(mask, payoffs.attacker, 0.0))),
        soldier_psych_value=float(np.sum(weights * np.where(mask, ps, 0.0))),
        attacker_psych_value=float(np.sum(weights * np.where(mask, pa, 0.0))),
        kind=kind,
        residuals=residuals,
    )


def _enumerate_stage(payoffs: StagePayoffs, w_s: float, w_a: float) -> StageEquilibrium:
    """Exhaustive search: pure cells, then one-sided mixes, then interior mixes."""
    S, B = payoffs.soldier_actions, payoffs.attacker_actions
    forced = len(S) == 1 or len(B) == 1

    def soldier_ok(alpha, beta):
        if len(S) == 1:
            return True
        g = soldier_gap(payoffs, alpha, beta, w_s)
        if alpha == 1.0:
            return g >= -PURE_TOL
        if alpha == 0.0:
            return g <= PURE_TOL
        return abs(g) <= MIXED_TOL

    def attacker_ok(alpha, beta):
        if len(B) == 1:
            return True
        g = attacker_gap(payoffs, alpha, beta, w_a)
        if beta == 1.0:
            return g >= -PURE_TOL
        if beta == 0.0:
            return g <= PURE_TOL
        return abs(g) <= MIXED_TOL

    for a in S:
        for b in B:
            alpha, beta = float(a == CONNECT), float(b == JAM)
            if soldier_ok(alpha, beta) and attacker_ok(alpha, beta):
                return _stage_result(payoffs, alpha, beta, w_s, w_a, "forced" if forced else "pure")

    if len(B) == 2:
        for a in S:
            alpha = float(a == CONNECT)
            g0 = attacker_gap(payoffs, alpha, 0.0, w_a)
            g1 = attacker_gap(payoffs, alpha, 1.0, w_a)
            if g0 != g1:
                beta = g0 / (g0 - g1)
                if 0.0 < beta < 1.0 and soldier_ok(alpha, beta) and attacker_ok(alpha, beta):
                    return _stage_result(payoffs, alpha, beta, w_s, w_a, "forced" if forced else "pure")
    if len(S) == 2:
        for b in B:
            beta = float(b == JAM)
            g0 = soldier_gap(payoffs, 0.0, beta, w_s)
            g1 = soldier_gap(payoffs, 1.0, beta, w_s)
            if g0 != g1:
                alpha = g0 / (g0 - g1)
                if 0.0 < alpha < 1.0 and soldier_ok(alpha, beta) and attacker_ok(alpha, beta):
                    return _stage_result(payoffs, alpha, beta, w_s, w_a, "forced" if forced else "pure")

    if not forced:
        # both gaps are bilinear: ga = alpha*c1(beta) + c0(beta), gs = alpha*d1(beta) + d0(beta).
        # Eliminating alpha leaves the quadratic d0*c1 - d1*c0 = 0 in beta.
        def parts(beta):
            c0 = attacker_gap(payoffs, 0.0, beta, w_a)
            c1 = attacker_gap(payoffs, 1.0, beta, w_a) - c0
            d0 = soldier_gap(payoffs, 0.0, beta, w_s)
            d1 = soldier_gap(payoffs, 1.0, beta, w_s) - d0
            return c0, c1, d0, d1

        grid = np.array([0.0, 0.5, 1.0])
        values = []
        for beta in grid:
            c0, c1, d0, d1 = parts(beta)
            values.append(d0 * c1 - d1 * c0)
        coefs = np.polyfit(grid, values, 2)
        roots = np.roots(coefs) if np.any(np.abs(coefs) > 1e-14) else np.array([])
        for root in sorted(r.real for r in roots if abs(r.imag) < 1e-12):
            if not 0.0 < root < 1.0:
                continue
            c0, c1, d0, d1 = parts(root)
            if abs(c1) > 1e-14:
                alpha = -c0 / c1
            elif abs(d1) > 1e-14:
                alpha = -d0 / d1
            else:
                continue
            if 0.0 < alpha < 1.0 and soldier_ok(alpha, root) and attacker_ok(alpha, root):
                return _stage_result(payoffs, alpha, root, w_s, w_a, "interior_mixed")

    raise SolverFailure(
        "no stage equilibrium found",
        {"soldier": payoffs.soldier.tolist(), "attacker": payoffs.attacker.tolist(), "w_s": w_s, "w_a": w_a},
    )


def solve_stage_ne(payoffs: StagePayoffs) -> StageEquilibrium:
    """Nash equilibrium of the material stage game.

    Regular stages use the indifference formulas directly; anything else goes
    through the exhaustive search.
    """
    if payoffs.regular:
        p, q = payoffs.soldier, payoffs.attacker
        alpha = (q[1, 1] - q[1, 0]) / (q[0, 0] + q[1, 1] - q[0, 1] - q[1, 0])
        beta = (p[1, 1] - p[0, 1]) / (p[0, 0] + p[1, 1] - p[0, 1] - p[1, 0])
        return _stage_result(payoffs, alpha, beta, 0.0, 0.0, "interior_mixed")
    return _enumerate_stage(payoffs, 0.0, 0.0)


def _bisect_pe(payoffs, w_s, w_a):
    coefs = attacker_curve_coefficients(payoffs, w_a)

    def h(beta):
        # sign of the soldier's gap along the attacker curve equals the sign
        # of (soldier curve - attacker curve) whenever w_s > 0
        return soldier_gap(payoffs, _mobius(coefs, beta), beta, w_s)

    lo, hi = 0.0, 1.0
    h_lo, h_hi = h(lo), h(hi)
    if not (h_lo > 0.0 > h_hi):
        return None
    for _ in range(BISECTION_MAX_ITER):
        mid = 0.5 * (lo + hi)
        h_mid = h(mid)
        if h_mid == 0.0:
            lo = hi = mid
            break
        if h_mid > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= BISECTION_TOL:
            break
    else:
        raise SolverFailure("bisection did not converge", {"lo": lo, "hi": hi})
    beta = 0.5 * (lo + hi)
    return _mobius(coefs, beta), beta


def solve_stage_pe(payoffs: StagePayoffs, w_s: float, w_a: float) -> StageEquilibrium:
    """Psychological equilibrium of the stage game under error-free beliefs.

    On regular stages the attacker-indifference curve is intersected with the
    soldier-indifference condition by bisection on ``beta``; otherwise the
    exhaustive search is used with the augmented payoffs.
    """
    if not (0.0 <= w_s <= 1.0 and 0.0 <= w_a <= 1.0):
        raise InvalidParameterError("frustration weights must lie in [0, 1]")
    if payoffs.regular:
        root = _bisect_pe(payoffs, w_s, w_a)
        if root is not None:
            alpha, beta = root
            return _stage_result(payoffs, alpha, beta, w_s, w_a, "interior_mixed")
    return _enumerate_stage(payoffs, w_s, w_a)


def build_stage_payoffs(
    config: GameConfig, state: StageState, soldier_values: dict, attacker_values: dict
) -> StagePayoffs:
    """Immediate payoff of each feasible action pair plus the successor's value."""
    soldier_actions, attacker_actions = feasible_actions(config, state)
    delta = config.delay_tolerance_s
    theta1 = config.delay_weight
    jam_cost = config.power_weight * config.jam_cost()
    p = np.zeros((2, 2))
    q = np.zeros((2, 2))
    for a in soldier_actions:
        for b in attacker_actions:
            child = advance(state, a, b)
            try:
                vs, va = soldier_values[child], attacker_values[child]
            except KeyError:
                raise InvalidParameterError(f"missing continuation value for {child}") from None
            tau = config.delay(state.step, a, b)
            p[a, b] = vs - tau / delta
            q[a, b] = va + theta1 * tau / delta - (jam_cost if b == JAM else 0.0)
    return StagePayoffs(p, q, soldier_actions, attacker_actions)


@dataclass
class EquilibriumSolution:
    config: GameConfig
    mode: str
    profile: StrategyProfile
    beliefs: BeliefSystem
    soldier_values: dict
    attacker_values: dict
    soldier_psych_values: dict
    attacker_psych_values: dict
    stages: dict

    @property
    def root(self) -> StageState:
        return StageState(1, 0, 0)

    @property
    def soldier_value(self) -> float:
        return self.soldier_values[self.root]

    @property
    def attacker_value(self) -> float:
        return self.attacker_values[self.root]


def _normalize_mode(mode: str) -> str:
    mode = str(mode).upper()
    if mode not in ("NE", "PE"):
        raise InvalidParameterError(f"mode must be NE or PE, got {mode!r}")
    return mode


def solve_game(config: GameConfig, mode: str = "PE") -> EquilibriumSolution:
    """Backward induction from the last device to the first."""
    mode = _normalize_mode(mode)
    w_s, w_a = config.soldier_frustration_weight, config.attacker_frustration_weight
    soldier_values = {s: 1.0 for s in terminal_states(config)}
    attacker_values = {s: config.power_weight for s in terminal_states(config)}
    soldier_psych = dict(soldier_values)
    attacker_psych = dict(attacker_values)
    stages = {}
    for state in reversed(reachable_states(config)):
        payoffs = build_stage_payoffs(config, state, soldier_values, attacker_values)
        try:
            eq = solve_stage_ne(payoffs) if mode == "NE" else solve_stage_pe(payoffs, w_s, w_a)
        except SolverFailure as exc:
            raise SolverFailure(f"stage solver failed at {state}: {exc}", exc.diagnostics) from exc
        stages[state] = eq
        soldier_values[state] = eq.soldier_value
        attacker_values[state] = eq.attacker_value
        soldier_psych[state] = eq.soldier_psych_value
        attacker_psych[state] = eq.attacker_psych_value
    profile = StrategyProfile(
        soldier={s: eq.soldier_mix for s, eq in stages.items()},
        attacker={s: eq.attacker_mix for s, eq in stages.items()},
    )
    return EquilibriumSolution(
        config=config,
        mode=mode,
        profile=profile,
        beliefs=BeliefSystem.error_free(profile),
        soldier_values=soldier_values,
        attacker_values=attacker_values,
        soldier_psych_values=soldier_psych,
        attacker_psych_values=attacker_psych,
        stages=stages,
    )


@dataclass
class EquilibriumDiagnostics:
    mode: str
    indifference_residuals: dict
    belief_residuals: dict
    deviation_gains: dict
    best_response_gains: dict
    tree_deviation_gains: dict | None = None

    @property
    def max_indifference_residual(self) -> float:
        return max((max(v) for v in self.indifference_residuals.values()), default=0.0)

    @property
    def max_belief_residual(self) -> float:
        return max(self.belief_residuals.values(), default=0.0)

    @property
    def max_deviation_gain(self) -> float:
        gains = [max(v) for v in self.deviation_gains.values()]
        if self.tree_deviation_gains:
            gains += [max(v) for v in self.tree_deviation_gains.values()]
        return max(gains, default=0.0)

    def is_equilibrium(self, tol: float = 1e-6) -> bool:
        return self.max_deviation_gain <= tol and self.max_belief_residual == 0.0


def _perturbations(p, step):
    return sorted({min(1.0, max(0.0, p + step)), min(1.0, max(0.0, p - step))} - {p})


def verify_equilibrium(
    config: GameConfig,
    solution: EquilibriumSolution,
    mode: str | None = None,
    step: float = 0.05,
    tree_limit: int = 4096,
) -> EquilibriumDiagnostics:
    """Recheck a solution against the equilibrium conditions.

    Continuation values are re-evaluated from the profile itself rather than
    taken from the solver's tables. Beliefs stay fixed at the solution's
    values while a player perturbs its own mix. In NE mode, small trees are
    also checked by enumerating every terminal history.
    """
    mode = _normalize_mode(mode or solution.mode)
    profile, beliefs = solution.profile, solution.beliefs
    w_s = config.soldier_frustration_weight if mode == "PE" else 0.0
    w_a = config.attacker_frustration_weight if mode == "PE" else 0.0
    soldier_values, attacker_values = profile_values(config, profile.soldier, profile.attacker)

    residuals, belief_res, deviation, best = {}, {}, {}, {}
    for state in reachable_states(config):
        alpha = profile.soldier[state].p_first
        beta = profile.attacker[state].p_first
        belief_res[state] = max(
            abs(beliefs.soldier_second[state].p_first - alpha),
            abs(beliefs.attacker_first[state].p_first - alpha),
            abs(beliefs.attacker_second[state].p_first - beta),
            abs(beliefs.soldier_first[state].p_first - beta),
        )
        payoffs = build_stage_payoffs(config, state, soldier_values, attacker_values)
        ps, pa = psychological_payoffs(
            payoffs, beliefs.soldier_second[state].p_first, beliefs.attacker_second[state].p_first, w_s, w_a
        )
        opp_b = beliefs.soldier_first[state].p_first
        opp_a = beliefs.attacker_first[state].p_first
        u_s = [opp_b * ps[n, 0] + (1 - opp_b) * ps[n, 1] for n in (0, 1)]
        u_a = [opp_a * pa[0, m] + (1 - opp_a) * pa[1, m] for m in (0, 1)]
        S, B = payoffs.soldier_actions, payoffs.attacker_actions

        def own(u, x):
            return x * u[0] + (1 - x) * u[1]

        gs = ga = 0.0
        bs = ba = 0.0
        rs = ra = 0.0
        if len(S) == 2:
            gs = max([own(u_s, x) - own(u_s, alpha) for x in _perturbations(alpha, step)] + [0.0])
            bs = max(u_s) - own(u_s, alpha)
            rs = abs(u_s[0] - u_s[1]) if 0.0 < alpha < 1.0 else 0.0
        if len(B) == 2:
            ga = max([own(u_a, x) - own(u_a, beta) for x in _perturbations(beta, step)] + [0.0])
            ba = max(u_a) - own(u_a, beta)
            ra = abs(u_a[0] - u_a[1]) if 0.0 < beta < 1.0 else 0.0
        residuals[state] = (rs, ra)
        deviation[state] = (gs, ga)
        best[state] = (max(bs, 0.0), max(ba, 0.0))

    tree = None
    if mode == "NE" and len(reachable_states(config)) and _tree_size(config) <= tree_limit:
        tree = _tree_deviation_gains(config, profile, step)
    return EquilibriumDiagnostics(mode, residuals, belief_res, deviation, best, tree)


def _tree_size(config):
    from .game import enumerate_terminals

    return len(enumerate_terminals(config))


def _tree_deviation_gains(config, profile, step):
    base_s = expected_material_payoff(config, profile.soldier, profile.attacker, "soldier")
    base_a = expected_material_payoff(config, profile.soldier, profile.attacker, "attacker")
    gains = {}
    for state in reachable_states(config):
        S, B = feasible_actions(config, state)
        gs = ga = 0.0
        if len(S) == 2:
            for x in _perturbations(profile.soldier[state].p_first, step):
                dev = dict(profile.soldier)
                dev[state] = MixedAction(x)
                gs = max(gs, expected_material_payoff(config, dev, profile.attacker, "soldier") - base_s)
        if len(B) == 2:
            for x in _perturbations(profile.attacker[state].p_first, step):
                dev = dict(profile.attacker)
                dev[state] = MixedAction(x)
                ga = max(ga, expected_material_payoff(config, profile.soldier, dev, "attacker") - base_a)
        gains[state] = (gs, ga)
    return gains

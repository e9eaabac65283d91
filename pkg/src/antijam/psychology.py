"""Frustration and belief-dependent utilities over whole terminal histories.

A player's frustration at a terminal history is the positive part of the
gap between the payoff it expected (under its strategy and beliefs) and the
payoff it actually got. Each player also forms a perception of the
opponent's frustration from its own first- and second-order beliefs, and a
psychological utility adds a weighted expected perceived frustration of the
opponent to the player's own perceived material payoff.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .game import (
    GameConfig,
    attacker_terminal_payoff,
    expected_material_payoff,
    reach_vector,
    soldier_terminal_payoff,
    terminal_table,
)


@dataclass(frozen=True)
class FrustrationReport:
    expected: float
    actual: float
    frustration: float

    @classmethod
    def from_gap(cls, expected: float, actual: float) -> "FrustrationReport":
        return cls(expected, actual, max(0.0, expected - actual))


def soldier_frustration(config: GameConfig, alpha: Mapping, delta1: Mapping, terminal: Sequence) -> FrustrationReport:
    expected = expected_material_payoff(config, alpha, delta1, "soldier")
    return FrustrationReport.from_gap(expected, soldier_terminal_payoff(config, terminal))


def attacker_perceived_soldier_frustration(
    config: GameConfig, rho1: Mapping, rho2: Mapping, terminal: Sequence
) -> FrustrationReport:
    """The attacker's estimate of the soldier's frustration; ``rho1`` drives the soldier."""
    expected = expected_material_payoff(config, rho1, rho2, "soldier")
    return FrustrationReport.from_gap(expected, soldier_terminal_payoff(config, terminal))


def attacker_frustration(config: GameConfig, beta: Mapping, rho1: Mapping, terminal: Sequence) -> FrustrationReport:
    expected = expected_material_payoff(config, rho1, beta, "attacker")
    return FrustrationReport.from_gap(expected, attacker_terminal_payoff(config, terminal))


def soldier_perceived_attacker_frustration(
    config: GameConfig, delta1: Mapping, delta2: Mapping, terminal: Sequence
) -> FrustrationReport:
    """The soldier's estimate of the attacker's frustration; ``delta2`` drives the soldier."""
    expected = expected_material_payoff(config, delta2, delta1, "attacker")
    return FrustrationReport.from_gap(expected, attacker_terminal_payoff(config, terminal))


def _expected_frustration(reach: np.ndarray, expected: float, actual: np.ndarray) -> float:
    # positive part is taken per terminal, after the full expectation in `expected`
    return float(reach @ np.maximum(0.0, expected - actual))


def soldier_psych_utility(config: GameConfig, alpha: Mapping, delta1: Mapping, delta2: Mapping) -> float:
    table = terminal_table(config)
    reach = reach_vector(config, alpha, delta1)
    material = float(reach @ table.soldier_payoffs)
    weight = config.soldier_frustration_weight
    if weight == 0.0:
        return material
    perceived = expected_material_payoff(config, delta2, delta1, "attacker")
    return material + weight * _expected_frustration(reach, perceived, table.attacker_payoffs)


def attacker_psych_utility(config: GameConfig, beta: Mapping, rho1: Mapping, rho2: Mapping) -> float:
    table = terminal_table(config)
    reach = reach_vector(config, rho1, beta)
    material = float(reach @ table.attacker_payoffs)
    weight = config.attacker_frustration_weight
    if weight == 0.0:
        return material
    perceived = expected_material_payoff(config, rho1, rho2, "soldier")
    return material + weight * _expected_frustration(reach, perceived, table.soldier_payoffs)


def frustration_by_step(config: GameConfig, expected_soldier: float, expected_attacker: float, history: Sequence):
    """Running frustration of both players along a realized history.

    At step ``x`` the realized payoff counts only the delay and jamming spent
    so far, so frustration can only grow as the path unfolds.
    """
    delta = config.delay_tolerance_s
    theta1, theta2 = config.delay_weight, config.power_weight
    jam_cost = config.jam_cost()
    delay = 0.0
    jams = 0
    soldier, attacker = [], []
    for x, (a, b) in enumerate(history, start=1):
        delay += config.delay(x, a, b)
        jams += b == 0
        actual_s = (delta - delay) / delta
        actual_a = theta1 * delay / delta + theta2 * (1.0 - jam_cost * jams)
        soldier.append(max(0.0, expected_soldier - actual_s))
        attacker.append(max(0.0, expected_attacker - actual_a))
    return soldier, attacker

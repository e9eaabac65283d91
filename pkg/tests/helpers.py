"""Shared builders for the test suite."""
import numpy as np

from antijam.channel import LinkBudget
from antijam.equilibrium import StagePayoffs
from antijam.game import GameConfig


def make_game(devices=3, seed=0, **kwargs):
    rng = np.random.default_rng(seed)
    distances = rng.uniform(50.0, 200.0, devices)
    links = tuple(LinkBudget(soldier_distance_m=float(d)) for d in distances)
    return GameConfig(links, **kwargs)


def random_regular_stage(rng, shift=True):
    """A stage satisfying the regularity orderings, with a random common offset."""
    u = rng.uniform(0.05, 1.0, 3)
    v = rng.uniform(0.05, 1.0, 3)
    soldier = np.array([[-u[0], u[1]], [u[2], 0.0]])
    attacker = np.array([[v[2], -v[0]], [-v[1], 0.0]])
    if shift:
        soldier += rng.uniform(-1, 1)
        attacker += rng.uniform(-1, 1)
    payoffs = StagePayoffs(soldier, attacker)
    assert payoffs.regular
    return payoffs


def brute_force_reach(history, soldier_map, attacker_map):
    from antijam.game import advance, initial_state

    p = 1.0
    state = initial_state()
    for a, b in history:
        p *= soldier_map[state].prob(a) * attacker_map[state].prob(b)
        state = advance(state, a, b)
    return p

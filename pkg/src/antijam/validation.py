"""Input checks shared by the estimators and the experiment loader."""
from __future__ import annotations

from typing import Mapping

import numpy as np

from .equilibrium import StagePayoffs
from .exceptions import InfeasibleStateError, InvalidParameterError
from .game import GameConfig, StageState, check_state, config_from_dict, is_terminal, reachable_states


def check_mode(mode: str, allowed=("NE", "PE")) -> str:
    value = str(mode).upper()
    if value not in allowed:
        raise InvalidParameterError(f"mode must be one of {allowed}, got {mode!r}")
    return value


def check_game(game) -> GameConfig:
    """Accept a GameConfig or its plain-dict form."""
    if isinstance(game, GameConfig):
        return game
    if isinstance(game, Mapping):
        try:
            return config_from_dict(game)
        except TypeError as exc:
            raise InvalidParameterError(f"bad game description: {exc}") from None
    raise InvalidParameterError(f"expected a GameConfig, got {type(game).__name__}")


def check_states(config: GameConfig, states=None) -> list:
    """Normalize ``states`` into a list of StageState; ``None`` means all non-terminal states."""
    if states is None:
        return list(reachable_states(config))
    arr = np.asarray([tuple(s) for s in states], dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidParameterError("states must be an (n, 3) array of (step, connections, attacks)")
    if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
        raise InvalidParameterError("state coordinates must be integers")
    out = []
    for row in arr.astype(int):
        state = StageState(*row.tolist())
        check_state(config, state)
        if is_terminal(config, state):
            raise InfeasibleStateError(f"{state} is terminal and has no strategy")
        out.append(state)
    return out


def check_stage_payoffs(X) -> list:
    """Turn an (n, 2, 2, 2) array (player, row, column) into StagePayoffs."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[1:] != (2, 2, 2):
        raise InvalidParameterError("stage payoffs must have shape (n, 2, 2, 2)")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError("stage payoffs must be finite")
    return [StagePayoffs(a[0], a[1]) for a in arr]

"""Experiment specs, sweeps and result files.

A spec is a YAML document with optional ``game``, ``geometry``,
``learning``, ``sweep``, ``modes``, ``seeds`` and ``output_path`` sections.
Powers are given in dBm, the delay tolerance in ms and the SINR threshold in
dB; everything is converted to linear units when the spec is loaded. Omitted
fields take the defaults below.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .channel import FadingModel, LinkBudget, dbm_to_mw
from .equilibrium import solve_game
from .exceptions import AntiJamError, InvalidParameterError
from .game import GameConfig, device_marginals, initial_state, profile_values, terminal_table, reach_vector
from .learning import LearningConfig, run_learning
from .psychology import attacker_psych_utility, soldier_psych_utility

OUTPUT_DIR_ENV = "ANTIJAM_OUTPUT_DIR"
MODES = ("NE", "PE", "BU")

GAME_DEFAULTS = {
    "devices": 5,
    "required_connections": 1,
    "max_attacks": 1,
    "soldier_tx_power_dbm": 20.0,
    "jammer_tx_power_dbm": 20.0,
    "jam_power_dbm": 20.0,
    "noise_dbm": -95.0,
    "bandwidth_hz": 20e6,
    "delay_tolerance_ms": 80.0,
    "theta1": 0.5,
    "theta2": None,
    "omega_s": 0.5,
    "omega_a": 0.5,
    "pathloss_exponent": 4.0,
    "sinr_threshold_db": 20.0,
    "success_target": 0.9,
    "max_retransmissions": 20,
    "block_size_bits": 6e6,
    "fading_mean": 1.0,
    "channel_method": "closed_form",
}
GEOMETRY_DEFAULTS = {
    "seed": 0,
    "soldier_distance_range_m": [50.0, 200.0],
    "jammer_distance_m": 100.0,
    "soldier_distances_m": None,
}
LEARNING_DEFAULTS = {f.name: f.default for f in dataclasses.fields(LearningConfig) if f.name != "rng_seed"}
TOP_LEVEL = ("game", "geometry", "learning", "sweep", "modes", "seeds", "output_path")
SWEEPABLE = tuple(k for k in GAME_DEFAULTS if k not in ("devices", "channel_method")) + ("jammer_distance_m",)


class SpecError(InvalidParameterError):
    """A spec file failed to parse or validate; ``field`` names the culprit."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.field = field
        self.line = line


@dataclass
class ExperimentSpec:
    game: dict
    geometry: dict
    learning: dict | None = None
    sweep: dict = field(default_factory=dict)
    modes: tuple = ("NE", "PE")
    seeds: tuple = (0,)
    output_path: str | None = None
    source: str | None = None

    def points(self) -> list:
        """Sweep points as ordered dicts, Cartesian product in file order."""
        if not self.sweep:
            return [{}]
        keys = list(self.sweep)
        return [dict(zip(keys, values)) for values in itertools.product(*(self.sweep[k] for k in keys))]

    def distances(self) -> list:
        geo = self.geometry
        if geo.get("soldier_distances_m") is not None:
            return [float(d) for d in geo["soldier_distances_m"]]
        lo, hi = geo["soldier_distance_range_m"]
        rng = np.random.default_rng(int(geo["seed"]))
        return [float(d) for d in rng.uniform(lo, hi, int(self.game["devices"]))]

    def game_config(self, point: dict | None = None) -> GameConfig:
        values = dict(self.game)
        geo = dict(self.geometry)
        for key, value in (point or {}).items():
            if key == "jammer_distance_m":
                geo[key] = value
            else:
                values[key] = value
        if point and "theta1" in point and "theta2" not in point:
            values["theta2"] = None
        return build_game(values, geo, self.distances())

    def learning_config(self, seed: int) -> LearningConfig:
        params = dict(LEARNING_DEFAULTS)
        params.update(self.learning or {})
        return LearningConfig(rng_seed=int(seed), **params)


def _theta(values):
    theta1 = float(values["theta1"])
    theta2 = values.get("theta2")
    theta2 = 1.0 - theta1 if theta2 is None else float(theta2)
    if abs(theta1 + theta2 - 1.0) > 1e-9:
        raise SpecError(f"theta1 + theta2 must equal 1, got {theta1} + {theta2}", field="theta1/theta2")
    return theta1, 1.0 - theta1


def build_game(values: dict, geometry: dict, distances) -> GameConfig:
    """GameConfig from spec-level values (dBm, ms, dB) and device distances."""
    theta1, theta2 = _theta(values)
    if len(distances) != int(values["devices"]):
        raise SpecError("number of soldier distances must equal devices", field="geometry.soldier_distances_m")
    jam_mw = dbm_to_mw(float(values["jam_power_dbm"]))
    links = tuple(
        LinkBudget(
            soldier_tx_power_mw=dbm_to_mw(float(values["soldier_tx_power_dbm"])),
            jammer_tx_power_mw=dbm_to_mw(float(values["jammer_tx_power_dbm"])),
            soldier_distance_m=d,
            jammer_distance_m=float(geometry["jammer_distance_m"]),
            pathloss_exponent=float(values["pathloss_exponent"]),
            noise_power_mw=dbm_to_mw(float(values["noise_dbm"])),
            sinr_threshold=10.0 ** (float(values["sinr_threshold_db"]) / 10.0),
            success_target=float(values["success_target"]),
            max_retransmissions=int(values["max_retransmissions"]),
            block_size_bits=float(values["block_size_bits"]),
            bandwidth_hz=float(values["bandwidth_hz"]),
        )
        for d in distances
    )
    return GameConfig(
        links=links,
        required_connections=int(values["required_connections"]),
        jam_power_per_attack_mw=jam_mw,
        power_budget_mw=int(values["max_attacks"]) * jam_mw,
        delay_tolerance_s=float(values["delay_tolerance_ms"]) / 1000.0,
        delay_weight=theta1,
        power_weight=theta2,
        soldier_frustration_weight=float(values["omega_s"]),
        attacker_frustration_weight=float(values["omega_a"]),
        fading=FadingModel(mean=float(values["fading_mean"])),
        channel_method=str(values["channel_method"]),
    )


def _merge(section, defaults, name):
    section = section or {}
    if not isinstance(section, dict):
        raise SpecError("section must be a mapping", field=name)
    unknown = sorted(set(section) - set(defaults))
    if unknown:
        raise SpecError("unknown field", field=f"{name}.{unknown[0]}")
    out = dict(defaults)
    out.update(section)
    return out


def _grid(name, value):
    if isinstance(value, dict):
        try:
            grid = np.linspace(float(value["start"]), float(value["stop"]), int(value["num"])).tolist()
        except (KeyError, TypeError, ValueError):
            raise SpecError("range sweeps need start, stop and num", field=f"sweep.{name}") from None
    elif isinstance(value, (list, tuple)):
        grid = list(value)
    else:
        grid = [value]
    if not grid:
        raise SpecError("sweep grid must be nonempty", field=f"sweep.{name}")
    for v in grid:
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise SpecError("sweep values must be finite numbers", field=f"sweep.{name}")
    return grid


def spec_from_dict(data, source=None) -> ExperimentSpec:
    data = data or {}
    if not isinstance(data, dict):
        raise SpecError("spec must be a mapping at the top level")
    unknown = sorted(set(data) - set(TOP_LEVEL))
    if unknown:
        raise SpecError("unknown section", field=unknown[0])
    game = _merge(data.get("game"), GAME_DEFAULTS, "game")
    geometry = _merge(data.get("geometry"), GEOMETRY_DEFAULTS, "geometry")
    learning = _merge(data.get("learning"), LEARNING_DEFAULTS, "learning") if "learning" in data else None
    sweep_raw = data.get("sweep") or {}
    if not isinstance(sweep_raw, dict):
        raise SpecError("sweep must map field names to grids", field="sweep")
    sweep = {}
    for name, value in sweep_raw.items():
        if name not in SWEEPABLE:
            raise SpecError("not a sweepable scalar field", field=f"sweep.{name}")
        sweep[name] = _grid(name, value)
    modes = data.get("modes", ["NE", "PE"])
    modes = [modes] if isinstance(modes, str) else list(modes)
    modes = tuple(str(m).upper() for m in modes)
    if not modes or any(m not in MODES for m in modes):
        raise SpecError(f"modes must be a nonempty subset of {MODES}", field="modes")
    seeds = data.get("seeds", [0])
    seeds = [seeds] if isinstance(seeds, int) else list(seeds)
    if not seeds or any(not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in seeds):
        raise SpecError("seeds must be a nonempty list of unsigned integers", field="seeds")
    spec = ExperimentSpec(
        game=game,
        geometry=geometry,
        learning=learning,
        sweep=sweep,
        modes=modes,
        seeds=tuple(seeds),
        output_path=data.get("output_path"),
        source=source,
    )
    # build every point once so invalid values fail at load time
    for point in spec.points():
        try:
            spec.game_config(point)
        except SpecError:
            raise
        except (AntiJamError, TypeError, ValueError) as exc:
            name = next(iter(point), None)
            raise SpecError(str(exc), field=f"sweep.{name}" if name else "game") from None
    try:
        spec.learning_config(0)
    except (AntiJamError, TypeError) as exc:
        raise SpecError(str(exc), field="learning") from None
    return spec


def load_spec(path) -> ExperimentSpec:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SpecError(f"could not parse spec: {getattr(exc, 'problem', exc)}", line=mark.line + 1 if mark else None) from None
    return spec_from_dict(data, source=str(path))


@dataclass
class ResultRow:
    point: int
    coords: dict
    mode: str
    seed: int | None
    soldier_material: float | None = None
    attacker_material: float | None = None
    soldier_psych: float | None = None
    attacker_psych: float | None = None
    soldier_frustration: float | None = None
    attacker_frustration: float | None = None
    root_connect: float | None = None
    root_jam: float | None = None
    iterations_to_eps: int | None = None
    device_connect: list = field(default_factory=list)
    device_jam: list = field(default_factory=list)
    distances_m: list = field(default_factory=list)
    trace_path: str | None = None
    error: str | None = None


def _expected_frustration(config, soldier_map, attacker_map):
    # own frustration of each player when its expectation matches the profile
    table = terminal_table(config)
    reach = reach_vector(config, soldier_map, attacker_map)
    exp_s = float(reach @ table.soldier_payoffs)
    exp_a = float(reach @ table.attacker_payoffs)
    return (
        float(reach @ np.maximum(0.0, exp_s - table.soldier_payoffs)),
        float(reach @ np.maximum(0.0, exp_a - table.attacker_payoffs)),
    )


def _fill(row, config, profile, beliefs):
    root = initial_state(config)
    sv, av = profile_values(config, profile.soldier, profile.attacker)
    row.soldier_material = sv[root]
    row.attacker_material = av[root]
    row.soldier_psych = soldier_psych_utility(config, profile.soldier, beliefs.soldier_first, beliefs.soldier_second)
    row.attacker_psych = attacker_psych_utility(config, profile.attacker, beliefs.attacker_first, beliefs.attacker_second)
    row.soldier_frustration, row.attacker_frustration = _expected_frustration(config, profile.soldier, profile.attacker)
    row.root_connect = profile.soldier[root].p_first
    row.root_jam = profile.attacker[root].p_first
    connect, jam = device_marginals(config, profile)
    row.device_connect = connect.tolist()
    row.device_jam = jam.tolist()


def _run_one(task):
    spec, index, point, mode, seed, trace_dir = task
    row = ResultRow(point=index, coords=dict(point), mode=mode, seed=seed)
    try:
        config = spec.game_config(point)
        row.distances_m = [link.soldier_distance_m for link in config.links]
        if mode in ("NE", "PE"):
            solution = solve_game(config, mode)
            _fill(row, config, solution.profile, solution.beliefs)
        else:
            trace = run_learning(config, spec.learning_config(seed))
            _fill(row, config, trace.final_profile(), trace.final_beliefs())
            row.iterations_to_eps = trace.converged_at
            if trace_dir is not None:
                path = Path(trace_dir) / f"trace_p{index}_s{seed}.json"
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(trace.to_json())
                row.trace_path = path.name
    except (AntiJamError, ArithmeticError, ValueError) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def run(spec: ExperimentSpec, jobs: int = 1, trace_dir=None) -> list:
    """One row per sweep point, mode and seed (NE/PE rows carry no seed).

    Rows come back sorted by point, then mode order of the spec, then seed,
    whatever ``jobs`` is.
    """
    tasks = []
    for index, point in enumerate(spec.points()):
        for mode in spec.modes:
            seeds = spec.seeds if mode == "BU" else (None,)
            for seed in seeds:
                tasks.append((spec, index, point, mode, seed, trace_dir))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_one, tasks))
    else:
        rows = [_run_one(t) for t in tasks]
    order = {m: i for i, m in enumerate(spec.modes)}
    rows.sort(key=lambda r: (r.point, order[r.mode], -1 if r.seed is None else r.seed))
    return rows


FIXED_COLUMNS = (
    "mode",
    "seed",
    "soldier_material",
    "attacker_material",
    "soldier_psych",
    "attacker_psych",
    "soldier_frustration",
    "attacker_frustration",
    "root_connect",
    "root_jam",
    "iterations_to_eps",
)


def columns(rows) -> list:
    """Header: point, sweep coordinates (file order), fixed columns, per-device series."""
    coord_keys = []
    devices = 0
    for row in rows:
        for key in row.coords:
            if key not in coord_keys:
                coord_keys.append(key)
        devices = max(devices, len(row.distances_m), len(row.device_connect))
    cols = ["point", *coord_keys, *FIXED_COLUMNS]
    cols += [f"connect_{i}" for i in range(1, devices + 1)]
    cols += [f"jam_{i}" for i in range(1, devices + 1)]
    cols += [f"distance_{i}_m" for i in range(1, devices + 1)]
    cols += ["trace", "error"]
    return cols


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _json_value(value):
    if isinstance(value, float):
        return float(format(value, ".12g"))
    return value


def row_record(row: ResultRow, cols) -> dict:
    record = {"point": row.point, **row.coords}
    for name in FIXED_COLUMNS:
        record[name] = getattr(row, name)
    for i, v in enumerate(row.device_connect, start=1):
        record[f"connect_{i}"] = v
    for i, v in enumerate(row.device_jam, start=1):
        record[f"jam_{i}"] = v
    for i, v in enumerate(row.distances_m, start=1):
        record[f"distance_{i}_m"] = v
    record["trace"] = row.trace_path
    record["error"] = row.error
    return {c: record.get(c) for c in cols}


def format_rows(rows, fmt: str = "csv") -> str:
    if not rows:
        raise InvalidParameterError("no rows to emit")
    cols = columns(rows)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            rec = row_record(row, cols)
            writer.writerow([_fmt(rec[c]) for c in cols])
        return buf.getvalue()
    if fmt == "json":
        records = [{c: _json_value(v) for c, v in row_record(row, cols).items()} for row in rows]
        return json.dumps(records, indent=1) + "\n"
    raise InvalidParameterError(f"format must be csv or json, got {fmt!r}")


def emit(rows, path, fmt: str = "csv") -> Path:
    path = Path(path)
    text = format_rows(rows, fmt)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise InvalidParameterError(f"cannot write {path}: {exc}") from None
    return path


def output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def resolve_output(spec: ExperimentSpec, out=None, fmt: str = "csv") -> Path:
    """``--out`` wins, then the spec's output_path; relative paths live under the output directory."""
    target = out or spec.output_path or f"results.{fmt}"
    target = Path(target)
    return target if target.is_absolute() else output_dir() / target


def template_path(name: str) -> Path:
    """Path of a shipped template such as ``fig7`` or ``fig7.yaml``."""
    stem = name[:-5] if name.endswith(".yaml") else name
    path = Path(__file__).parent / "templates" / f"{stem}.yaml"
    if not path.exists():
        raise InvalidParameterError(f"no template named {name!r}")
    return path

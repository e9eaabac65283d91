"""Command-line entry point: ``antijam <subcommand> ...``."""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .equilibrium import solve_game, verify_equilibrium
from .exceptions import AntiJamError
from .experiments import emit, load_spec, resolve_output, run, template_path
from .learning import LearningTrace, replay


def _spec(args):
    path = Path(args.spec)
    if not path.exists() and not path.suffix:
        path = template_path(args.spec)
    return load_spec(path)


def _write(rows, spec, args):
    path = resolve_output(spec, args.out, args.format)
    emit(rows, path, args.format)
    print(f"wrote {len(rows)} rows to {path}")
    failed = [r for r in rows if r.error]
    for r in failed:
        print(f"point {r.point} {r.mode}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def _trace_dir(spec, args):
    path = resolve_output(spec, args.out, args.format)
    return path.parent / f"{path.stem}_traces"


def cmd_solve(args):
    spec = _spec(args)
    spec = dataclasses.replace(spec, modes=(args.mode.upper(),))
    return _write(run(spec, args.jobs), spec, args)


def cmd_learn(args):
    spec = _spec(args)
    spec = dataclasses.replace(spec, modes=("BU",), seeds=(args.seed,))
    return _write(run(spec, args.jobs, _trace_dir(spec, args)), spec, args)


def cmd_sweep(args):
    spec = _spec(args)
    trace_dir = _trace_dir(spec, args) if "BU" in spec.modes else None
    return _write(run(spec, args.jobs, trace_dir), spec, args)


def cmd_check(args):
    spec = _spec(args)
    modes = [m for m in spec.modes if m in ("NE", "PE")] or ["NE", "PE"]
    status = 0
    print("point\tmode\tmax_indifference\tmax_belief\tmax_deviation_gain\tok")
    for index, point in enumerate(spec.points()):
        config = spec.game_config(point)
        for mode in modes:
            diag = verify_equilibrium(config, solve_game(config, mode))
            ok = diag.is_equilibrium(args.tol)
            status |= 0 if ok else 1
            print(
                f"{index}\t{mode}\t{diag.max_indifference_residual:.3g}\t"
                f"{diag.max_belief_residual:.3g}\t{diag.max_deviation_gain:.3g}\t{'yes' if ok else 'no'}"
            )
    return status


def cmd_replay(args):
    recorded = LearningTrace.from_json(Path(args.trace).read_text())
    rerun = replay(recorded)
    same = rerun.histories == recorded.histories and rerun.converged_at == recorded.converged_at
    print(f"seed {recorded.seed}: {rerun.iterations} iterations, {'identical' if same else 'DIFFERENT'}")
    if args.out:
        Path(args.out).write_text(rerun.to_json())
    return 0 if same else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="antijam", description="Soldier/jammer equilibrium and learning experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec=True):
        if spec:
            p.add_argument("--spec", required=True, help="YAML spec file, or a template name such as fig7")
        p.add_argument("--out", help="output file (relative paths go under $ANTIJAM_OUTPUT_DIR)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for independent points")

    p = sub.add_parser("solve", help="NE or PE by backward induction")
    common(p)
    p.add_argument("--mode", choices=("ne", "pe", "NE", "PE"), required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("learn", help="Bayesian-updating play for one seed")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("sweep", help="every sweep point, mode and seed in the spec")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("check", help="verify solved equilibria")
    common(p)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("replay", help="re-run a recorded learning trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", help="write the re-run trace here")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AntiJamError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

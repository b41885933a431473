"""Command-line driver.

    singular-cs simulate --config PATH --out DIR
    singular-cs verify   --run DIR
    singular-cs oracle   --alpha A --w0 W --u0 U [--t T]
    singular-cs demo     --name NAME [--out DIR]
    singular-cs sweep    --config PATH --levels K [--factor F] [--out DIR]

``--alpha --n --dim --t-final --seed --normalize`` override config values.
Exit codes: 0 all checks pass, 1 a verification check failed, 2 usage or
schema error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import SimConfig, load_config, parse_config
from .diagnostics import verify
from .errors import OutOfDomain, PartialResult, SchemaError, SingularCSError
from .export import export, read_trajectory, write_json, _jsonable
from .integrator import simulate, simulate_refinement_ladder
from .model import Normalization
from .oracle import TwoBodyState, classify, solve_reduced
from .scenarios import SCENARIOS, run_scenario

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_overrides(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("overrides")
    g.add_argument("--alpha", type=float)
    g.add_argument("--n", type=int)
    g.add_argument("--dim", type=int)
    g.add_argument("--t-final", type=float, dest="t_final")
    g.add_argument("--seed", type=int)
    g.add_argument("--normalize", choices=[n.value for n in Normalization])


def _overridden(config: SimConfig, args) -> SimConfig:
    return config.with_overrides(
        alpha=args.alpha, n=args.n, dim=args.dim, t_final=args.t_final, seed=args.seed, normalize=args.normalize
    )


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="singular-cs", description="Cucker-Smale flocking with a singular communication weight")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a configuration, verify it and write artifacts")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    _add_overrides(p)

    p = sub.add_parser("verify", help="re-run a stored run directory and check it")
    p.add_argument("--run", required=True)

    p = sub.add_parser("oracle", help="two-body reference outcome")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--w0", type=float, required=True)
    p.add_argument("--u0", type=float, required=True)
    p.add_argument("--t", type=float, help="also report (w, u) at this time")

    p = sub.add_parser("demo", help="run a named scenario")
    p.add_argument("--name", required=True, choices=sorted(SCENARIOS))
    p.add_argument("--out")
    _add_overrides(p)

    p = sub.add_parser("sweep", help="refinement ladder for a configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--factor", type=float, default=0.1)
    p.add_argument("--out")
    _add_overrides(p)
    return ap


def _print(obj) -> None:
    print(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


def _summarize(report: dict) -> str:
    bad = [c["name"] for c in report["checks"] if not c["passed"]]
    return "all checks passed" if not bad else "failed: " + ", ".join(bad)


def cmd_simulate(args) -> int:
    config = _overridden(load_config(args.config), args)
    out = args.out or config.output.out_dir
    try:
        run = simulate(config)
    except PartialResult as exc:
        if out:
            export(exc.result, None, out, config=config, extra={"error": str(exc)})
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report = verify(run)
    if out:
        export(run, report, out, config=config)
    print(f"{run.n_steps} steps, {len(run.collision_events)} collisions, {len(run.sticking_events)} sticking events; {_summarize(report)}")
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_verify(args) -> int:
    directory = Path(args.run)
    try:
        summary = json.loads((directory / "summary.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise SchemaError(str(directory / "summary.json"), f"cannot read: {exc.strerror}") from None
    if not summary.get("config"):
        raise SchemaError("summary.json:config", "missing")
    config = parse_config(summary["config"])
    try:
        run = simulate(config)
    except PartialResult as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report = verify(run)
    stored = directory / "trajectory.csv"
    if stored.exists():
        t, X, V = read_trajectory(stored)
        traj = run.trajectory
        same = (
            t.shape == traj.times.shape
            and np.array_equal(t, traj.times)
            and np.array_equal(X, traj.positions)
            and np.array_equal(V, traj.velocities)
        )
        report["checks"].append({"name": "reproduces_stored_trajectory", "passed": bool(same)})
        report["passed"] = report["passed"] and same
    write_json(directory / "report.json", report)
    print(_summarize(report))
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_oracle(args) -> int:
    init = TwoBodyState(args.w0, args.u0, args.alpha)
    out = {"E": init.energy}
    try:
        out.update(classify(init).as_dict())
    except OutOfDomain as exc:
        out["class"] = None
        out["note"] = str(exc)
    if args.t is not None:
        w, u = solve_reduced(init, args.t)
        out["t"], out["w"], out["u"] = args.t, w, u
    _print(out)
    return EXIT_OK


def cmd_demo(args) -> int:
    from .scenarios import scenario_config

    overrides = _overridden(scenario_config(args.name), args).to_dict()
    result = run_scenario(args.name, overrides, out_dir=args.out)
    run = result.run
    print(f"{args.name}: {run.n_steps} steps, {len(run.collision_events)} collisions, {len(run.sticking_events)} sticking events")
    for key, value in result.extra.items():
        print(f"{key}: {json.dumps(_jsonable(value))}")
    print(_summarize(result.report))
    return EXIT_OK if result.report["passed"] else EXIT_FAILED


def cmd_sweep(args) -> int:
    config = _overridden(load_config(args.config), args)
    report = simulate_refinement_ladder(config, args.levels, args.factor)
    summary = report.summary()
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_json(Path(args.out) / "ladder.json", summary)
    _print(summary)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "oracle": cmd_oracle, "demo": cmd_demo, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except SchemaError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OutOfDomain, ValueError) as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularCSError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())

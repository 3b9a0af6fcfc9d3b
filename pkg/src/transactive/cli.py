"""Command-line entry point.

Exit codes: 0 ok, 1 a property/feasibility violation or corrupt log,
2 usage or configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .harness import ConfigError, HarnessError, SimConfig, replay, run_simulation, verify_log, read_state_hash
from .journal import CorruptLog
from .model import ObjectiveKind, ObjectiveSpec
from .runs import carpool_config, carpool_tables, custom_config, energy_config, energy_tables
from .scenarios import CarpoolParams, EnergyPricing, ScenarioError, load_energy_traces, synthetic_energy_day
from .solver import SolverConfig, Strategy

OUT_ENV = "TRANSACTIVE_OUT"

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


@dataclass
class RunSummary:
    paths: dict[str, str] = field(default_factory=dict)
    status: int = EXIT_OK
    matched: int = 0
    cycles: int = 0
    solve_seconds_max: float = 0.0
    solve_seconds_mean: float = 0.0

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "paths": self.paths,
            "matched": self.matched,
            "cycles": self.cycles,
            "solve_seconds_max": self.solve_seconds_max,
            "solve_seconds_mean": self.solve_seconds_mean,
        }


def _load_json(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON in {path}: {exc}") from None


def _parse_kill(spec: str) -> tuple[str, int]:
    try:
        who, tick = spec.split("@")
        name = who if who.startswith("solver-") else f"solver-{int(who)}"
        return name, int(tick)
    except ValueError:
        raise ConfigError(f"--kill-solver expects ID@TICK, got {spec!r}") from None


def _objective(name: str | None, data: dict) -> ObjectiveSpec | None:
    if name is None:
        return ObjectiveSpec.from_json(data["objective"]) if "objective" in data else None
    try:
        kind = ObjectiveKind(name)
    except ValueError:
        raise ConfigError(f"unknown objective {name!r}") from None
    if kind is ObjectiveKind.WEIGHTED_QUANTITY:
        weights = data.get("objective", {}).get("weights")
        if weights is None:
            raise ConfigError("weighted_quantity needs weights in the config file")
        return ObjectiveSpec.from_json({"kind": kind.value, "weights": weights})
    return ObjectiveSpec(kind)


def build_config(args: argparse.Namespace) -> SimConfig:
    """Assemble a run config from flags; raises ConfigError before any output exists."""
    solver = SolverConfig(strategy=Strategy(args.strategy), seed=args.seed)
    n_solvers = 1 if args.solvers is None else args.solvers
    faults = [_parse_kill(k) for k in args.kill_solver]
    if args.scenario == "custom":
        if args.config is None:
            raise ConfigError("run custom needs --config")
        cfg = custom_config(args.config, seed=args.seed, solvers=n_solvers, solver=solver)
        if args.solvers is not None:
            cfg.solvers = [SolverConfig(strategy=solver.strategy, seed=args.seed + i) for i in range(args.solvers)]
        cfg.faults += faults
        objective = _objective(args.objective, {})
        if objective is not None:
            cfg.objective = objective
        return cfg
    data = _load_json(args.config)
    objective = _objective(args.objective, data)
    extra = {"faults": faults}
    if objective is not None:
        extra["objective"] = objective
    try:
        if args.scenario == "carpool":
            params = CarpoolParams.from_json({**data.get("carpool", {}), "seed": args.seed})
            params.validate()
            return carpool_config(params, solvers=n_solvers, solver=solver, **extra)
        traces = args.traces or data.get("traces", "synthetic")
        if traces == "synthetic":
            profiles = synthetic_energy_day(seed=args.seed, **data.get("synthetic", {}))
        else:
            profiles = load_energy_traces(Path(traces))
        pricing = EnergyPricing(**data.get("pricing", {}))
        return energy_config(profiles, seed=args.seed, solvers=n_solvers, solver=solver,
                             pricing=pricing, intervals_per_cycle=int(data.get("intervals_per_cycle", 4)),
                             **extra)
    except FileNotFoundError as exc:
        raise ConfigError(f"input file not found: {exc.filename}") from None
    except (ScenarioError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _out_dir(args: argparse.Namespace) -> Path:
    if args.out is not None:
        return Path(args.out)
    base = Path(os.environ.get(OUT_ENV, "runs"))
    return base / f"{args.scenario}-seed{args.seed}"


def cmd_run(args: argparse.Namespace) -> int:
    config = build_config(args)
    config.validate()
    out = _out_dir(args)
    config.out_dir = out
    report, _ = run_simulation(config)
    if config.name == "carpool":
        params = CarpoolParams.from_json({**_load_json(args.config).get("carpool", {}), "seed": args.seed})
        tables = carpool_tables(config, report, out, params.intervals())
    else:
        tables = energy_tables(config, report, out) if config.name == "energy" else {}
    totals = report.to_json()["totals"]
    feasible = all(c.feasible for c in report.cycles)
    ok = all(report.properties.values()) and report.conservation_ok() and feasible
    summary = RunSummary(
        paths={"report": str(out / "report.json"), "ops": str(out / "ops.jsonl"),
               "events": str(out / "events.jsonl"), **{k: str(v) for k, v in tables.items()}},
        status=EXIT_OK if ok else EXIT_VIOLATION,
        matched=report.total_matched(),
        cycles=len(report.cycles),
        solve_seconds_max=totals["solve_seconds_max"],
        solve_seconds_mean=totals["solve_seconds_mean"],
    )
    (out / "summary.json").write_text(json.dumps(summary.to_json(), indent=1) + "\n")
    print(f"{config.name}: {summary.cycles} cycles, matched {summary.matched}, "
          f"solve max {summary.solve_seconds_max:.3f}s mean {summary.solve_seconds_mean:.3f}s")
    for prop, passed in report.properties.items():
        print(f"  {prop:22s} {'PASS' if passed else 'FAIL'}")
    print(f"  {'Conservation':22s} {'PASS' if report.conservation_ok() else 'FAIL'}")
    print(f"  {'Feasibility':22s} {'PASS' if feasible else 'FAIL'}")
    print(f"outputs in {out}")
    return summary.status


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        result = verify_log(Path(args.log))
    except CorruptLog as exc:
        print(f"CorruptLog: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    for line in result.lines():
        print(line)
    return EXIT_OK if result.ok else EXIT_VIOLATION


def cmd_replay(args: argparse.Namespace) -> int:
    log = Path(args.log)
    try:
        contract = replay(log)
    except CorruptLog as exc:
        print(f"CorruptLog: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    digest = contract.state_hash()
    print(digest)
    expected = args.expect
    if expected is None and (log.parent / "state.hash").exists():
        expected = read_state_hash(log.parent / "state.hash")
    elif expected is not None and Path(expected).is_file():
        expected = read_state_hash(Path(expected))
    if expected is not None and expected != digest:
        print(f"state hash differs from expected {expected}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_fuzz(args: argparse.Namespace) -> int:
    from .fuzz import FuzzConfig, check_sequence, load_reproducer, run_fuzz

    if args.reproduce is not None:
        cx = load_reproducer(Path(args.reproduce))
        failure = check_sequence(cx.ops).failure
        print(failure or "reproducer no longer fails")
        return EXIT_VIOLATION if failure else EXIT_OK
    config = FuzzConfig(seed=args.seed, iterations=args.iterations, only_assignments=args.assignments_only,
                        check_progress=not args.assignments_only)
    stats, cx = run_fuzz(config)
    for line in stats.lines():
        print(line)
    if cx is None:
        return EXIT_OK
    base = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "runs"))
    path = cx.write(base / f"fuzz-counterexample-seed{args.seed}-it{cx.iteration}.json")
    print(f"counterexample at iteration {cx.iteration}: {cx.message}")
    print(f"minimized reproducer ({len(cx.ops)} ops) written to {path}")
    return EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="transactive", description="Transactive market simulator and verifier")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario end to end")
    run.add_argument("scenario", choices=["carpool", "energy", "custom"])
    run.add_argument("--config", type=Path, help="scenario JSON file")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./runs)")
    run.add_argument("--solvers", type=int, help="number of solver agents")
    run.add_argument("--kill-solver", action="append", default=[], metavar="ID@TICK",
                     help="kill solver ID at logical tick TICK (repeatable)")
    run.add_argument("--strategy", choices=[s.value for s in Strategy], default=Strategy.GREEDY_LOCAL_SEARCH.value)
    run.add_argument("--objective", choices=[k.value for k in ObjectiveKind])
    run.add_argument("--traces", help="energy only: 'synthetic' or a CSV path")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="check trace properties on an ops log")
    ver.add_argument("log", type=Path)
    ver.set_defaults(func=cmd_verify)

    rep = sub.add_parser("replay", help="replay an ops log and print the final state hash")
    rep.add_argument("log", type=Path)
    rep.add_argument("--expect", help="expected hash or a file holding it (default: state.hash beside the log)")
    rep.set_defaults(func=cmd_replay)

    fz = sub.add_parser("fuzz", help="randomised operation sequences against the contract")
    fz.add_argument("--seed", type=int, default=0)
    fz.add_argument("--iterations", type=int, default=1000)
    fz.add_argument("--assignments-only", action="store_true",
                    help="short single-cycle sequences focused on add_assignment")
    fz.add_argument("--out", type=Path, help="where to write a counterexample")
    fz.add_argument("--reproduce", type=Path, help="re-run a written counterexample")
    fz.set_defaults(func=cmd_fuzz)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if getattr(args, "solvers", None) is not None and args.solvers < 0:
        print("error: --solvers must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OSError, HarnessError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

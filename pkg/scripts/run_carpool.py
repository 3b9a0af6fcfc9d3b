#!/usr/bin/env python3
"""Carpool market at full scale: 75 prosumers, 20 pickup points, 5 destinations."""

import argparse
from pathlib import Path

from transactive.harness import run_simulation, verify_log
from transactive.runs import carpool_config, carpool_tables
from transactive.scenarios import CarpoolParams


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--solvers", type=int, default=2)
    ap.add_argument("--out", type=Path, default=Path("runs/carpool-experiment"))
    args = ap.parse_args()

    params = CarpoolParams(seed=args.seed)
    cfg = carpool_config(params, solvers=args.solvers, out_dir=args.out)
    report, _ = run_simulation(cfg)
    carpool_tables(cfg, report, args.out, params.intervals())

    solve_ms = max((r.solve_seconds for r in report.solver_reports), default=0.0) * 1000
    print(f"offers {len(cfg.offers)}, seats matched {report.total_matched()}, "
          f"slowest solve {solve_ms:.1f} ms, run {report.wall_seconds:.2f} s")
    for line in verify_log(args.out / "ops.jsonl").lines():
        print(" ", line)
    print(f"tables in {args.out}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Energy day with two solvers; one dies at 08:15, optionally the other later.

Prints the per-cycle objective and winner next to a no-fault baseline.
"""

import argparse

from transactive.harness import run_simulation
from transactive.runs import energy_config
from transactive.scenarios import interval_label


def finalize_ticks(sim):
    return [o.op.time for _, o in sim.outcomes if o.accepted and o.op.name == "finalize"]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--kill-both-at-cycle", type=int, default=None,
                    help="also kill the surviving solver at the start of this cycle")
    args = ap.parse_args()

    baseline, sim = run_simulation(energy_config(seed=args.seed, solvers=2))
    ticks = finalize_ticks(sim)
    # cycle 9 covers 08:00-08:45; a quarter of the way in is 08:15
    kill_at = ticks[7] + (ticks[8] - ticks[7]) // 4
    faults = [("solver-0", kill_at)]
    if args.kill_both_at_cycle:
        faults.append(("solver-1", ticks[args.kill_both_at_cycle - 2] + 1))
    faulty, _ = run_simulation(energy_config(seed=args.seed, solvers=2, faults=faults))

    print(f"kills: {faulty.kills}")
    print(f"{'cycle':>5} {'from':>5} {'baseline':>9} {'winner':>9} {'faulty':>9} {'winner':>9}")
    for b, f in zip(baseline.cycles, faulty.cycles):
        label = interval_label((b.cycle - 1) * 4)
        start = f"{label // 100:02d}:{label % 100:02d}"
        print(f"{b.cycle:>5} {start:>5} {b.objective:>9} {b.winner or '-':>9} {f.objective:>9} {f.winner or '-':>9}")


if __name__ == "__main__":
    main()

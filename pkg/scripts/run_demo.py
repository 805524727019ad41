#!/usr/bin/env python3
"""Run the bundled demo end to end and print a quality/power comparison.

Initializes the simulated platform (idle/saturation probing, error-ratio
calibration), executes the governed trace, and replays the same trace pinned
at best and worst quality, then prints the three-way comparison the governor
is supposed to win: near-best error at well-below-best power.

Usage:
    python scripts/run_demo.py [--scenario scenarios/demo.json]
                               [--budget-percent 0.4] [--out-dir out/demo]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from rendergov.harness import run
from rendergov.scenario import load_scenario, ScenarioError

import dataclasses


def main() -> int:
    root = Path(__file__).resolve().parent.parent
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--scenario", default=str(root / "scenarios" / "demo.json"))
    parser.add_argument("--budget-percent", type=float, default=None)
    parser.add_argument("--out-dir", default=str(root / "out" / "demo"))
    args = parser.parse_args()

    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    if args.budget_percent is not None:
        scenario = dataclasses.replace(
            scenario,
            governor=dataclasses.replace(
                scenario.governor, budget_percent=args.budget_percent
            ),
        )

    started = time.perf_counter()
    result = run(scenario, args.out_dir)
    elapsed = time.perf_counter() - started
    s = result.summary

    print(f"scenario '{s['scenario']}' (seed {s['seed']}), {s['frames']} frames, "
          f"budget {100 * s['budget_percent']:.0f}% = {s['budget_watts']:.2f} W")
    print(f"platform probe: P_m {s['p_min_probed']:.2f} W, P_M {s['p_max_probed']:.2f} W "
          f"({s['probe_frames_used']} probe frames)")
    print()
    print(f"{'':>14} {'mean power':>12} {'mean error':>12}")
    print(f"{'max quality':>14} {s['replay_best_mean_power']:>10.2f} W {s['replay_best_mean_error']:>12.4f}")
    print(f"{'governed':>14} {s['governed_mean_power']:>10.2f} W {s['governed_mean_error']:>12.4f}")
    print(f"{'min quality':>14} {s['replay_worst_mean_power']:>10.2f} W {s['replay_worst_mean_error']:>12.4f}")
    print()
    print(f"selections {s['selection_count']}, refits {s['refit_count']}, "
          f"infeasible {s['infeasible_count']}, run time {elapsed:.1f}s")
    print(f"artifacts: {result.log_path} and {result.summary_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

#!/usr/bin/env python3
"""Continuous-protocol sweep over converter-loop conditions and the
alternate plant preset; prints the rms summary rows."""

import argparse
from pathlib import Path

from hvdcfr.harness import Scenario, run_sweep, sweep_table_csv, sweep_table_text

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", default=ROOT / "scenarios" / "continuous_load.json")
    parser.add_argument("--out", default="results/sweep")
    args = parser.parse_args()

    scenario = Scenario.from_json(args.scenario)
    results = run_sweep(scenario)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_table_csv(results))
    (out / "sweep.txt").write_text(sweep_table_text(results))
    print(sweep_table_text(results))
    print(f"tables under {out}/")


if __name__ == "__main__":
    main()

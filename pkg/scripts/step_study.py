#!/usr/bin/env python3
"""Run the two-pulse step protocol for all three cases and print the
comparison table (CSV copies land in the output directory)."""

import argparse
from pathlib import Path

from hvdcfr.harness import Scenario, compare_cases, run_cases

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scenario", default=ROOT / "scenarios" / "step_pulses.json")
    parser.add_argument("--out", default="results/step")
    args = parser.parse_args()

    scenario = Scenario.from_json(args.scenario)
    reports = run_cases(scenario)
    table = compare_cases(reports)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(table.to_csv_text())
    for report in reports:
        report.trace.to_csv(out / f"case{report.case}_trace.csv")
    print(table.to_text())
    print(f"traces and tables under {out}/")


if __name__ == "__main__":
    main()

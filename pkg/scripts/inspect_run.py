#!/usr/bin/env python3
"""
Run Inspection Script

Summarizes the CSV artifacts of a run directory: the training log, the
frontier of a sweep and the verify report.

Usage:
    python scripts/inspect_run.py [--run-dir RUN_DIR] [--tail N]

Example:
    python scripts/inspect_run.py --run-dir outputs/two_cycle
    python scripts/inspect_run.py --run-dir outputs/portfolio --tail 20
"""

import argparse
import os
import sys

import pandas as pd

# Add the parent directory to the path to import vola modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from vola.artifacts import read_csv
from vola.cli import FRONTIER_FILE, TRAIN_LOG_FILE, VERIFY_FILE, frontier_checks


def show_metadata(metadata: dict) -> None:
    for key, value in metadata.items():
        print(f"   🏷️  {key}: {value}")


def show_train_log(frame: pd.DataFrame, tail: int) -> None:
    print("🏋️ TRAINING LOG")
    print("-" * 40)
    print(f"🔁 Iterations: {len(frame)}")
    if frame.empty:
        return
    first, last = frame.iloc[0], frame.iloc[-1]
    print(f"📈 J:   {first['j_hat']:.6g} -> {last['j_hat']:.6g}")
    print(f"📉 nu2: {first['nu2_hat']:.6g} -> {last['nu2_hat']:.6g}")
    print(f"🎯 eta: {first['eta_hat']:.6g} -> {last['eta_hat']:.6g} (best {frame['eta_hat'].max():.6g})")
    print()
    print(frame.tail(tail).to_string(index=False))


def show_frontier(frame: pd.DataFrame) -> None:
    print("🗺️  FRONTIER")
    print("-" * 40)
    print(frame.to_string(index=False))
    report = frontier_checks(frame)
    print()
    print(f"{'✅' if report.monotone else '⚠️ '} nu2 monotone in the grid (inversions: {report.inversions or 'none'})")
    print(f"{'✅' if not report.dominated else '⚠️ '} dominated points: {report.dominated or 'none'}")


def show_verify(frame: pd.DataFrame) -> None:
    print("🧪 VERIFY REPORT")
    print("-" * 40)
    for _, row in frame.iterrows():
        mark = "✅" if row["pass"] else ("❌" if row["gating"] else "⚠️ ")
        print(f"   {mark} {row['theorem_id']:<34} n={row['instances']:<5} "
              f"max={row['max_violation']:.3g} tol={row['tolerance']:.3g}"
              + (f" skipped={row['skipped']}" if row.get("skipped", 0) else ""))
    failed = frame[(~frame["pass"]) & frame["gating"]]
    print()
    print(f"📋 {len(frame) - len(failed)}/{len(frame)} suites passed or informational")


def main():
    parser = argparse.ArgumentParser(
        description='Summarize the artifacts of a vola-rl run directory',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python scripts/inspect_run.py
  python scripts/inspect_run.py --run-dir outputs/portfolio --tail 20
        """
    )

    parser.add_argument('--run-dir', type=str, default='outputs/run',
                        help='Run output directory (default: outputs/run)')
    parser.add_argument('--tail', type=int, default=5, help='Training-log rows to print (default: 5)')

    args = parser.parse_args()

    print("📊 vola-rl Run Summary")
    print("=" * 60)
    print(f"📂 Run Directory: {args.run_dir}")
    print()

    if not os.path.isdir(args.run_dir):
        print("❌ Run directory does not exist!")
        sys.exit(1)

    shown = False
    for name, show in ((TRAIN_LOG_FILE, lambda f: show_train_log(f, args.tail)),
                       (FRONTIER_FILE, show_frontier), (VERIFY_FILE, show_verify)):
        path = os.path.join(args.run_dir, name)
        if not os.path.exists(path):
            continue
        metadata, frame = read_csv(path)
        print(f"📄 {name}")
        show_metadata(metadata)
        print()
        show(frame)
        print()
        shown = True

    if not shown:
        print("❌ No run artifacts found (expected train_log.csv, frontier.csv or verify_report.csv)")
        sys.exit(1)


if __name__ == "__main__":
    main()

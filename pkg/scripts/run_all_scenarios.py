#!/usr/bin/env python3
"""Run every experiment suite and write one CSV per suite.

Usage: python3 scripts/run_all_scenarios.py [out_dir]

The searches are cached across suites, so running them together is much
cheaper than five separate CLI calls.  Expect a few minutes on one core.
"""

import sys
import time
from pathlib import Path

from m4bram.scenarios import NOTES, SCENARIOS, run_scenario


def main(out_dir: Path) -> None:
    for sid in SCENARIOS:
        t0 = time.perf_counter()
        path, rows = run_scenario(sid, out_dir)
        print(f"{sid:18s} {len(rows):4d} rows  {time.perf_counter() - t0:7.1f}s  {path}")
        print(f"{'':18s} {NOTES[sid]}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("results"))

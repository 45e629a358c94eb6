"""Steady-state localization error versus measurement-noise bound on the default scenario."""

from __future__ import annotations

import argparse
import time

from swarmloc import load_default
from swarmloc.cli import sweep


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--noise", default="0.001,0.01,0.05")
    ap.add_argument("--duration", type=float, default=200.0)
    args = ap.parse_args()

    levels = [float(x) for x in args.noise.split(",")]
    sc = load_default().with_overrides(duration=args.duration)
    t0 = time.perf_counter()
    rows = sweep(sc, levels)
    print(f"{'sigma':>8} {'|p err|':>10} {'|cos err|':>10} {'|sin err|':>10}")
    for r in rows:
        print(f"{r['sigma']:8.3g} {r['pos_err']:10.4f} {r['cos_err']:10.4f} {r['sin_err']:10.4f}")
    print(f"({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()

"""Run the bundled default scenario and print the errors at the end of each stage."""

from __future__ import annotations

import argparse
from pathlib import Path

from swarmloc import load_default, write_csv
from swarmloc.harness import Simulation, emit_plots


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/default")
    ap.add_argument("--no-plots", action="store_true")
    args = ap.parse_args()

    sc = load_default()
    log = Simulation(sc).run()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(log, out / "metrics.csv")
    if not args.no_plots:
        emit_plots(log, out, t_switch=sc.control.t_switch)

    n = sc.n_followers
    for t in (sc.control.t_switch, sc.control.t_switch + 5, sc.duration):
        row = log.at(t)
        print(f"t = {row['t']:.2f} s")
        for i in range(1, n + 1):
            print(
                f"  robot {i}: |p err| {row[f'pos_err_{i}']:.4f}  cos err {row[f'cos_err_{i}']:+.4f}"
                f"  sin err {row[f'sin_err_{i}']:+.4f}  |eps_p| {row[f'form_err_{i}']:.4f}"
            )
    print(f"wrote {out / 'metrics.csv'}")


if __name__ == "__main__":
    main()

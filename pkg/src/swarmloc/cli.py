"""Command-line entry point: ``run``, ``validate`` and ``sweep``.

Exit codes: 0 on success, 2 for configuration errors (bad arguments or
scenario), 3 for failures while simulating or writing results.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from .harness import Simulation, emit_plots, steady_state_errors, write_csv
from .scenario import Scenario, ScenarioError, bundled_path, load_scenario
from .sensing import NoiseConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("swarmloc")


class ConfigError(Exception):
    pass


def _resolve(path: str) -> Path:
    """Scenario path as given, falling back to the bundled scenarios by file name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = bundled_path(p.name)
    if bundled.exists():
        return bundled
    return p


def _load(args) -> Scenario:
    sc = load_scenario(_resolve(args.scenario))
    return sc.with_overrides(
        seed=getattr(args, "seed", None), duration=getattr(args, "duration", None), dt=getattr(args, "dt", None)
    )


def _noise_levels(text: str) -> list[float]:
    try:
        levels = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--noise expects comma-separated numbers, got {text!r}") from exc
    if not levels or any(not (x >= 0) for x in levels):
        raise ConfigError("--noise levels must be non-negative")
    return levels


def summary(sc: Scenario, log_, elapsed: float) -> dict:
    last = log_.at(log_.t[-1]) if len(log_) else {}
    return {
        "scenario": sc.name,
        "seed": sc.seed,
        "dt": sc.dt,
        "duration": sc.duration,
        "steps": len(log_),
        "wall_time_s": round(elapsed, 3),
        "final": {k: v for k, v in last.items() if k != "t"},
    }


def cmd_run(args) -> int:
    sc = _load(args)
    out = Path(args.out)
    t0 = time.perf_counter()
    result = Simulation(sc).run()
    elapsed = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    write_csv(result, out / "metrics.csv")
    if not args.no_plots and len(result):
        emit_plots(result, out, t_switch=sc.control.t_switch)
    # wall time stays out of the CSV so reruns are byte-identical
    (out / "summary.json").write_text(json.dumps(summary(sc, result, elapsed), indent=2, sort_keys=True) + "\n")
    log.info("wrote %s (%d rows, %.2f s)", out / "metrics.csv", len(result), elapsed)
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = load_scenario(_resolve(args.scenario))
    print(
        f"{sc.name}: OK ({sc.n_followers} followers, {len(sc.graph.edges)} measurement edges, "
        f"{len(sc.pairs)} RL pairs, {sc.n_steps} steps)"
    )
    return EXIT_OK


def sweep(sc: Scenario, levels: list[float], window: float = 50.0) -> list[dict]:
    """Steady-state CL errors (mean over the last ``window`` seconds) per noise level."""
    if sc.duration <= window:
        raise ConfigError(f"duration {sc.duration:g} s must exceed the averaging window {window:g} s")
    rows = []
    for sigma in levels:
        noisy = sc.with_overrides(
            noise=NoiseConfig(sigma, sigma, sigma, sc.noise.odo_z, sc.noise.odo_theta)
        )
        res = Simulation(noisy).run()
        err = steady_state_errors(res, sc.duration - window, sc.duration)
        rows.append({"sigma": sigma, **err})
    return rows


def cmd_sweep(args) -> int:
    levels = _noise_levels(args.noise)
    sc = _load(args)
    t0 = time.perf_counter()
    rows = sweep(sc, levels, args.window)
    elapsed = time.perf_counter() - t0
    fields = ["sigma", "pos_err", "cos_err", "sin_err"]
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        fh = path.open("w", newline="")
    else:
        fh = sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(r[k])) for k in fields})
    finally:
        if fh is not sys.stdout:
            fh.close()
    log.info("sweep over %d noise levels took %.2f s", len(levels), elapsed)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarmloc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario and write metrics.csv (+ plots)")
    r.add_argument("--scenario", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--duration", type=float)
    r.add_argument("--dt", type=float)
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="load-time checks only")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("sweep", help="steady-state CL error for several measurement-noise bounds")
    s.add_argument("--scenario", required=True)
    s.add_argument("--noise", default="0.001,0.01,0.05")
    s.add_argument("--seed", type=int)
    s.add_argument("--duration", type=float, default=200.0)
    s.add_argument("--dt", type=float)
    s.add_argument("--window", type=float, default=50.0, help="averaging window at the end of the run [s]")
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ScenarioError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything raised while simulating or writing
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

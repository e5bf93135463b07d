"""Command-line entry points.

Every subcommand regenerates its event streams from (config, seed, events),
so any artifact can be reproduced from its manifest alone.  Outputs are
CSV files plus rendered figures under --out, with a manifest.json echoing
the exact configuration.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .analysis import (
    _fringe_outputs,
    delayed_choice_audit,
    run_oracle_checks,
    run_scenario,
    sweep_timing,
    write_manifest,
    write_series_csv,
    UnknownScenario,
)
from .apparatus import IDLER_DETECTORS, ConfigError, load_config
from .coincidence import match_coincidences, nominal_offsets
from .events import CapacityExceeded, run_simulation

_SCENARIOS = ("kim-shih", "single-slit", "timing-sweep", "oracle-check")


def _add_common(parser: argparse.ArgumentParser, events_default: int = 200_000) -> None:
    parser.add_argument("--config", default=None, metavar="JSON",
                        help="config file (packaged defaults when omitted)")
    parser.add_argument("--seed", type=int, default=12345, help="RNG seed")
    parser.add_argument("--events", type=int, default=events_default,
                        help="number of emitted pairs")
    parser.add_argument("--out", default="dcqe-out", metavar="DIR",
                        help="output directory")
    parser.add_argument("--workers", type=int, default=1,
                        help="generation partitions (output is identical for any value)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcqe",
        description="Delayed-choice eraser bench: generate, match, and analyze "
                    "biphoton detection records.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate the timestamped event table")
    _add_common(p)
    p.add_argument("--debug-tags", action="store_true",
                   help="append the hidden branch tag column (validation runs)")

    p = sub.add_parser("coincide", help="generate events and match coincidences")
    _add_common(p)
    p.add_argument("--window", type=float, default=None,
                   help="accept half-width in seconds (default: config value)")
    p.add_argument("--no-true-pair", action="store_true",
                   help="omit the ground-truth pairing column")

    p = sub.add_parser("fringes", help="full fringe report with figures")
    _add_common(p)
    p.add_argument("--window", type=float, default=None,
                   help="accept half-width in seconds (default: config value)")
    p.add_argument("--no-figures", action="store_true", help="CSV outputs only")

    p = sub.add_parser("sweep", help="visibility along a timing-spread grid")
    _add_common(p)
    p.add_argument("--parameter", choices=("sigma_eff", "window"), default="sigma_eff")
    p.add_argument("--points", type=int, default=10, help="grid size")
    p.add_argument("--no-figures", action="store_true", help="CSV outputs only")

    p = sub.add_parser("audit", help="fraction of D0 clicks preceding any idler arrival")
    _add_common(p)

    p = sub.add_parser("scenario", help="run a packaged scenario end to end")
    p.add_argument("name", choices=_SCENARIOS)
    _add_common(p)
    p.add_argument("--stopwatch-period", type=float, default=None,
                   help="pointer rotation period for the dial figure, seconds")
    p.add_argument("--no-figures", action="store_true", help="CSV outputs only")

    p = sub.add_parser("oracle-check",
                       help="recompute reference numbers two ways; nonzero exit on mismatch")
    p.add_argument("--config", default=None, metavar="JSON")
    p.add_argument("--out", default=None, metavar="DIR",
                   help="also write oracle_checks.csv here")

    return parser


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args)
    started = time.perf_counter()
    streams = run_simulation(config, args.events, args.seed, workers=args.workers)
    streams.to_csv(out / "events.csv", debug=args.debug_tags)
    counts = {det.value: c for det, c in streams.detector_counts().items()}
    write_manifest(out, config, args.seed, "simulate", args.events,
                   time.perf_counter() - started,
                   {"detector_counts": counts})
    print(f"wrote {out / 'events.csv'} ({2 * streams.n_pairs} rows)")
    return 0


def _cmd_coincide(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args)
    started = time.perf_counter()
    streams = run_simulation(config, args.events, args.seed, workers=args.workers)
    window = args.window if args.window is not None else config.coincidence_window
    matched = match_coincidences(streams, window, nominal_offsets(config))
    matched.to_csv(out / "coincidences.csv", include_true_pair=not args.no_true_pair)
    results = {
        "window": window,
        "n_coincidences": len(matched),
        "true_pair_purity": matched.purity(),
    }
    write_manifest(out, config, args.seed, "coincide", args.events,
                   time.perf_counter() - started, results)
    print(f"matched {len(matched)} of {streams.n_pairs} pairs "
          f"(purity {matched.purity():.6f})")
    return 0


def _cmd_fringes(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args)
    started = time.perf_counter()
    streams = run_simulation(config, args.events, args.seed, workers=args.workers)
    window = args.window if args.window is not None else config.coincidence_window
    matched = match_coincidences(streams, window, nominal_offsets(config))
    results, _files = _fringe_outputs(
        config, streams, matched, out,
        make_figures=not args.no_figures, stopwatch_period=None, scenario="fringes",
    )
    write_manifest(out, config, args.seed, "fringes", args.events,
                   time.perf_counter() - started, results)
    for det in IDLER_DETECTORS:
        fit = results["fits"].get(det.value)
        if fit is None:
            print(f"{det.value}: no fit (insufficient data)")
        else:
            print(f"{det.value}: V = {fit['visibility']:.4f} "
                  f"+- {fit['visibility_err']:.4f}")
    return 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args)
    started = time.perf_counter()
    sweep = sweep_timing(config, args.events, args.seed,
                         parameter=args.parameter, n_points=args.points,
                         workers=args.workers)
    sweep.to_csv(out / "sweep.csv")
    series = {f"v_{det.value.lower()}": (sweep.values, sweep.visibility[det])
              for det in IDLER_DETECTORS}
    series["v_analytic"] = (sweep.values, sweep.v_analytic)
    series["d_tv_ref"] = (sweep.values, sweep.d_tv)
    write_series_csv(out / "sweep_long.csv", series)
    if not args.no_figures:
        from . import plotting
        plotting.sweep_figure(sweep, out / "sweep.png")
    write_manifest(out, config, args.seed, "sweep", args.events,
                   time.perf_counter() - started,
                   {"parameter": sweep.parameter,
                    "spearman_d1": sweep.spearman_d1,
                    "values": [float(v) for v in sweep.values]})
    print(f"swept {sweep.parameter} over {len(sweep.values)} points "
          f"(D1 rank correlation {sweep.spearman_d1:.3f})")
    return 0


def _cmd_audit(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args)
    started = time.perf_counter()
    streams = run_simulation(config, args.events, args.seed, workers=args.workers)
    fraction = delayed_choice_audit(streams, config)
    write_manifest(out, config, args.seed, "audit", args.events,
                   time.perf_counter() - started,
                   {"audit_fraction_d0_first": fraction})
    if fraction is None:
        print("audit: not applicable (no events)")
    else:
        print(f"audit: fraction of D0 clicks before any possible idler arrival = "
              f"{fraction!r}")
    return 0


def _cmd_scenario(args) -> int:
    config = load_config(args.config)
    report = run_scenario(
        args.name, config, seed=args.seed, out_dir=args.out,
        n_events=args.events, workers=args.workers,
        stopwatch_period=args.stopwatch_period,
        make_figures=not args.no_figures,
    )
    print(f"scenario {report.name}: {'ok' if report.ok else 'NOT ok'} "
          f"({len(report.files)} files under {report.out_dir})")
    return 0 if report.ok else 1


def _cmd_oracle_check(args) -> int:
    config = load_config(args.config)
    checks = run_oracle_checks(config)
    width = max(len(c.name) for c in checks)
    for c in checks:
        status = "ok " if c.passed else "FAIL"
        print(f"{status}  {c.name:<{width}}  expected {c.expected!r}  "
              f"actual {c.actual!r}  tol {c.tolerance!r}")
    failed = [c for c in checks if not c.passed]
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["name,expected,actual,tolerance,passed"]
        for c in checks:
            lines.append(f"{c.name},{c.expected!r},{c.actual!r},"
                         f"{c.tolerance!r},{int(c.passed)}")
        (out / "oracle_checks.csv").write_text("\n".join(lines) + "\n")
    print(f"{len(checks) - len(failed)}/{len(checks)} reference checks passed")
    return 1 if failed else 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "coincide": _cmd_coincide,
    "fringes": _cmd_fringes,
    "sweep": _cmd_sweep,
    "audit": _cmd_audit,
    "scenario": _cmd_scenario,
    "oracle-check": _cmd_oracle_check,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, CapacityExceeded, UnknownScenario, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

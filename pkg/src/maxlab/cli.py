"""Command line entry point: ``maxlab run | fit | check``."""

from __future__ import annotations

import argparse
import sys
from collections import defaultdict

from . import __version__

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maxlab", description="Maxwell-fluid structural-stability laboratory")
    p.add_argument("--version", action="version", version=f"maxlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario config and write results.csv, report.json, manifest.json")
    run.add_argument("config", help="YAML scenario file (or a manifest.json from an earlier run)")
    run.add_argument("--output-dir", help="override output_dir")
    run.add_argument("--threads", type=int, help="worker threads for sweep points")
    run.add_argument("--seed", type=int, help="override the config seed")

    fit = sub.add_parser("fit", help="refit convergence rates from a results.csv")
    fit.add_argument("results", help="results.csv written by 'maxlab run'")
    fit.add_argument("--seed", type=int, default=0, help="bootstrap seed (default 0)")

    check = sub.add_parser("check", help="run the quick invariant suite")
    check.add_argument("--seed", type=int, default=0)
    return p


def _cmd_run(args) -> int:
    from .lab.config import ConfigError, load_config
    from .lab.output import run_scenario
    try:
        cfg = load_config(args.config).with_overrides(args.output_dir, args.threads, args.seed)
    except ConfigError as exc:
        print(f"maxlab: invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        outcome = run_scenario(cfg)
    except OSError as exc:
        print(f"maxlab: cannot write results: {exc}", file=sys.stderr)
        return EXIT_USAGE
    rep = outcome.result.report
    print(f"{cfg.scenario}: wrote {outcome.output_dir}")
    if rep.get("fit"):
        f = rep["fit"]
        print(f"  slope {f['slope']:.4f}  95% CI [{f['slope_ci'][0]:.4f}, {f['slope_ci'][1]:.4f}]  C {f['C']:.4g}")
    elif "fit_error" in rep:
        print(f"  no rate fit: {rep['fit_error']}")
    if "error" in rep:
        print(f"  aborted: {rep['error']}", file=sys.stderr)
    return outcome.status


def sweep_pairs(rows) -> dict:
    """Group sweep rows by (scenario, xi_2) into (|xi_1 - xi_2|, error) pairs.

    1D sweeps use the sup over output times, multi-D sweeps the last time.
    Self-comparisons are skipped.
    """
    series = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if r["xi_2"] is None or r["l2_diff"] is None:
            continue
        series[(r["scenario"], r["xi_2"])][r["xi_1"]].append((r["t"], r["l2_diff"]))
    out = {}
    for (scenario, xi2), by_xi in series.items():
        pairs = []
        for xi1, pts in by_xi.items():
            if xi1 == xi2:
                continue
            err = max(e for _, e in pts) if scenario.startswith("shear") else max(pts)[1]
            pairs.append((abs(xi1 - xi2), err))
        out[(scenario, xi2)] = pairs
    return out


def _cmd_fit(args) -> int:
    from .lab.fitting import DataError, fit_rate
    from .lab.output import read_results, render_json
    try:
        rows = read_results(args.results)
    except (OSError, ValueError) as exc:
        print(f"maxlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    groups = sweep_pairs(rows)
    if not groups:
        print("maxlab: no sweep rows (xi_2 and l2_diff present) in the file", file=sys.stderr)
        return EXIT_FAIL
    status, out = EXIT_OK, []
    for (scenario, xi2), pairs in groups.items():
        entry = {"scenario": scenario, "xi_2": xi2}
        try:
            entry["fit"] = fit_rate(pairs, seed=args.seed).as_dict()
        except DataError as exc:
            entry["fit"], entry["fit_error"] = None, str(exc)
            status = EXIT_FAIL
        out.append(entry)
    sys.stdout.write(render_json(out))
    return status


def _cmd_check(args) -> int:
    from .lab.checks import run_checks
    return EXIT_OK if run_checks(seed=args.seed) else EXIT_FAIL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "fit": _cmd_fit, "check": _cmd_check}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())

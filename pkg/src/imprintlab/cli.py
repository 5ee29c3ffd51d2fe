"""Command-line front end: run / sweep / plan / check.

Exit codes: 0 success, 2 configuration error, 3 runtime error, 4 threshold
failure in check mode.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import theory
from ._svg import line_chart
from .dataio import canonical_json, write_csv, write_report
from .errors import ConfigError
from .scenarios import (BUNDLED, SWEEP_AXES, bundled_config, check_bundled,
                        run_scenario, sweep_scenario)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_CHECK = 4


def _load_config(args) -> dict:
    if args.config is not None and args.scenario is not None:
        raise ConfigError("config: pass either --config or --scenario, not both")
    if args.config is not None:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
        return raw
    if args.scenario is not None:
        return bundled_config(args.scenario)
    raise ConfigError("config: need --config FILE or --scenario NAME")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="path to a scenario config (JSON)")
    p.add_argument("--scenario", help="bundled scenario name "
                   f"({', '.join(sorted(BUNDLED))})")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="output directory (default: stdout)")
    p.add_argument("--f64", action="store_true", help="run in 64-bit precision")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker threads for sweep points (a single run is sequential)")


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    result = run_scenario(cfg, seed=args.seed, use_float64=args.f64)
    name = result.report["config"]["name"]
    if args.out:
        path = os.path.join(args.out, f"{name}_report.json")
        write_report(result.report, path)
        print(f"report written to {path}")
    else:
        sys.stdout.write(canonical_json(result.report))
    return EXIT_OK


def _parse_values(text: str, axis: str):
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            vals.append(int(tok) if axis in ("bins", "batch") else float(tok))
        except ValueError:
            raise ConfigError(f"sweep.values: bad value {tok!r} for axis {axis}") from None
    if not vals:
        raise ConfigError("sweep.values: need at least one value")
    return vals


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    values = _parse_values(args.values, args.axis)
    header, rows, _ = sweep_scenario(cfg, args.axis, values, jobs=args.jobs,
                                     seed=args.seed, use_float64=args.f64)
    name = cfg.get("name", "sweep")
    if args.out:
        csv_path = os.path.join(args.out, f"{name}_{args.axis}_sweep.csv")
        write_csv(csv_path, header, rows)
        print(f"sweep written to {csv_path}")
        svg = _sweep_chart(args.axis, values, rows)
        if svg is not None:
            svg_path = os.path.join(args.out, f"{name}_{args.axis}_sweep.svg")
            with open(svg_path, "w") as fh:
                fh.write(svg)
            print(f"chart written to {svg_path}")
    else:
        import csv as _csv
        writer = _csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return EXIT_OK


def _sweep_chart(axis, values, rows):
    def col(name):
        idx = {"prop1": 2, "iid": 3, "one_shot": 5, "exact_fraction": 7,
               "success_rate": 10}[name]
        return [row[idx] if isinstance(row[idx], (int, float)) else None for row in rows]

    if axis == "placement":
        series = [("predicted success", values, col("one_shot")),
                  ("measured success", values, col("success_rate"))]
        y = "success probability"
    elif axis == "sigma":
        series = [("measured exact fraction", values, col("exact_fraction"))]
        y = "exact fraction"
    else:
        n = None
        series = [("measured exact fraction", values, col("exact_fraction"))]
        prop1 = col("prop1")
        iid = col("iid")
        # predictions are expected counts; scale to fractions via the batch size
        exact_counts = [row[6] if isinstance(row[6], (int, float)) else None for row in rows]
        fracs = col("exact_fraction")
        for cnt, frac in zip(exact_counts, fracs):
            if cnt and frac:
                n = cnt / frac
                break
        if n:
            series.append(("composition model", values,
                           [p / n if p is not None else None for p in prop1]))
            series.append(("iid model", values,
                           [p / n if p is not None else None for p in iid]))
        y = "exact fraction"
    try:
        return line_chart(series, title=f"{axis} sweep", x_label=axis, y_label=y)
    except ValueError:
        return None


def _cmd_plan(args) -> int:
    if (args.k is None) == (args.p is None):
        raise ConfigError("plan: pass exactly one of --k or --p")
    lines = [f"batch size n = {args.n}"]
    if args.k is not None:
        lines.append(f"bins k = {args.k}")
        try:
            v = theory.prop1_closed_form(args.n, args.k)
            lines.append(f"expected exactly-recovered (composition model): {v:.4f}")
        except ValueError as exc:
            lines.append(f"composition model unavailable: {exc}")
        lines.append(f"expected exactly-recovered (iid model):         "
                     f"{theory.iid_expected(args.n, args.k):.4f}")
        k_rows = args.k + args.decoys
    else:
        if not (0.0 < args.p < 1.0):
            raise ConfigError(f"plan: --p must lie in (0, 1), got {args.p}")
        lines.append(f"fused interval mass p = {args.p}")
        lines.append(f"one-shot success probability: "
                     f"{theory.one_shot_success(args.n, args.p):.4f}")
        p_star, v_star = theory.one_shot_optimum(args.n)
        lines.append(f"optimal mass p* = {p_star:.6g} with success {v_star:.4f}")
        k_rows = 2 + args.decoys
    over = theory.overhead(args.m, k_rows, decoys=0,
                           bridge_params=args.bridge_params,
                           base_params=args.base_params)
    lines.append(f"imprint parameter overhead: {over['absolute']}")
    if "relative" in over:
        lines.append(f"relative to base model: {over['relative'] * 100:.2f}%")
    print("\n".join(lines))
    return EXIT_OK


def _cmd_check(args) -> int:
    failures = 0
    for name in sorted(BUNDLED):
        result = run_scenario(bundled_config(name), seed=args.seed,
                              use_float64=args.f64)
        if args.out:
            write_report(result.report, os.path.join(args.out, f"{name}_report.json"))
        for label, ok, detail in check_bundled(result):
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {label} ({detail})")
            failures += 0 if ok else 1
    if failures:
        print(f"{failures} check(s) failed")
        return EXIT_CHECK
    print("all checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imprintlab",
        description="Gradient-inversion imprint attack simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and emit its report")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="run a scenario across an axis of values")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values, e.g. 8,16,32")

    p_plan = sub.add_parser("plan", help="expected recovery and overhead, no simulation")
    p_plan.add_argument("--n", type=int, required=True, help="batch size")
    p_plan.add_argument("--k", type=int, default=None, help="number of bins")
    p_plan.add_argument("--p", type=float, default=None, help="fused interval mass")
    p_plan.add_argument("--m", type=int, required=True, help="feature width")
    p_plan.add_argument("--decoys", type=int, default=0)
    p_plan.add_argument("--bridge-params", type=int, default=0)
    p_plan.add_argument("--base-params", type=int, default=None,
                        help="parameter count of the carrier model")

    p_check = sub.add_parser("check", help="run every bundled scenario against "
                             "its thresholds")
    p_check.add_argument("--seed", type=int, default=None)
    p_check.add_argument("--out", default=None)
    p_check.add_argument("--f64", action="store_true")
    p_check.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "plan": _cmd_plan,
                "check": _cmd_check}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"runtime error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Subcommands::

    dhocbf run SCENARIO.yaml        simulate one scenario file
    dhocbf preset NAME              run a validity preset in both barrier modes
    dhocbf sweep ...                grid over beta1 x beta2
    dhocbf validate                 randomized oracle checks of the QP and geometry
    dhocbf metrics TRACE.csv ...    ADE / FDE / SR of trace files

Exit codes: 0 success, 1 check failure or infeasibility under policy=error,
2 usage error. The default output directory comes from ``DHOCBF_OUTPUT_DIR``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from dhocbf.barrier import MODES, VARIANTS
from dhocbf.errors import InfeasibleError, ValidationError
from dhocbf.experiments import RunResult, preset_checks, run_one, run_preset, run_validation
from dhocbf.metrics import metric_report, trace_positions
from dhocbf.planner import ReferenceTrajectory
from dhocbf.safety_filter import POLICIES
from dhocbf.scenario_io import apply_overrides, fmt, parse_scenario, read_trace_csv, write_trace_csv
from dhocbf.simulator import PRESETS, build_preset

log = logging.getLogger("dhocbf")

OUTPUT_ENV = "DHOCBF_OUTPUT_DIR"
SUMMARY_COLUMNS = (
    "record", "scenario", "mode", "min_distance", "ade_ref",
    "n_steps", "n_optimal", "n_relaxed", "n_infeasible", "check", "passed", "detail",
)


def _outdir(args) -> Path:
    out = Path(args.output or os.environ.get(OUTPUT_ENV) or "dhocbf_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _overrides(args) -> dict:
    keys = ("beta1", "beta2", "variant", "dt", "t_end", "margin", "policy", "seed", "sensory_radius", "rho")
    return {k: getattr(args, k, None) for k in keys if getattr(args, k, None) is not None}


def _add_overrides(p, with_mode=True):
    g = p.add_argument_group("overrides")
    if with_mode:
        g.add_argument("--mode", choices=MODES)
    g.add_argument("--beta1", type=float)
    g.add_argument("--beta2", type=float)
    g.add_argument("--variant", choices=VARIANTS)
    g.add_argument("--dt", type=float)
    g.add_argument("--t-end", dest="t_end", type=float)
    g.add_argument("--margin", type=float)
    g.add_argument("--policy", choices=POLICIES)
    g.add_argument("--seed", type=int)
    g.add_argument("--sensory-radius", dest="sensory_radius", type=float)
    g.add_argument("--rho", type=float)


def _run_row(run: RunResult):
    return [
        "run", run.scenario.name, run.mode, fmt(run.min_distance), fmt(run.ade_ref), len(run.trace),
        run.count("optimal"), run.count("relaxed"), run.count("infeasible"), "", "", "",
    ]


def _write_summary(path, runs, checks=()):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for run in runs:
            w.writerow(_run_row(run))
        for c in checks:
            w.writerow(["check", "", "", "", "", "", "", "", "", c.name, "pass" if c.passed else "fail", c.detail])


def cmd_run(args) -> int:
    s = parse_scenario(args.scenario)
    s = apply_overrides(s, mode=args.mode, **_overrides(args))
    out = _outdir(args)
    run = run_one(s)
    trace_path = out / f"{s.name}.csv"
    write_trace_csv(trace_path, run.trace, len(s.obstacles))
    _write_summary(out / f"{s.name}_summary.csv", [run])
    if not args.no_figures:
        from dhocbf.plotting import plot_distances, plot_trajectories

        plot_distances([run], out / f"{s.name}_distance.png", s.name)
        plot_trajectories([run], out / f"{s.name}_trajectory.png", s.name)
    print(f"{s.name}: {len(run.trace)} steps, min distance {run.min_distance:.4g} m, ADE to reference {run.ade_ref:.4g} m -> {trace_path}")
    return 0


def cmd_preset(args) -> int:
    modes = (args.mode,) if args.mode else MODES
    out = _outdir(args)
    result = run_preset(args.name, modes, _overrides(args), args.jobs)
    for run in result.runs:
        write_trace_csv(out / f"{run.scenario.name}.csv", run.trace, len(run.scenario.obstacles))
    checks = preset_checks(result)
    _write_summary(out / f"{args.name}_summary.csv", result.runs, checks)
    if not args.no_figures:
        from dhocbf.plotting import preset_figures

        preset_figures(result, out)
    for run in result.runs:
        print(f"{run.scenario.name:36s} min distance {run.min_distance:8.4f} m  ADE {run.ade_ref:7.4f} m  relaxed {run.count('relaxed')}")
    for c in checks:
        print(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
    return 0 if all(c.passed for c in checks) else 1


def _parse_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("values must be positive")
    return vals


def cmd_sweep(args) -> int:
    modes = (args.mode,) if args.mode else MODES
    base = _overrides(args)
    scenarios = []
    for b1 in args.beta1_values:
        for b2 in args.beta2_values:
            o = dict(base, beta1=b1, beta2=b2)
            for mode in modes:
                if args.preset:
                    scenarios += [(b1, b2, s) for s in build_preset(args.preset, mode, o)]
                else:
                    s = apply_overrides(parse_scenario(args.scenario), mode=mode, **o)
                    scenarios.append((b1, b2, s))
    out = _outdir(args)
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        runs = list(pool.map(lambda item: run_one(item[2]), scenarios))
    path = out / "sweep.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["beta1", "beta2", "scenario", "mode", "min_distance", "ade_ref", "n_relaxed", "n_infeasible", "all_optimal"])
        for (b1, b2, s), run in zip(scenarios, runs):
            all_opt = run.count("optimal") == len(run.trace)
            w.writerow([fmt(b1), fmt(b2), s.name, run.mode, fmt(run.min_distance), fmt(run.ade_ref), run.count("relaxed"), run.count("infeasible"), int(all_opt)])
    print(f"{len(runs)} runs -> {path}")
    return 0


def cmd_validate(args) -> int:
    report = run_validation(args.samples, args.seed, args.resolution)
    print(f"qp: {report.qp_instances} instances, {report.qp_oracle_infeasible} oracle-infeasible, "
          f"max objective deviation (exact - grid) {report.qp_max_deviation:.3e}, failures {report.qp_failures}")
    print(f"geometry: {report.geometry_pairs} rectangle pairs, max |distance - sampled| {report.geometry_max_deviation:.3e}, "
          f"failures {report.geometry_failures}")
    if report.passed:
        print("validate: PASS")
        return 0
    out = _outdir(args)
    path = out / "validate_failures.json"
    path.write_text(json.dumps({"seed": args.seed, "samples": args.samples, "failures": report.failures}, indent=2))
    print(f"validate: FAIL ({len(report.failures)} instances written to {path})")
    return 1


def cmd_metrics(args) -> int:
    traces = [read_trace_csv(p) for p in args.traces]
    if args.reference:
        ref = ReferenceTrajectory.from_csv(args.reference)
        refs = [ref.positions_at([r.t for r in tr]) for tr in traces]
    else:
        refs = [trace_positions(tr) for tr in traces]
        log.warning("no --reference given; displacement errors are measured against the traces themselves")
    report = metric_report(traces, refs, args.collision_margin)
    fields = ("ade", "fde", "fde_penultimate", "sr", "min_distance", "var_ade", "var_fde", "n_runs")
    rows = [fields, [fmt(getattr(report, f)) if isinstance(getattr(report, f), float) else str(getattr(report, f)) for f in fields]]
    if args.output_file:
        with open(args.output_file, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    csv.writer(sys.stdout, lineterminator="\n").writerows(rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dhocbf", description="Barrier-function safety filter simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario file")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", help=f"output directory (default ${OUTPUT_ENV} or ./dhocbf_out)")
    p.add_argument("--no-figures", action="store_true")
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="run a validity-experiment preset")
    p.add_argument("name", choices=PRESETS)
    p.add_argument("-o", "--output")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-figures", action="store_true")
    _add_overrides(p)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("sweep", help="sweep beta1 x beta2 over a preset or scenario")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=PRESETS)
    src.add_argument("--scenario")
    p.add_argument("--beta1-values", type=_parse_list, default=[0.5, 1.0, 2.0])
    p.add_argument("--beta2-values", type=_parse_list, default=[0.5, 1.0, 2.0])
    p.add_argument("-o", "--output")
    p.add_argument("--jobs", type=int, default=1)
    _add_overrides(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="randomized oracle checks")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=float, default=1e-3)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("metrics", help="ADE/FDE/SR of trace CSV files")
    p.add_argument("traces", nargs="+")
    p.add_argument("--reference", help="reference trajectory CSV (columns t, x, y, vx, vy)")
    p.add_argument("--collision-margin", type=float, default=0.0)
    p.add_argument("-o", "--output-file")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "samples", 1) <= 0:
        parser.error("--samples must be positive")
    if getattr(args, "resolution", 1.0) <= 0:
        parser.error("--resolution must be positive")
    if getattr(args, "jobs", 1) <= 0:
        parser.error("--jobs must be positive")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

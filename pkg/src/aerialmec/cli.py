"""Command-line front end.

    aerialmec run   --config cfg.json --approach JC5A --seed 7 --out results/
    aerialmec sweep --config cfg.json --param uav_cpu --values 10,15,20 \
                    --approaches JC5A,LC --seeds 5 --out results/
    aerialmec plot  --in results/sweep_uav_cpu.csv --metric acd --out acd.svg

Exit codes: 0 success, 2 usage error, 3 runtime failure. AMO_THREADS caps
the sweep worker pool. --no-timing zeroes the wall-clock column so repeated
runs produce byte-identical CSV files.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .metrics import compute_metrics, write_csv
from .pipeline import APPROACHES, RESERVED_APPROACHES, PipelineParams, run_horizon
from .scenario import ScenarioSpec, generate_scenario, spec_from_json, spec_to_json
from .svgplot import METRIC_COLUMNS, UsageError, emit_plot
from .sweep import DEFAULT_SWEEPS, SWEEP_PARAMS, run_sweep


def _load_spec(path) -> ScenarioSpec:
    if path is None:
        return ScenarioSpec()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return spec_from_json(fh.read())
    except FileNotFoundError as exc:
        raise UsageError(f"config not found: {path}") from exc
    except ValueError as exc:
        raise UsageError(f"bad config: {exc}") from exc


def _check_approach(name: str) -> str:
    if name in APPROACHES:
        return name
    if name in RESERVED_APPROACHES:
        raise UsageError(f"approach {name} is reserved for externally "
                         "imported results and cannot be run")
    raise UsageError(f"unknown approach {name!r}; choose from "
                     f"{', '.join(APPROACHES)}")


def _cmd_run(args) -> int:
    spec = _load_spec(args.config)
    approach = _check_approach(args.approach)
    spec = dataclasses.replace(spec, rng_seed=int(args.seed))
    scenario = generate_scenario(spec)
    os.makedirs(args.out, exist_ok=True)
    horizon = run_horizon(scenario, approach, PipelineParams(),
                          rng_seed=int(args.seed), timing=not args.no_timing)
    record = compute_metrics(horizon)
    write_csv(os.path.join(args.out, "metrics.csv"), [record])
    with open(os.path.join(args.out, "scenario.json"), "w",
              encoding="utf-8") as fh:
        fh.write(spec_to_json(spec) + "\n")
    slot_path = os.path.join(args.out, "slots.csv")
    with open(slot_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("slot,tasks,executed,completed,failures,total_delay_s,"
                 "home_hits,uav_energy_j,mbs_energy_j,iterations,converged\n")
        for rec in horizon.records:
            executed = sum(1 for t in rec.tasks if t.delay_s < float("inf"))
            completed = sum(1 for t in rec.tasks if t.completed)
            fh.write(",".join([
                str(rec.slot), str(len(rec.tasks)), str(executed),
                str(completed), str(len(rec.deadline_failures)),
                repr(rec.objective_s), str(rec.home_hits),
                repr(float(rec.uav_energy_j.sum())), repr(rec.mbs_energy_j),
                str(rec.iterations), str(int(rec.converged))]) + "\n")
    with open(os.path.join(args.out, "trajectory.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("slot,uav,x_m,y_m\n")
        for rec in horizon.records:
            for u in range(scenario.uav_count):
                fh.write(f"{rec.slot},{u},{rec.positions[u, 0]!r},"
                         f"{rec.positions[u, 1]!r}\n")
    with open(os.path.join(args.out, "trace.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("slot,iteration,objective_s\n")
        for rec in horizon.records:
            for i, val in enumerate(rec.objective_trace):
                fh.write(f"{rec.slot},{i},{val!r}\n")
    print(f"wrote {args.out}/metrics.csv, slots.csv, trajectory.csv, "
          "trace.csv, scenario.json")
    return 0


def _parse_values(text: str, param: str):
    if text is None:
        return DEFAULT_SWEEPS[param]
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad --values list: {text!r}") from exc


def _cmd_sweep(args) -> int:
    spec = _load_spec(args.config)
    if args.param not in SWEEP_PARAMS:
        raise UsageError(f"unknown sweep parameter {args.param!r}; choose "
                         f"from {', '.join(SWEEP_PARAMS)}")
    values = _parse_values(args.values, args.param)
    if not values:
        raise UsageError("empty --values list")
    approaches = [_check_approach(a) for a in args.approaches.split(",")
                  if a.strip()]
    if not approaches:
        raise UsageError("empty --approaches list")
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, f"sweep_{args.param}.csv")
    run_sweep(spec, args.param, values, approaches, args.seeds, out_csv,
              timing=not args.no_timing)
    print(f"wrote {out_csv}")
    return 0


def _cmd_plot(args) -> int:
    emit_plot(args.infile, args.metric, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="aerialmec",
        description="slot-based aerial edge-computing simulator/optimizer")
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run one horizon")
    pr.add_argument("--config", default=None, help="scenario JSON")
    pr.add_argument("--approach", required=True)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out", required=True, help="output directory")
    pr.add_argument("--no-timing", action="store_true",
                    help="zero the timing column for byte-stable output")
    pr.set_defaults(func=_cmd_run)

    ps = sub.add_parser("sweep", help="run a parameter sweep")
    ps.add_argument("--config", default=None)
    ps.add_argument("--param", required=True,
                    help="|".join(SWEEP_PARAMS))
    ps.add_argument("--values", default=None,
                    help="comma-separated sweep values")
    ps.add_argument("--approaches", default="JC5A,LC,AO,SU,EBCC")
    ps.add_argument("--seeds", type=int, default=3)
    ps.add_argument("--out", required=True)
    ps.add_argument("--no-timing", action="store_true")
    ps.set_defaults(func=_cmd_sweep)

    pp = sub.add_parser("plot", help="render a metric chart from a CSV")
    pp.add_argument("--in", dest="infile", required=True)
    pp.add_argument("--metric", required=True,
                    help="|".join(sorted(METRIC_COLUMNS)))
    pp.add_argument("--out", required=True)
    pp.set_defaults(func=_cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:   # runtime failure contract
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())

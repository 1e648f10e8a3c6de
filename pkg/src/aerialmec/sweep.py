"""Experiment sweeps: the cross product of sweep values, approaches, and
seeds, run in a process pool and collected into one canonical CSV whose
ordering never depends on completion order.
"""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor

from .metrics import MetricsRecord, compute_metrics, write_csv
from .pipeline import APPROACHES, PipelineParams, run_horizon
from .scenario import ScenarioSpec, generate_scenario

SWEEP_PARAMS = ("uav_cpu", "isd_count", "cache_slots")

DEFAULT_SWEEPS = {
    "uav_cpu": [10.0, 12.5, 15.0, 17.5, 20.0],      # GHz
    "isd_count": [10, 20, 30, 40, 50],
    "cache_slots": [3, 5, 7, 9],
}


def apply_sweep_value(spec: ScenarioSpec, param: str,
                      value: float) -> ScenarioSpec:
    """New spec with the swept knob pinned at the given value."""
    if param == "uav_cpu":
        return dataclasses.replace(spec, uav_cpu_ghz=(float(value),
                                                      float(value)))
    if param == "isd_count":
        return dataclasses.replace(spec, isd_count=int(value))
    if param == "cache_slots":
        return dataclasses.replace(spec, uav_cache_slots=(int(value),
                                                          int(value)))
    raise ValueError(f"unknown sweep parameter {param!r}; "
                     f"choose from {SWEEP_PARAMS}")


def _worker_count() -> int:
    env = os.environ.get("AMO_THREADS", "")
    if env.strip():
        return max(1, int(env))
    return max(1, min(4, os.cpu_count() or 1))


def run_one(spec: ScenarioSpec, approach: str, seed: int,
            params: PipelineParams, sweep_param: str, sweep_value: float,
            timing: bool = True) -> MetricsRecord:
    spec = dataclasses.replace(spec, rng_seed=int(seed))
    scenario = generate_scenario(spec)
    horizon = run_horizon(scenario, approach, params, rng_seed=int(seed),
                          timing=timing)
    return compute_metrics(horizon, sweep_param=sweep_param,
                           sweep_value=sweep_value)


def _job(args) -> MetricsRecord:
    spec, approach, seed, params, sweep_param, value, timing = args
    try:
        return run_one(spec, approach, seed, params, sweep_param, value,
                       timing=timing)
    except Exception as exc:   # one failed run must not sink the sweep
        return MetricsRecord(approach=approach, sweep_param=sweep_param,
                             sweep_value=float(value), seed=int(seed),
                             acd_s=None, apr_cps=None, aschr=0.0,
                             fail_rate=0.0, slot_ms=0.0,
                             status=f"failed:{type(exc).__name__}")


def run_sweep(base_spec: ScenarioSpec, param: str, values, approaches,
              seeds, out_csv, params: PipelineParams | None = None,
              timing: bool = True, workers: int | None = None) -> list[MetricsRecord]:
    """Run the full cross product and write the canonical CSV."""
    if not values:
        raise ValueError("sweep needs at least one value")
    for ap in approaches:
        if ap not in APPROACHES:
            raise ValueError(f"approach {ap!r} is not runnable here")
    params = params or PipelineParams()
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    jobs = []
    for value in values:
        spec = apply_sweep_value(base_spec, param, value)
        for approach in approaches:
            for seed in seed_list:
                jobs.append((spec, approach, int(seed), params, param,
                             float(value), timing))
    nworkers = workers if workers is not None else _worker_count()
    if nworkers <= 1 or len(jobs) <= 1:
        records = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            records = list(pool.map(_job, jobs, chunksize=1))
    write_csv(out_csv, records)
    return records

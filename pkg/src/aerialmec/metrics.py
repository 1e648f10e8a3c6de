"""Horizon metrics and the results CSV contract.

Metrics follow the evaluation definitions: completion delay averaged over
the device population and the horizon, processing rate as total demanded
cycles over total delay, and the caching hit ratio as home-UAV executions
normalized by fleet cache capacity. Every executed task's realized delay
counts, late or not; lateness lands in the failure-rate column. Floats are
written with repr so rows re-parse bit-exactly.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

from .pipeline import HorizonResult

CSV_HEADER = ("approach,sweep_param,sweep_value,seed,acd_s,apr_cps,aschr,"
              "fail_rate,slot_ms,status")


@dataclass
class MetricsRecord:
    approach: str
    sweep_param: str
    sweep_value: float
    seed: int
    acd_s: float | None
    apr_cps: float | None
    aschr: float
    fail_rate: float
    slot_ms: float
    status: str = "ok"

    def key(self):
        return (self.approach, self.sweep_param, self.sweep_value, self.seed)


def compute_metrics(horizon: HorizonResult, sweep_param: str = "",
                    sweep_value: float = 0.0) -> MetricsRecord:
    sc = horizon.scenario
    total_delay = 0.0
    total_cycles = 0.0
    executed = 0
    generated = 0
    failures = 0
    home_hits = 0
    slot_ms = []
    for rec in horizon.records:
        slot_ms.append(rec.solve_ms)
        home_hits += rec.home_hits
        for tr in rec.tasks:
            generated += 1
            if math.isfinite(tr.delay_s):
                executed += 1
                total_delay += tr.delay_s
                total_cycles += tr.size_bits * tr.density
            if not tr.completed:
                failures += 1
    n = sc.slot_count
    acd = total_delay / (sc.isd_count * n) if executed else None
    apr = total_cycles / total_delay if total_delay > 0.0 else None
    cache_cap = sum(u.cache_slots for u in sc.uavs)
    aschr = (home_hits / cache_cap) / n if cache_cap else 0.0
    fail_rate = failures / generated if generated else 0.0
    return MetricsRecord(approach=horizon.approach, sweep_param=sweep_param,
                         sweep_value=float(sweep_value), seed=horizon.seed,
                         acd_s=acd, apr_cps=apr, aschr=aschr,
                         fail_rate=fail_rate,
                         slot_ms=(sum(slot_ms) / len(slot_ms)) if slot_ms else 0.0)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def format_row(r: MetricsRecord) -> str:
    return ",".join([r.approach, r.sweep_param, _fmt(r.sweep_value),
                     _fmt(r.seed), _fmt(r.acd_s), _fmt(r.apr_cps),
                     _fmt(r.aschr), _fmt(r.fail_rate), _fmt(r.slot_ms),
                     r.status])


def _mean_err(values: list[float]) -> tuple[float | None, float | None]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    m = sum(vals) / len(vals)
    if len(vals) < 2:
        return m, 0.0
    var = sum((v - m) ** 2 for v in vals) / (len(vals) - 1)
    return m, math.sqrt(var / len(vals))


def aggregate_rows(records: list[MetricsRecord]) -> list[str]:
    """Mean and standard-error rows per (approach, sweep point); the seed
    column carries the literal aggregate kind."""
    groups: dict[tuple, list[MetricsRecord]] = {}
    for r in records:
        if r.status != "ok":
            continue
        groups.setdefault((r.approach, r.sweep_param, r.sweep_value),
                          []).append(r)
    rows = []
    for (ap, par, val) in sorted(groups):
        rs = groups[(ap, par, val)]
        stats = {}
        for name in ("acd_s", "apr_cps", "aschr", "fail_rate", "slot_ms"):
            stats[name] = _mean_err([getattr(r, name) for r in rs])
        for idx, kind in ((0, "mean"), (1, "stderr")):
            cells = [ap, par, _fmt(val), kind]
            for name in ("acd_s", "apr_cps", "aschr", "fail_rate", "slot_ms"):
                cells.append(_fmt(stats[name][idx]))
            cells.append("aggregate")
            rows.append(",".join(cells))
    return rows


def write_csv(path, records: list[MetricsRecord],
              aggregates: bool = True) -> None:
    records = sorted(records, key=lambda r: r.key())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            fh.write(format_row(r) + "\n")
        if aggregates:
            for row in aggregate_rows(records):
                fh.write(row + "\n")


@dataclass
class AggregateRow:
    approach: str
    sweep_param: str
    sweep_value: float
    kind: str             # mean | stderr
    acd_s: float | None
    apr_cps: float | None
    aschr: float | None
    fail_rate: float | None
    slot_ms: float | None


def read_csv(path) -> tuple[list[MetricsRecord], list[AggregateRow]]:
    """Parse a results file back into detail records and aggregate rows."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_csv(text)


def parse_csv(text: str) -> tuple[list[MetricsRecord], list[AggregateRow]]:
    lines = [ln for ln in io.StringIO(text).read().splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("unrecognized results header")
    details: list[MetricsRecord] = []
    aggregates: list[AggregateRow] = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != 10:
            raise ValueError(f"malformed row: {ln!r}")
        opt = lambda s: None if s == "" else float(s)
        if cells[3] in ("mean", "stderr"):
            aggregates.append(AggregateRow(
                approach=cells[0], sweep_param=cells[1],
                sweep_value=float(cells[2]), kind=cells[3],
                acd_s=opt(cells[4]), apr_cps=opt(cells[5]),
                aschr=opt(cells[6]), fail_rate=opt(cells[7]),
                slot_ms=opt(cells[8])))
        else:
            details.append(MetricsRecord(
                approach=cells[0], sweep_param=cells[1],
                sweep_value=float(cells[2]), seed=int(cells[3]),
                acd_s=opt(cells[4]), apr_cps=opt(cells[5]),
                aschr=float(cells[6]), fail_rate=float(cells[7]),
                slot_ms=float(cells[8]), status=cells[9]))
    return details, aggregates

"""Per-slot bandwidth and CPU allocation at fixed routing and positions.

Every decision variable sits in exactly one capacity group (an access band
per UAV, one shared inter-UAV band, the shared backhaul band, a CPU budget
per server) and enters the objective as weight/x, so each group minimizes
sum(w_i/x_i) subject to sum(x_i) <= capacity. The unique minimizer is the
square-root rule x_i = cap * sqrt(w_i) / sum(sqrt(w_j)); stationarity means
w_i/x_i^2 is constant within the group. Deadlines couple groups; when the
closed form misses one, a projected-gradient pass with an escalating
exterior penalty redistributes capacity toward the late tasks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (ISD_UAV, LOCAL, MBS, PEER, UAV_MBS, UAV_UAV, Decision,
                    Scenario, SlotState, link_rate)
from .offloading import SolverReport


@dataclass
class Sp2Params:
    epsilon: float = 1e-3
    penalty0: float = 10.0
    escalations: int = 5
    max_steps: int = 500
    min_share: float = 1e-9


@dataclass(frozen=True)
class AllocGroup:
    """One capacity constraint and the variables living under it."""
    name: str
    capacity: float
    keys: tuple            # one hashable key per member
    weights: np.ndarray    # positive objective numerators

    def __post_init__(self):
        if self.capacity <= 0.0:
            raise ValueError(f"group {self.name}: capacity must be positive")
        if np.any(self.weights <= 0.0):
            raise ValueError(f"group {self.name}: weights must be positive")


def sqrt_alloc(group: AllocGroup) -> np.ndarray:
    """Unique minimizer of sum(w_i/x_i) under sum(x_i) <= capacity."""
    if len(group.keys) == 0:
        return np.zeros(0)
    roots = np.sqrt(group.weights)
    x = group.capacity * roots / roots.sum()
    # keep the float sum at or below capacity
    over = x.sum() - group.capacity
    if over > 0.0:
        x[int(np.argmax(x))] -= 2.0 * over
    return x


@dataclass
class _TaskTerms:
    """How one task's delay decomposes over group variables: list of
    (group index, member index, weight) plus a fixed part (cache fill)."""
    isd: int
    terms: list[tuple[int, int, float]]
    const: float
    deadline: float


def build_groups(scenario: Scenario, state: SlotState, decision: Decision
                 ) -> tuple[list[AllocGroup], list[_TaskTerms]]:
    """Assemble capacity groups and per-task delay decompositions for the
    selected routes, with rates priced at full band."""
    sc = scenario
    pos = decision.positions
    cfg = sc.radio
    fill_s = cfg.content_size_bits / cfg.backhaul_avg_bps

    # raw members keyed per group kind
    access: dict[int, dict[int, float]] = {}          # u -> {k: w}
    inter: dict[tuple[int, int], float] = {}          # (u,v) -> summed w
    mbs_bw: dict[int, float] = {}                     # u -> summed w
    cpu: dict[int, dict[int, float]] = {}             # u -> {k: w}
    cpu_mbs: dict[int, float] = {}                    # k -> w
    per_task: dict[int, list] = {}

    for k in sorted(decision.routes):
        r = decision.routes[k]
        if r.kind == LOCAL:
            continue
        task = state.tasks[k]
        isd = sc.isds[k]
        hu = int(sc.home[k])
        uav = sc.uavs[hu]
        d = task.size_bits
        entries = []
        rate1 = link_rate(ISD_UAV, isd.position_m, pos[hu], 1.0, cfg,
                          isd.tx_power_w, rx_height_m=uav.altitude_m)
        w = d / rate1 if rate1 > 0.0 else math.inf
        access.setdefault(hu, {})[k] = w
        entries.append(("access", hu, k, w))
        if r.kind == PEER:
            v = int(r.target)
            rate1 = link_rate(UAV_UAV, pos[hu], pos[v], 1.0, cfg,
                              uav.tx_power_w)
            w = d / rate1 if rate1 > 0.0 else math.inf
            inter[(hu, v)] = inter.get((hu, v), 0.0) + w
            entries.append(("inter", (hu, v), k, w))
        elif r.kind == MBS:
            rate1 = link_rate(UAV_MBS, pos[hu], sc.mbs.position_m, 1.0, cfg,
                              uav.tx_power_w, tx_height_m=uav.altitude_m,
                              rx_height_m=sc.mbs.height_m)
            w = d / rate1 if rate1 > 0.0 else math.inf
            mbs_bw[hu] = mbs_bw.get(hu, 0.0) + w
            entries.append(("mbs_bw", hu, k, w))
        wc = d * task.density
        if r.kind == MBS:
            cpu_mbs[k] = wc
            entries.append(("cpu_mbs", None, k, wc))
        else:
            u = int(r.target)
            cpu.setdefault(u, {})[k] = wc
            entries.append(("cpu", u, k, wc))
        per_task[k] = entries

    groups: list[AllocGroup] = []
    locate: dict[tuple, tuple[int, int]] = {}   # (kind, gkey, member) -> (gi, mi)

    def push(name, capacity, kind, gkey, members: dict):
        keys = tuple(sorted(members))
        weights = np.array([members[m] for m in keys])
        if not keys or not np.all(np.isfinite(weights)):
            return
        gi = len(groups)
        groups.append(AllocGroup(name, capacity, keys, weights))
        for mi, m in enumerate(keys):
            locate[(kind, gkey, m)] = (gi, mi)

    for u in sorted(access):
        push(f"bw_access[{u}]", 1.0, "access", u, access[u])
    if inter:
        push("bw_inter", 1.0, "inter", None, inter)
    if mbs_bw:
        push("bw_mbs", 1.0, "mbs_bw", None, mbs_bw)
    for u in sorted(cpu):
        push(f"cpu_uav[{u}]", sc.uavs[u].cpu_hz, "cpu", u, cpu[u])
    if cpu_mbs:
        push("cpu_mbs", sc.mbs.cpu_hz, "cpu_mbs", None, cpu_mbs)

    terms: list[_TaskTerms] = []
    for k, entries in sorted(per_task.items()):
        task = state.tasks[k]
        u = decision.routes[k].executes_on_uav()
        const = 0.0
        if u is not None and not state.prev_cache[u, task.service_id]:
            const += fill_s
        tt = []
        broken = False
        for kind, gkey, member, w in entries:
            if kind == "access":
                loc = locate.get((kind, gkey, member))
            elif kind == "inter":
                loc = locate.get((kind, None, gkey))
            elif kind == "mbs_bw":
                loc = locate.get((kind, None, gkey))
            elif kind == "cpu":
                loc = locate.get((kind, gkey, member))
            else:
                loc = locate.get((kind, None, member))
            if loc is None or not math.isfinite(w):
                broken = True
                continue
            tt.append((loc[0], loc[1], w))
        terms.append(_TaskTerms(isd=k, terms=tt if not broken else [],
                                const=const if not broken else math.inf,
                                deadline=task.deadline_s))
    return groups, terms


def _task_delay(alloc: list[np.ndarray], tt: _TaskTerms) -> float:
    t = tt.const
    for gi, mi, w in tt.terms:
        x = alloc[gi][mi]
        if x <= 0.0:
            return math.inf
        t += w / x
    return t


def _group_objective(groups: list[AllocGroup], alloc: list[np.ndarray]) -> float:
    val = 0.0
    for g, x in zip(groups, alloc):
        val += float(np.sum(g.weights / np.maximum(x, 1e-300)))
    return val


def _simplex_project(x: np.ndarray, cap: float, lo: float) -> np.ndarray:
    """Euclidean projection onto {y >= lo, sum(y) <= cap}."""
    y = np.maximum(x, lo)
    if y.sum() <= cap:
        return y
    # project x - lo onto the simplex of size cap - m*lo (sort-based)
    m = x.size
    z = x - lo
    budget = cap - m * lo
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - budget
    rho = np.nonzero(u > css / np.arange(1, m + 1))[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(z - tau, 0.0) + lo


def _project(groups: list[AllocGroup], alloc: list[np.ndarray],
             min_share: float) -> list[np.ndarray]:
    return [_simplex_project(x, g.capacity, min_share * g.capacity)
            for g, x in zip(groups, alloc)]


def penalized_solve(groups: list[AllocGroup], terms: list[_TaskTerms],
                    x0: list[np.ndarray], penalty: float,
                    params: Sp2Params) -> tuple[list[np.ndarray], list[float]]:
    """Projected-gradient minimization of the group objective plus a
    quadratic exterior penalty on deadline excess. Returns the allocation
    and the accepted-objective trace (nonincreasing)."""
    alloc = _project(groups, [x.copy() for x in x0], params.min_share)

    def value(a):
        val = _group_objective(groups, a)
        for tt in terms:
            exc = _task_delay(a, tt) - tt.deadline
            if exc > 0.0:
                val += penalty * exc * exc
        return val

    def gradient(a):
        grad = [-g.weights / np.maximum(x, 1e-300) ** 2
                for g, x in zip(groups, a)]
        for tt in terms:
            exc = _task_delay(a, tt) - tt.deadline
            if exc > 0.0 and math.isfinite(exc):
                for gi, mi, w in tt.terms:
                    grad[gi][mi] += 2.0 * penalty * exc * (-w / a[gi][mi] ** 2)
        return grad

    fval = value(alloc)
    trace = [fval]
    step = 1.0
    prev = None
    for _ in range(params.max_steps):
        grad = gradient(alloc)
        if prev is not None:
            num = den = 0.0
            for xp, gp, x, g in zip(prev[0], prev[1], alloc, grad):
                dx = x - xp
                dg = g - gp
                num += float(dx @ dx)
                den += float(dx @ dg)
            step = min(max(num / den, 1e-12), 1e6) if den > 1e-18 else step * 2.0
        prev = ([x.copy() for x in alloc], [g.copy() for g in grad])
        improved = False
        while step > 1e-18:
            cand = _project(groups, [x - step * g
                                     for x, g in zip(alloc, grad)],
                            params.min_share)
            fn = value(cand)
            if fn < fval - 1e-12:
                alloc, fval = cand, fn
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        trace.append(fval)
        if len(trace) > 1 and abs(trace[-2] - trace[-1]) < params.epsilon:
            break
    return alloc, trace


def solve_sp2(scenario: Scenario, state: SlotState, decision: Decision,
              params: Sp2Params | None = None
              ) -> tuple[Decision, SolverReport]:
    """Fill the decision's bandwidth fractions and CPU rates.

    The square-root rule solves each group exactly; deadlines are then
    checked and, when violated, the penalized joint pass redistributes.
    Tasks that cannot meet their deadline even with a full band and a full
    CPU to themselves are flagged for the caller.
    """
    params = params or Sp2Params()
    groups, terms = build_groups(scenario, state, decision)
    report = SolverReport(solver="resource-alloc", status="converged")

    alloc = [sqrt_alloc(g) for g in groups]
    report.objective_trace = [_group_objective(groups, alloc)] if groups else []

    structurally_bad = []
    for tt in terms:
        t_full = tt.const
        for gi, mi, w in tt.terms:
            t_full += w / groups[gi].capacity
        if not tt.terms and math.isinf(tt.const):
            structurally_bad.append(tt.isd)
        elif t_full > tt.deadline:
            structurally_bad.append(tt.isd)

    late = [tt.isd for tt in terms
            if _task_delay(alloc, tt) > tt.deadline + 1e-12]
    if late:
        checked = [tt for tt in terms if tt.isd not in structurally_bad]
        penalty = params.penalty0
        for _ in range(params.escalations):
            alloc, trace = penalized_solve(groups, checked, alloc, penalty,
                                           params)
            report.objective_trace = trace
            still = [tt.isd for tt in checked
                     if _task_delay(alloc, tt) > tt.deadline + 1e-9]
            if not still:
                break
            penalty *= 2.0
        else:
            report.status = "stalled"

    residual_late = sorted(set(tt.isd for tt in terms
                               if _task_delay(alloc, tt) > tt.deadline + 1e-9)
                           | set(structurally_bad))
    report.infeasible_tasks = residual_late
    report.accepted = not residual_late

    out = Decision(routes=dict(decision.routes), cache=decision.cache.copy(),
                   theta_access={}, theta_inter={}, theta_mbs={},
                   cpu_alloc_hz={}, positions=decision.positions.copy())
    for g, x in zip(groups, alloc):
        if g.name.startswith("bw_access"):
            u = int(g.name[g.name.index("[") + 1:-1])
            for key, val in zip(g.keys, x):
                out.theta_access[int(key)] = float(val)
        elif g.name == "bw_inter":
            for key, val in zip(g.keys, x):
                out.theta_inter[tuple(key)] = float(val)
        elif g.name == "bw_mbs":
            for key, val in zip(g.keys, x):
                out.theta_mbs[int(key)] = float(val)
        else:
            for key, val in zip(g.keys, x):
                out.cpu_alloc_hz[int(key)] = float(val)
    return out, report


def equal_allocation(scenario: Scenario, state: SlotState,
                     decision: Decision) -> Decision:
    """Even split of every band and CPU budget over its active claimants."""
    groups, _ = build_groups(scenario, state, decision)
    out = Decision(routes=dict(decision.routes), cache=decision.cache.copy(),
                   theta_access={}, theta_inter={}, theta_mbs={},
                   cpu_alloc_hz={}, positions=decision.positions.copy())
    for g in groups:
        share = g.capacity / len(g.keys)
        if g.name.startswith("bw_access"):
            for key in g.keys:
                out.theta_access[int(key)] = share
        elif g.name == "bw_inter":
            for key in g.keys:
                out.theta_inter[tuple(key)] = share
        elif g.name == "bw_mbs":
            for key in g.keys:
                out.theta_mbs[int(key)] = share
        else:
            for key in g.keys:
                out.cpu_alloc_hz[int(key)] = share
    return out

"""Physical layer of the aerial-MEC system: entities, channel rates, service
delays, energy accounting, rotary-wing propulsion, and the constraint auditor.

All quantities are SI (bits, Hz, W, J, s, m). Functions here are pure and
safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LOG2E = math.log2(math.e)

# link kinds
ISD_UAV = "isd-uav"
UAV_UAV = "uav-uav"
UAV_MBS = "uav-mbs"

# task route kinds
LOCAL = "local"
HOME = "home"
PEER = "peer"
MBS = "mbs"

AUDIT_TOL = 1e-9


@dataclass(frozen=True)
class Task:
    size_bits: float
    service_id: int
    density: float        # CPU cycles per bit
    deadline_s: float


@dataclass(frozen=True)
class Isd:
    id: int
    position_m: np.ndarray
    cpu_hz: float
    tx_power_w: float
    energy_budget_j: float
    capacitance: float    # effective switched capacitance


@dataclass(frozen=True)
class PropulsionParams:
    theta1_w: float = 79.86
    theta2: float = 21.99
    theta3: float = 263.8
    theta4: float = 0.009243
    tip_speed_mps: float = 120.0


@dataclass(frozen=True)
class Uav:
    id: int
    altitude_m: float
    cpu_hz: float
    tx_power_w: float
    cache_slots: int
    energy_budget_j: float
    joules_per_cycle: float
    initial_position_m: np.ndarray
    propulsion: PropulsionParams = field(default_factory=PropulsionParams)


@dataclass(frozen=True)
class Mbs:
    position_m: np.ndarray
    height_m: float
    cpu_hz: float
    energy_budget_j: float
    joules_per_cycle: float


@dataclass(frozen=True)
class RadioConfig:
    beta0: float               # channel gain at 1 m
    noise_w: float
    bw_access_hz: float        # ISD-UAV band
    bw_inter_uav_hz: float     # UAV-UAV band
    bw_backhaul_hz: float      # UAV-MBS band
    backhaul_avg_bps: float    # mean MBS->UAV fill rate
    content_size_bits: float   # size of one cached service unit


@dataclass(frozen=True)
class ServiceLibrary:
    popularity: np.ndarray     # probability per service, sums to 1

    @property
    def count(self) -> int:
        return int(self.popularity.shape[0])


@dataclass(frozen=True)
class Scenario:
    isds: list[Isd]
    uavs: list[Uav]
    mbs: Mbs
    radio: RadioConfig
    services: ServiceLibrary
    home: np.ndarray           # ISD index -> home UAV index
    area_m: float
    slot_count: int
    slot_len_s: float
    vmax_mps: float
    dmin_m: float
    epsilon: float
    arrival_prob: float = 0.8
    task_size_bits: tuple = (0.5e6, 3e6)
    task_density: tuple = (300.0, 600.0)
    task_deadline_s: tuple = (0.5, 1.0)

    @property
    def isd_count(self) -> int:
        return len(self.isds)

    @property
    def uav_count(self) -> int:
        return len(self.uavs)


@dataclass(frozen=True)
class Route:
    """Where one task executes: local, home UAV, a peer UAV, or the MBS."""
    kind: str
    target: int | None = None   # executing UAV index for home/peer

    def executes_on_uav(self) -> int | None:
        if self.kind in (HOME, PEER):
            return self.target
        return None


@dataclass
class Decision:
    """One slot's full decision tuple: routes, cache contents, bandwidth
    fractions, CPU allocations, and the UAV positions used during the slot."""
    routes: dict[int, Route]                    # ISD -> route (tasked ISDs only)
    cache: np.ndarray                           # (U, S) bool
    theta_access: dict[int, float]              # ISD -> fraction of access band
    theta_inter: dict[tuple[int, int], float]   # (u, v) -> fraction of inter band
    theta_mbs: dict[int, float]                 # UAV -> fraction of backhaul band
    cpu_alloc_hz: dict[int, float]              # ISD -> cycles/s at its server
    positions: np.ndarray                       # (U, 2) serving positions


@dataclass
class SlotState:
    slot: int
    tasks: dict[int, Task]        # present tasks only, at most one per ISD
    prev_cache: np.ndarray        # (U, S) bool, contents after slot n-1
    uav_positions: np.ndarray     # (U, 2) positions at slot start


# ---------------------------------------------------------------------------
# channel and rate model

def link_rate(kind: str, tx_pos, rx_pos, bw_fraction: float, cfg: RadioConfig,
              tx_power_w: float, tx_height_m: float = 0.0,
              rx_height_m: float = 0.0) -> float:
    """Achievable rate in bits/s of one link under LoS path loss.

    The channel gain is beta0 over the squared separation: horizontal plus
    vertical for ISD-UAV and UAV-MBS, horizontal only for UAV-UAV (equal
    altitudes). Rate is theta * B * log2(1 + P * G / noise).
    """
    tx = np.asarray(tx_pos, dtype=float)
    rx = np.asarray(rx_pos, dtype=float)
    if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(rx))):
        raise ValueError("non-finite link endpoint")
    if not 0.0 <= bw_fraction <= 1.0:
        raise ValueError(f"bandwidth fraction {bw_fraction} outside [0, 1]")
    d2 = float(np.sum((tx - rx) ** 2))
    if kind == ISD_UAV:
        bw = cfg.bw_access_hz
        denom = d2 + (rx_height_m - tx_height_m) ** 2
    elif kind == UAV_UAV:
        bw = cfg.bw_inter_uav_hz
        if d2 <= 0.0:
            raise ValueError("coincident UAV positions: singular channel gain")
        denom = d2
    elif kind == UAV_MBS:
        bw = cfg.bw_backhaul_hz
        denom = d2 + (tx_height_m - rx_height_m) ** 2
    else:
        raise ValueError(f"unknown link kind {kind!r}")
    if bw_fraction == 0.0:
        return 0.0
    gain = cfg.beta0 / denom
    # grouped so the rate is exactly linear in the bandwidth fraction
    return bw_fraction * (bw * math.log2(1.0 + tx_power_w * gain / cfg.noise_w))


def service_delay(task: Task, kind: str, hop_rates, cpu_hz: float,
                  cache_new: bool, cfg: RadioConfig) -> float:
    """Seconds to finish one task on the given route.

    hop_rates lists the transmission rates of the hops the route traverses
    (empty for local, one for home UAV, two for peer UAV or MBS). A zero rate
    on any traversed hop yields math.inf, the infeasible marker, never a
    division fault. cache_new adds the backhaul fill time for the service.
    """
    d = task.size_bits
    delay = 0.0
    if d > 0.0:
        for r in hop_rates:
            if r <= 0.0:
                return math.inf
            delay += d / r
        if cpu_hz <= 0.0:
            return math.inf
        delay += d * task.density / cpu_hz
    if cache_new:
        delay += cfg.content_size_bits / cfg.backhaul_avg_bps
    return delay


def propulsion_power(speed_mps: float, p: PropulsionParams) -> float:
    """Rotary-wing propulsion power draw in watts at the given level speed."""
    if speed_mps < 0.0:
        raise ValueError("negative speed")
    v2 = speed_mps * speed_mps
    blade = p.theta1_w * (1.0 + 3.0 * v2 / p.tip_speed_mps ** 2)
    induced = p.theta2 * math.sqrt(math.sqrt(p.theta3 + v2 * v2 / 4.0) - v2 / 2.0)
    parasite = p.theta4 * speed_mps ** 3
    return blade + induced + parasite


def hover_power(p: PropulsionParams) -> float:
    return p.theta1_w + p.theta2 * p.theta3 ** 0.25


def max_speed_within(power_budget_w: float, p: PropulsionParams,
                     vmax_mps: float) -> float:
    """Largest speed in [0, vmax] whose propulsion power fits the budget.

    Power dips below hover at moderate speed before the cubic parasite term
    dominates, so when hover fits the budget there is a single crossing on
    the fast branch; bisect for it.
    """
    if propulsion_power(vmax_mps, p) <= power_budget_w:
        return vmax_mps
    if propulsion_power(0.0, p) > power_budget_w:
        return 0.0
    lo, hi = 0.0, vmax_mps
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if propulsion_power(mid, p) <= power_budget_w:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# decision evaluation helpers

def route_hop_rates(scenario: Scenario, decision: Decision, k: int) -> list[float]:
    """Rates of the hops task k traverses under the decision's positions and
    bandwidth split. Missing fractions count as zero bandwidth."""
    route = decision.routes[k]
    if route.kind == LOCAL:
        return []
    isd = scenario.isds[k]
    u = int(scenario.home[k])
    uav = scenario.uavs[u]
    cfg = scenario.radio
    pos = decision.positions
    rates = [link_rate(ISD_UAV, isd.position_m, pos[u],
                       decision.theta_access.get(k, 0.0), cfg, isd.tx_power_w,
                       rx_height_m=uav.altitude_m)]
    if route.kind == PEER:
        v = int(route.target)
        rates.append(link_rate(UAV_UAV, pos[u], pos[v],
                               decision.theta_inter.get((u, v), 0.0), cfg,
                               uav.tx_power_w))
    elif route.kind == MBS:
        rates.append(link_rate(UAV_MBS, pos[u], scenario.mbs.position_m,
                               decision.theta_mbs.get(u, 0.0), cfg,
                               uav.tx_power_w, tx_height_m=uav.altitude_m,
                               rx_height_m=scenario.mbs.height_m))
    return rates


def route_cpu_hz(scenario: Scenario, decision: Decision, k: int) -> float:
    route = decision.routes[k]
    if route.kind == LOCAL:
        return scenario.isds[k].cpu_hz
    return decision.cpu_alloc_hz.get(k, 0.0)


def cache_fill_needed(scenario: Scenario, state: SlotState, decision: Decision,
                      k: int) -> bool:
    """True when task k's executing UAV holds its service only as a fresh
    fill this slot (the service was absent from the previous slot's cache)."""
    uav = decision.routes[k].executes_on_uav()
    if uav is None:
        return False
    return not bool(state.prev_cache[uav, state.tasks[k].service_id])


def task_delay(scenario: Scenario, state: SlotState, decision: Decision,
               k: int) -> float:
    task = state.tasks[k]
    return service_delay(task, decision.routes[k].kind,
                         route_hop_rates(scenario, decision, k),
                         route_cpu_hz(scenario, decision, k),
                         cache_fill_needed(scenario, state, decision, k),
                         scenario.radio)


def total_delay(scenario: Scenario, state: SlotState,
                decision: Decision) -> tuple[float, dict[int, float]]:
    """Slot objective: summed service delay over all present tasks."""
    per_task = {k: task_delay(scenario, state, decision, k)
                for k in sorted(state.tasks)}
    return sum(per_task.values()), per_task


# ---------------------------------------------------------------------------
# energy accounting

@dataclass(frozen=True)
class EnergyBreakdown:
    compute_j: float = 0.0
    transmit_j: float = 0.0
    propulsion_j: float = 0.0

    @property
    def total_j(self) -> float:
        return self.compute_j + self.transmit_j + self.propulsion_j


def isd_energy(scenario: Scenario, state: SlotState, decision: Decision,
               k: int) -> EnergyBreakdown:
    """Energy spent by one ISD: switched-capacitance compute when local,
    radio energy at its transmit power for the uplink when offloading."""
    task = state.tasks.get(k)
    if task is None or task.size_bits <= 0.0:
        return EnergyBreakdown()
    isd = scenario.isds[k]
    route = decision.routes[k]
    if route.kind == LOCAL:
        comp = isd.capacitance * isd.cpu_hz ** 2 * task.size_bits * task.density
        return EnergyBreakdown(compute_j=comp)
    rates = route_hop_rates(scenario, decision, k)
    up = rates[0]
    tx = isd.tx_power_w * task.size_bits / up if up > 0.0 else math.inf
    return EnergyBreakdown(transmit_j=tx)


def uav_energy(scenario: Scenario, state: SlotState, decision: Decision,
               u: int) -> EnergyBreakdown:
    """Energy spent by one UAV: compute for every task it executes, transmit
    for every task it forwards as home relay, and propulsion for the slot."""
    uav = scenario.uavs[u]
    comp = 0.0
    tx = 0.0
    for k, route in decision.routes.items():
        task = state.tasks[k]
        if task.size_bits <= 0.0:
            continue
        if route.executes_on_uav() == u:
            comp += uav.joules_per_cycle * task.size_bits * task.density
        if route.kind in (PEER, MBS) and int(scenario.home[k]) == u:
            relay = route_hop_rates(scenario, decision, k)[1]
            if relay > 0.0:
                tx += uav.tx_power_w * task.size_bits / relay
            else:
                tx = math.inf
    speed = float(np.linalg.norm(decision.positions[u] - state.uav_positions[u]))
    speed /= scenario.slot_len_s
    prop = propulsion_power(speed, uav.propulsion) * scenario.slot_len_s
    return EnergyBreakdown(compute_j=comp, transmit_j=tx, propulsion_j=prop)


def mbs_energy(scenario: Scenario, state: SlotState,
               decision: Decision) -> EnergyBreakdown:
    comp = 0.0
    for k, route in decision.routes.items():
        if route.kind == MBS:
            task = state.tasks[k]
            comp += scenario.mbs.joules_per_cycle * task.size_bits * task.density
    return EnergyBreakdown(compute_j=comp)


def slot_energy(scenario: Scenario, state: SlotState, decision: Decision,
                kind: str, index: int | None = None) -> EnergyBreakdown:
    """Per-slot energy of one entity; kind is 'isd', 'uav', or 'mbs'."""
    if kind == "isd":
        return isd_energy(scenario, state, decision, int(index))
    if kind == "uav":
        return uav_energy(scenario, state, decision, int(index))
    if kind == "mbs":
        return mbs_energy(scenario, state, decision)
    raise ValueError(f"unknown entity kind {kind!r}")


# ---------------------------------------------------------------------------
# constraint auditor

@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    violation: float    # >= 0, zero when satisfied

    @property
    def ok(self) -> bool:
        return self.violation <= AUDIT_TOL


@dataclass(frozen=True)
class ConstraintReport:
    checks: list[ConstraintCheck]

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    def violation(self, prefix: str) -> float:
        """Largest violation among checks whose name starts with prefix."""
        hits = [c.violation for c in self.checks if c.name.startswith(prefix)]
        return max(hits) if hits else 0.0

    def failing(self) -> list[ConstraintCheck]:
        return [c for c in self.checks if not c.ok]


def audit_constraints(scenario: Scenario, state: SlotState,
                      decision: Decision) -> ConstraintReport:
    """Exhaustive feasibility audit of one slot decision.

    Every constraint family of the slot problem is itemized with its signed
    violation magnitude (clamped at zero when satisfied): bandwidth sums,
    CPU capacities, cache capacity, route uniqueness, energy caps, deadlines,
    velocity, pairwise separation, initial placement, and the requirement
    that offload targets hold the needed service.
    """
    U = scenario.uav_count
    S = scenario.services.count
    if decision.cache.shape != (U, S):
        raise ValueError(f"cache shape {decision.cache.shape} != {(U, S)}")
    if decision.positions.shape != (U, 2):
        raise ValueError(f"positions shape {decision.positions.shape} != {(U, 2)}")
    for k in decision.routes:
        if k not in state.tasks:
            raise ValueError(f"decision routes untasked ISD {k}")
    for k in state.tasks:
        if k not in decision.routes:
            raise ValueError(f"task at ISD {k} has no route")

    checks: list[ConstraintCheck] = []
    routes = decision.routes

    # bandwidth: access per UAV, one shared inter-UAV band, shared backhaul
    for u in range(U):
        s = sum(decision.theta_access.get(k, 0.0) for k, r in routes.items()
                if r.kind != LOCAL and int(scenario.home[k]) == u)
        checks.append(ConstraintCheck(f"bw_access[{u}]", max(0.0, s - 1.0)))
    active_pairs = {(int(scenario.home[k]), int(r.target))
                    for k, r in routes.items() if r.kind == PEER}
    s = sum(decision.theta_inter.get(p, 0.0) for p in active_pairs)
    checks.append(ConstraintCheck("bw_inter", max(0.0, s - 1.0)))
    active_mbs = {int(scenario.home[k]) for k, r in routes.items()
                  if r.kind == MBS}
    s = sum(decision.theta_mbs.get(u, 0.0) for u in active_mbs)
    checks.append(ConstraintCheck("bw_mbs", max(0.0, s - 1.0)))

    # CPU capacity per UAV and at the MBS; reported relative to capacity so
    # the shared pass tolerance is meaningful at Hz scale
    for u in range(U):
        s = sum(decision.cpu_alloc_hz.get(k, 0.0) for k, r in routes.items()
                if r.executes_on_uav() == u)
        rel = (s - scenario.uavs[u].cpu_hz) / scenario.uavs[u].cpu_hz
        checks.append(ConstraintCheck(f"cpu_uav[{u}]", max(0.0, rel)))
    s = sum(decision.cpu_alloc_hz.get(k, 0.0) for k, r in routes.items()
            if r.kind == MBS)
    rel = (s - scenario.mbs.cpu_hz) / scenario.mbs.cpu_hz
    checks.append(ConstraintCheck("cpu_mbs", max(0.0, rel)))

    # cache capacity and service availability for offload targets
    for u in range(U):
        used = int(np.count_nonzero(decision.cache[u]))
        checks.append(ConstraintCheck(
            f"cache_capacity[{u}]", max(0.0, float(used - scenario.uavs[u].cache_slots))))
    for k, r in sorted(routes.items()):
        miss = 0.0
        uav = r.executes_on_uav()
        if uav is not None and not decision.cache[uav, state.tasks[k].service_id]:
            miss = 1.0
        checks.append(ConstraintCheck(f"cache_requirement[{k}]", miss))

    # route uniqueness holds structurally: one route object per task
    for k in sorted(routes):
        bad = 0.0 if routes[k].kind in (LOCAL, HOME, PEER, MBS) else 1.0
        checks.append(ConstraintCheck(f"mode_unique[{k}]", bad))

    # energy caps
    for k in sorted(state.tasks):
        e = isd_energy(scenario, state, decision, k).total_j
        checks.append(ConstraintCheck(
            f"energy_isd[{k}]", max(0.0, e - scenario.isds[k].energy_budget_j)))
    for u in range(U):
        e = uav_energy(scenario, state, decision, u).total_j
        checks.append(ConstraintCheck(
            f"energy_uav[{u}]", max(0.0, e - scenario.uavs[u].energy_budget_j)))
    e = mbs_energy(scenario, state, decision).total_j
    checks.append(ConstraintCheck(
        "energy_mbs", max(0.0, e - scenario.mbs.energy_budget_j)))

    # deadlines
    for k in sorted(state.tasks):
        t = task_delay(scenario, state, decision, k)
        excess = t - state.tasks[k].deadline_s
        if math.isinf(t):
            excess = math.inf
        checks.append(ConstraintCheck(f"deadline[{k}]", max(0.0, excess)))

    # trajectory: velocity, pairwise separation (squared form), initial point
    vstep = scenario.vmax_mps * scenario.slot_len_s
    for u in range(U):
        step = float(np.linalg.norm(decision.positions[u] - state.uav_positions[u]))
        checks.append(ConstraintCheck(f"velocity[{u}]", max(0.0, step - vstep)))
    d2min = scenario.dmin_m ** 2
    for u in range(U):
        for v in range(u + 1, U):
            d2 = float(np.sum((decision.positions[u] - decision.positions[v]) ** 2))
            checks.append(ConstraintCheck(
                f"separation[{u},{v}]", max(0.0, d2min - d2)))
    init_err = 0.0
    if state.slot == 0:
        init = np.array([uav.initial_position_m for uav in scenario.uavs])
        init_err = float(np.max(np.abs(state.uav_positions - init)))
    checks.append(ConstraintCheck("initial_position", init_err))

    return ConstraintReport(checks)

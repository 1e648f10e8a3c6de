"""Scenario construction and per-slot randomness: entity placement, task
arrivals, home-UAV partition, and the LRU-governed service cache state.

ScenarioSpec carries the user-facing configuration in the units of the
published parameter table (GHz, dBm, Mbit); everything is converted to SI
when the Scenario entities are built.
"""

from __future__ import annotations

import dataclasses
import json
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .model import (Isd, Mbs, PropulsionParams, RadioConfig, Route, Scenario,
                    ServiceLibrary, SlotState, Task, Uav)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def zipf_popularity(count: int, exponent: float) -> np.ndarray:
    """Zipf-like popularity vector: p_s proportional to (s+1)^-exponent."""
    ranks = np.arange(1, count + 1, dtype=float)
    p = ranks ** (-exponent)
    return p / p.sum()


@dataclass
class ScenarioSpec:
    """World configuration. Two-element sequences are uniform draw ranges."""
    area_m: float = 1000.0
    isd_count: int = 30
    uav_count: int = 4
    slot_count: int = 50
    slot_len_s: float = 1.0
    arrival_prob: float = 0.8
    task_size_mbit: tuple = (0.5, 3.0)
    task_density_cpb: tuple = (300.0, 600.0)
    task_deadline_s: tuple = (0.5, 1.0)
    isd_cpu_ghz: tuple = (0.5, 1.0)
    isd_tx_dbm: tuple = (10.0, 20.0)
    isd_capacitance: float = 1e-27
    isd_energy_budget_j: float = 2.0
    uav_cpu_ghz: tuple = (15.0, 20.0)
    uav_tx_dbm: tuple = (20.0, 23.0)
    uav_cache_slots: tuple = (5, 10)
    uav_altitude_m: float = 100.0
    uav_energy_budget_j: float = 500.0
    uav_joules_per_cycle: float = 1e-10
    uav_positions_m: list | None = None
    mbs_cpu_ghz: float = 20.0
    mbs_height_m: float = 25.0
    mbs_position_m: tuple | None = None     # defaults to the area center
    mbs_energy_budget_j: float = 10.0
    mbs_joules_per_cycle: float = 5e-11
    vmax_mps: float = 50.0
    dmin_m: float = 10.0
    beta0: float = 1e-5
    noise_w: float = 1e-12
    bw_access_mhz: float = 15.0
    bw_inter_mhz: float = 10.0
    bw_backhaul_mhz: float = 5.0
    backhaul_rate_mbps: float = 100.0
    content_size_mbit: float = 10.0
    service_count: int = 20
    zipf_exponent: float = 0.8
    propulsion_theta1_w: float = 79.86
    propulsion_theta2: float = 21.99
    propulsion_theta3: float = 263.8
    propulsion_theta4: float = 0.009243
    rotor_tip_speed_mps: float = 120.0
    epsilon: float = 1e-3
    rng_seed: int = 0

    def validate(self) -> None:
        if self.isd_count < 1 or self.uav_count < 1 or self.slot_count < 1:
            raise ValueError("isd_count, uav_count and slot_count must be >= 1")
        if not 0.0 <= self.arrival_prob <= 1.0:
            raise ValueError("arrival_prob outside [0, 1]")
        for name in ("task_size_mbit", "task_density_cpb", "task_deadline_s",
                     "isd_cpu_ghz", "isd_tx_dbm", "uav_cpu_ghz", "uav_tx_dbm",
                     "uav_cache_slots"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
        if self.service_count < int(self.uav_cache_slots[1]):
            raise ValueError("service_count must cover the largest cache")


def spec_from_json(text: str) -> ScenarioSpec:
    """Parse a ScenarioSpec from JSON, rejecting unknown keys."""
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("scenario config must be a JSON object")
    known = {f.name for f in dataclasses.fields(ScenarioSpec)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown scenario config keys: {', '.join(unknown)}")
    for f in dataclasses.fields(ScenarioSpec):
        if f.name in data and isinstance(data[f.name], list) \
                and f.name not in ("uav_positions_m",):
            data[f.name] = tuple(data[f.name])
    spec = ScenarioSpec(**data)
    spec.validate()
    return spec


def spec_to_json(spec: ScenarioSpec) -> str:
    data = dataclasses.asdict(spec)
    for key, val in data.items():
        if isinstance(val, tuple):
            data[key] = list(val)
    return json.dumps(data, indent=2, sort_keys=True)


def default_uav_grid(count: int, area_m: float) -> np.ndarray:
    """Cell centers of the smallest square grid holding `count` UAVs; for
    four UAVs over a 1000 m square this is the standard quarter-point layout."""
    side = int(np.ceil(np.sqrt(count)))
    cell = area_m / side
    pts = []
    for j in range(side):
        for i in range(side):
            pts.append(((i + 0.5) * cell, (j + 0.5) * cell))
            if len(pts) == count:
                return np.array(pts, dtype=float)
    return np.array(pts, dtype=float)


def generate_scenario(spec: ScenarioSpec) -> Scenario:
    """Build a world from the configuration, deterministic in rng_seed.

    ISD and UAV parameters come from independent substreams so that sweeps
    over one entity family leave the other family's draws untouched.
    """
    spec.validate()
    rng_isd = np.random.default_rng([int(spec.rng_seed), 11])
    rng_uav = np.random.default_rng([int(spec.rng_seed), 13])

    isds = []
    for k in range(spec.isd_count):
        pos = rng_isd.uniform(0.0, spec.area_m, size=2)
        cpu = rng_isd.uniform(*spec.isd_cpu_ghz) * 1e9
        txw = dbm_to_watts(rng_isd.uniform(*spec.isd_tx_dbm))
        isds.append(Isd(id=k, position_m=pos, cpu_hz=cpu, tx_power_w=txw,
                        energy_budget_j=spec.isd_energy_budget_j,
                        capacitance=spec.isd_capacitance))

    if spec.uav_positions_m is not None:
        init_pos = np.asarray(spec.uav_positions_m, dtype=float)
        if init_pos.shape != (spec.uav_count, 2):
            raise ValueError("uav_positions_m must list one 2-D point per UAV")
    else:
        init_pos = default_uav_grid(spec.uav_count, spec.area_m)
    prop = PropulsionParams(spec.propulsion_theta1_w, spec.propulsion_theta2,
                            spec.propulsion_theta3, spec.propulsion_theta4,
                            spec.rotor_tip_speed_mps)
    uavs = []
    for u in range(spec.uav_count):
        cpu = rng_uav.uniform(*spec.uav_cpu_ghz) * 1e9
        txw = dbm_to_watts(rng_uav.uniform(*spec.uav_tx_dbm))
        slots = int(rng_uav.integers(int(spec.uav_cache_slots[0]),
                                     int(spec.uav_cache_slots[1]) + 1))
        uavs.append(Uav(id=u, altitude_m=spec.uav_altitude_m, cpu_hz=cpu,
                        tx_power_w=txw, cache_slots=slots,
                        energy_budget_j=spec.uav_energy_budget_j,
                        joules_per_cycle=spec.uav_joules_per_cycle,
                        initial_position_m=init_pos[u], propulsion=prop))

    mbs_pos = spec.mbs_position_m
    if mbs_pos is None:
        mbs_pos = (spec.area_m / 2.0, spec.area_m / 2.0)
    mbs = Mbs(position_m=np.asarray(mbs_pos, dtype=float),
              height_m=spec.mbs_height_m, cpu_hz=spec.mbs_cpu_ghz * 1e9,
              energy_budget_j=spec.mbs_energy_budget_j,
              joules_per_cycle=spec.mbs_joules_per_cycle)

    radio = RadioConfig(beta0=spec.beta0, noise_w=spec.noise_w,
                        bw_access_hz=spec.bw_access_mhz * 1e6,
                        bw_inter_uav_hz=spec.bw_inter_mhz * 1e6,
                        bw_backhaul_hz=spec.bw_backhaul_mhz * 1e6,
                        backhaul_avg_bps=spec.backhaul_rate_mbps * 1e6,
                        content_size_bits=spec.content_size_mbit * 1e6)
    services = ServiceLibrary(zipf_popularity(spec.service_count,
                                              spec.zipf_exponent))
    scenario = Scenario(isds=isds, uavs=uavs, mbs=mbs, radio=radio,
                        services=services, home=np.zeros(spec.isd_count, int),
                        area_m=spec.area_m, slot_count=spec.slot_count,
                        slot_len_s=spec.slot_len_s, vmax_mps=spec.vmax_mps,
                        dmin_m=spec.dmin_m, epsilon=spec.epsilon,
                        arrival_prob=spec.arrival_prob,
                        task_size_bits=(spec.task_size_mbit[0] * 1e6,
                                        spec.task_size_mbit[1] * 1e6),
                        task_density=tuple(spec.task_density_cpb),
                        task_deadline_s=tuple(spec.task_deadline_s))
    scenario.home[:] = assign_home(scenario)
    return scenario


def assign_home(scenario: Scenario) -> np.ndarray:
    """Partition ISDs by nearest UAV initial position; ties go to the lower
    UAV id. The partition is fixed for the whole horizon."""
    init = np.array([u.initial_position_m for u in scenario.uavs])
    home = np.zeros(scenario.isd_count, dtype=int)
    for k, isd in enumerate(scenario.isds):
        d2 = np.sum((init - isd.position_m) ** 2, axis=1)
        home[k] = int(np.argmin(d2))
    return home


def draw_tasks(scenario: Scenario, slot: int,
               rng: np.random.Generator) -> dict[int, Task]:
    """Sample at most one task per ISD for one slot. Each ISD independently
    generates a task with the scenario's arrival probability; task fields
    are uniform over the configured ranges and the service id follows the
    library popularity."""
    if slot >= scenario.slot_count:
        raise ValueError(f"slot {slot} beyond horizon {scenario.slot_count}")
    tasks: dict[int, Task] = {}
    for k in range(scenario.isd_count):
        if rng.random() >= scenario.arrival_prob:
            continue
        size = rng.uniform(*scenario.task_size_bits)
        dens = rng.uniform(*scenario.task_density)
        dead = rng.uniform(*scenario.task_deadline_s)
        sid = int(rng.choice(scenario.services.count,
                             p=scenario.services.popularity))
        tasks[k] = Task(size_bits=size, service_id=sid, density=dens,
                        deadline_s=dead)
    return tasks


def init_cache(scenario: Scenario) -> np.ndarray:
    """Initial cache contents: each UAV holds its cache_slots most popular
    services, ties broken toward the lower service id."""
    order = np.argsort(-scenario.services.popularity, kind="stable")
    cache = np.zeros((scenario.uav_count, scenario.services.count), dtype=bool)
    for u, uav in enumerate(scenario.uavs):
        cache[u, order[:uav.cache_slots]] = True
    return cache


class CacheOverflowError(RuntimeError):
    """A slot demanded more distinct services at one UAV than it can hold."""


class LruCache:
    """Least-recently-used cache of service ids for one UAV."""

    def __init__(self, capacity: int, initial=()):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._items: OrderedDict[int, None] = OrderedDict()
        for s in initial:
            self._items[int(s)] = None
        if len(self._items) > self.capacity:
            raise ValueError("initial contents exceed capacity")

    def __contains__(self, service: int) -> bool:
        return int(service) in self._items

    def __len__(self) -> int:
        return len(self._items)

    def contents(self) -> tuple[int, ...]:
        return tuple(sorted(self._items))

    def serve(self, service: int) -> bool:
        """Record one use. Returns True when the service had to be filled
        (was absent); the least recently used entry is evicted on overflow."""
        s = int(service)
        if s in self._items:
            self._items.move_to_end(s)
            return False
        if len(self._items) >= self.capacity:
            self._items.popitem(last=False)
        self._items[s] = None
        return True

    def copy(self) -> "LruCache":
        dup = LruCache(self.capacity)
        dup._items = self._items.copy()
        return dup


def popularity_lru(scenario: Scenario) -> list[LruCache]:
    """Slot-zero cache state: popularity-filled, most popular most recent."""
    order = np.argsort(-scenario.services.popularity, kind="stable")
    caches = []
    for uav in scenario.uavs:
        top = list(order[:uav.cache_slots])
        caches.append(LruCache(uav.cache_slots, initial=reversed(top)))
    return caches


def cache_matrix(caches: list[LruCache], service_count: int) -> np.ndarray:
    mat = np.zeros((len(caches), service_count), dtype=bool)
    for u, c in enumerate(caches):
        for s in c.contents():
            mat[u, s] = True
    return mat


def apply_lru(caches: list[LruCache], served: dict[int, list[int]],
              copy: bool = True) -> list[LruCache]:
    """Advance the cache state by one slot.

    served maps UAV index -> service ids it executed this slot, in task
    order. Hits refresh recency; misses insert with LRU eviction. Demanding
    more distinct services than a UAV's capacity cannot be honored and
    raises CacheOverflowError.
    """
    out = [c.copy() for c in caches] if copy else caches
    for u, services in sorted(served.items()):
        if len(set(services)) > out[u].capacity:
            raise CacheOverflowError(
                f"UAV {u} asked to serve {len(set(services))} distinct "
                f"services with capacity {out[u].capacity}")
        hits = [s for s in services if s in out[u]]
        fills = [s for s in services if s not in out[u]]
        for s in hits:
            out[u].serve(s)
        for s in fills:
            out[u].serve(s)
    return out


def served_services(scenario: Scenario, state: SlotState,
                    routes: dict[int, Route]) -> dict[int, list[int]]:
    """Service ids each UAV executes this slot, in ascending task order."""
    served: dict[int, list[int]] = {}
    for k in sorted(routes):
        u = routes[k].executes_on_uav()
        if u is not None:
            served.setdefault(u, []).append(state.tasks[k].service_id)
    return served


def initial_state(scenario: Scenario, caches: list[LruCache]) -> SlotState:
    return SlotState(slot=0, tasks={},
                     prev_cache=cache_matrix(caches, scenario.services.count),
                     uav_positions=np.array([u.initial_position_m
                                             for u in scenario.uavs]))

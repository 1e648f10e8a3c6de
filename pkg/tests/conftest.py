import numpy as np
import pytest

from aerialmec.model import SlotState, Task
from aerialmec.scenario import (ScenarioSpec, cache_matrix, generate_scenario,
                                popularity_lru)


def make_state(scenario, tasks, slot=0, caches=None):
    caches = caches if caches is not None else popularity_lru(scenario)
    return SlotState(slot=slot, tasks=tasks,
                     prev_cache=cache_matrix(caches, scenario.services.count),
                     uav_positions=np.array([u.initial_position_m
                                             for u in scenario.uavs]))


@pytest.fixture
def small_scenario():
    spec = ScenarioSpec(isd_count=6, uav_count=2, slot_count=4,
                        service_count=8, uav_cache_slots=(3, 5), rng_seed=7)
    return generate_scenario(spec)


@pytest.fixture
def default_scenario():
    return generate_scenario(ScenarioSpec())


def fixed_task(size=1e6, service=0, density=500.0, deadline=10.0):
    return Task(size_bits=size, service_id=service, density=density,
                deadline_s=deadline)

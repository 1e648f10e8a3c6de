import math

import numpy as np
import pytest

from aerialmec.model import LOCAL, hover_power
from aerialmec.pipeline import (APPROACHES, PipelineParams, run_horizon,
                                solve_slot)
from aerialmec.scenario import (ScenarioSpec, cache_matrix, draw_tasks,
                                generate_scenario, popularity_lru)
from aerialmec.model import SlotState
from conftest import make_state


PARAMS = PipelineParams()


def small_spec(**kw):
    base = dict(isd_count=6, uav_count=2, slot_count=3, service_count=8,
                uav_cache_slots=(3, 4), rng_seed=11)
    base.update(kw)
    return ScenarioSpec(**base)


class TestPolicies:
    def test_local_policy_is_pure_local(self):
        sc = generate_scenario(small_spec())
        hr = run_horizon(sc, "LC", PARAMS, rng_seed=2)
        for rec in hr.records:
            for tr in rec.tasks:
                assert tr.route_kind == LOCAL
        # objective equals the sum of local compute times
        for rec in hr.records:
            expect = sum(tr.size_bits * tr.density / sc.isds[tr.isd].cpu_hz
                         for tr in rec.tasks)
            assert rec.objective_s == pytest.approx(expect, rel=1e-12)

    def test_all_offload_never_local(self):
        sc = generate_scenario(small_spec())
        hr = run_horizon(sc, "AO", PARAMS, rng_seed=2)
        kinds = [tr.route_kind for rec in hr.records for tr in rec.tasks]
        assert kinds and all(k != LOCAL for k in kinds)

    def test_static_uavs_never_move(self):
        sc = generate_scenario(small_spec())
        hr = run_horizon(sc, "SU", PARAMS, rng_seed=2)
        init = np.array([u.initial_position_m for u in sc.uavs])
        for rec in hr.records:
            assert np.allclose(rec.positions, init)

    def test_equal_split_allocations(self):
        sc = generate_scenario(small_spec())
        caches = popularity_lru(sc)
        rng = np.random.default_rng([2, 29])
        tasks = draw_tasks(sc, 0, rng)
        state = SlotState(0, tasks, cache_matrix(caches, sc.services.count),
                          np.array([u.initial_position_m for u in sc.uavs]))
        sol = solve_slot(sc, state, "EBCC", PARAMS, caches)
        dec = sol.decision
        for u in range(sc.uav_count):
            thetas = [v for k, v in dec.theta_access.items()
                      if int(sc.home[k]) == u]
            if len(thetas) > 1:
                assert max(thetas) == pytest.approx(min(thetas))
            fs = [dec.cpu_alloc_hz[k] for k, r in dec.routes.items()
                  if r.executes_on_uav() == u]
            if len(fs) > 1:
                assert max(fs) == pytest.approx(min(fs))

    def test_unknown_approach_rejected(self):
        sc = generate_scenario(small_spec())
        caches = popularity_lru(sc)
        state = make_state(sc, {})
        with pytest.raises(ValueError):
            solve_slot(sc, state, "P-SCA", PARAMS, caches)


class TestSlotLoop:
    def test_objective_trace_nonincreasing_everywhere(self):
        sc = generate_scenario(small_spec(slot_count=4))
        for ap in ("JC5A", "AO", "SU", "EBCC"):
            hr = run_horizon(sc, ap, PARAMS, rng_seed=5)
            for rec in hr.records:
                tr = rec.objective_trace
                assert all(b <= a + 1e-9 for a, b in zip(tr, tr[1:])), \
                    (ap, rec.slot, tr)

    def test_audited_families_always_clean(self):
        sc = generate_scenario(small_spec(slot_count=3))
        for ap in APPROACHES:
            hr = run_horizon(sc, ap, PARAMS, rng_seed=7)
            for rec in hr.records:
                for name, violation in rec.audit_failures.items():
                    # cache placement, capacity, and route uniqueness hold
                    # unconditionally; deadline/energy misses are recorded
                    assert not name.startswith("cache_requirement")
                    assert not name.startswith("cache_capacity")
                    assert not name.startswith("mode_unique")
                    assert not name.startswith("bw_")
                    assert not name.startswith("cpu_")
                    assert not name.startswith("velocity")
                    assert not name.startswith("separation")

    def test_empty_slot_is_hover_only(self):
        sc = generate_scenario(small_spec(arrival_prob=0.0, slot_count=1))
        hr = run_horizon(sc, "JC5A", PARAMS, rng_seed=1)
        rec = hr.records[0]
        assert rec.tasks == []
        assert rec.objective_s == 0.0
        for u in range(sc.uav_count):
            expect = hover_power(sc.uavs[u].propulsion) * sc.slot_len_s
            assert rec.uav_energy_j[u] == pytest.approx(expect, rel=1e-12)

    def test_deadline_failures_recorded_not_dropped(self):
        # deadlines nobody can meet: every task must still execute and be
        # listed as a failure
        sc = generate_scenario(small_spec(task_deadline_s=(1e-4, 2e-4),
                                          arrival_prob=1.0, slot_count=1))
        hr = run_horizon(sc, "JC5A", PARAMS, rng_seed=3)
        rec = hr.records[0]
        assert len(rec.deadline_failures) == len(rec.tasks)
        for tr in rec.tasks:
            assert math.isfinite(tr.delay_s) and not tr.completed

    def test_local_flip_rescues_feasible_tasks(self):
        # remote paths throttled by a tiny backhaul make remote execution
        # slow; tasks that fit locally must end up local and completed
        sc = generate_scenario(small_spec(bw_access_mhz=0.05,
                                          bw_backhaul_mhz=0.01,
                                          bw_inter_mhz=0.01,
                                          isd_cpu_ghz=(4.0, 4.0),
                                          arrival_prob=1.0, slot_count=1))
        hr = run_horizon(sc, "JC5A", PARAMS, rng_seed=3)
        rec = hr.records[0]
        assert all(tr.completed for tr in rec.tasks)
        assert all(tr.route_kind == LOCAL for tr in rec.tasks)


class TestHorizon:
    def test_determinism_bitwise(self):
        sc = generate_scenario(small_spec(slot_count=3))
        a = run_horizon(sc, "JC5A", PARAMS, rng_seed=9, timing=False)
        b = run_horizon(sc, "JC5A", PARAMS, rng_seed=9, timing=False)
        assert len(a.records) == len(b.records)
        for ra, rb in zip(a.records, b.records):
            assert ra.objective_s == rb.objective_s
            assert np.array_equal(ra.positions, rb.positions)
            assert [t.delay_s for t in ra.tasks] == [t.delay_s for t in rb.tasks]
        assert np.array_equal(a.cum_uav_energy_j, b.cum_uav_energy_j)

    def test_energy_ledger_accounting_identity(self):
        sc = generate_scenario(small_spec(slot_count=4))
        hr = run_horizon(sc, "JC5A", PARAMS, rng_seed=4)
        total_uav = np.zeros(sc.uav_count)
        total_isd = np.zeros(sc.isd_count)
        total_mbs = 0.0
        for rec in hr.records:
            total_uav = total_uav + rec.uav_energy_j
            total_isd = total_isd + rec.isd_energy_j
            total_mbs += rec.mbs_energy_j
        assert np.allclose(total_uav, hr.cum_uav_energy_j, rtol=1e-9, atol=0)
        assert np.allclose(total_isd, hr.cum_isd_energy_j, rtol=1e-9, atol=0)
        assert total_mbs == pytest.approx(hr.cum_mbs_energy_j, rel=1e-9)

    def test_cache_state_evolves_and_stays_bounded(self):
        sc = generate_scenario(small_spec(slot_count=6, uav_cache_slots=(2, 2)))
        hr = run_horizon(sc, "JC5A", PARAMS, rng_seed=6)
        for rec in hr.records:
            fills = [tr for tr in rec.tasks if tr.cache_fill]
            for tr in fills:
                assert tr.exec_uav is not None

    def test_task_stream_independent_of_approach(self):
        sc = generate_scenario(small_spec(slot_count=3))
        a = run_horizon(sc, "LC", PARAMS, rng_seed=8)
        b = run_horizon(sc, "JC5A", PARAMS, rng_seed=8)
        for ra, rb in zip(a.records, b.records):
            assert [t.isd for t in ra.tasks] == [t.isd for t in rb.tasks]
            assert [t.size_bits for t in ra.tasks] == \
                [t.size_bits for t in rb.tasks]

    def test_converged_flag_set_when_loop_settles(self):
        sc = generate_scenario(small_spec(slot_count=3))
        hr = run_horizon(sc, "JC5A", PARAMS, rng_seed=10)
        assert all(rec.converged for rec in hr.records)
        assert all(rec.iterations <= PARAMS.outer_iters for rec in hr.records)

    def test_slot_time_scales_polynomially_in_devices(self):
        # doubling the device population must not blow the median slot
        # solve time up super-quadratically (coarse factor-8 allowance)
        medians = {}
        for k in (10, 20):
            sc = generate_scenario(small_spec(isd_count=k, uav_count=2,
                                              slot_count=4,
                                              service_count=12,
                                              uav_cache_slots=(4, 6)))
            hr = run_horizon(sc, "JC5A", PARAMS, rng_seed=12, timing=True)
            medians[k] = float(np.median([r.solve_ms for r in hr.records]))
        assert medians[20] <= 8.0 * max(medians[10], 1.0)

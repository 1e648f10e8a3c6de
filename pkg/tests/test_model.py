import math

import numpy as np
import pytest

from aerialmec.model import (HOME, ISD_UAV, LOCAL, MBS, PEER, UAV_MBS,
                             UAV_UAV, Decision, PropulsionParams, RadioConfig,
                             Route, audit_constraints, hover_power,
                             isd_energy, link_rate, max_speed_within,
                             mbs_energy, propulsion_power, service_delay,
                             slot_energy, task_delay, total_delay, uav_energy)
from conftest import fixed_task, make_state

CFG = RadioConfig(beta0=1e-5, noise_w=1e-12, bw_access_hz=15e6,
                  bw_inter_uav_hz=10e6, bw_backhaul_hz=5e6,
                  backhaul_avg_bps=1e8, content_size_bits=1e7)


class TestLinkRate:
    def test_isd_uav_reference_case(self):
        # gain 1e-9, SNR 100 -> 15 MHz * log2(101)
        r = link_rate(ISD_UAV, (0, 0), (0, 0), 1.0, CFG, 0.1,
                      rx_height_m=100.0)
        assert r == pytest.approx(15e6 * math.log2(101.0), rel=1e-12)
        assert r == pytest.approx(9.987e7, rel=1e-3)

    def test_uav_mbs_reference_case(self):
        r = link_rate(UAV_MBS, (100, 0), (0, 0), 1.0, CFG, 0.2,
                      tx_height_m=100.0, rx_height_m=25.0)
        assert r == pytest.approx(5e6 * math.log2(129.0), rel=1e-12)

    def test_zero_bandwidth_gives_zero(self):
        for kind, kw in ((ISD_UAV, dict(rx_height_m=100.0)),
                         (UAV_UAV, {}), (UAV_MBS, dict(tx_height_m=100.0))):
            assert link_rate(kind, (0, 0), (5, 5), 0.0, CFG, 0.1, **kw) == 0.0

    def test_linear_in_bandwidth_exactly(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            p1 = rng.uniform(0, 1000, 2)
            p2 = rng.uniform(0, 1000, 2)
            theta = float(rng.uniform(0, 1))
            full = link_rate(ISD_UAV, p1, p2, 1.0, CFG, 0.05,
                             rx_height_m=100.0)
            part = link_rate(ISD_UAV, p1, p2, theta, CFG, 0.05,
                             rx_height_m=100.0)
            assert part == theta * full

    def test_monotone_in_distance(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            base = rng.uniform(0, 500, 2)
            d1, d2 = sorted(rng.uniform(1.0, 800.0, 2))
            if d2 - d1 < 1e-6:
                continue
            r_near = link_rate(ISD_UAV, base, base + (d1, 0.0), 1.0, CFG,
                               0.05, rx_height_m=100.0)
            r_far = link_rate(ISD_UAV, base, base + (d2, 0.0), 1.0, CFG,
                              0.05, rx_height_m=100.0)
            assert r_far < r_near

    def test_coincident_uav_pair_rejected(self):
        with pytest.raises(ValueError):
            link_rate(UAV_UAV, (10, 10), (10, 10), 1.0, CFG, 0.2)

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValueError):
            link_rate(ISD_UAV, (0, 0), (1, 1), 1.5, CFG, 0.1,
                      rx_height_m=100.0)
        with pytest.raises(ValueError):
            link_rate(ISD_UAV, (0, 0), (math.nan, 1), 0.5, CFG, 0.1,
                      rx_height_m=100.0)


class TestServiceDelay:
    def test_local(self):
        t = fixed_task(size=1e6, density=500.0)
        assert service_delay(t, LOCAL, [], 1e9, False, CFG) == 0.5

    def test_empty_task_zero(self):
        t = fixed_task(size=0.0)
        for kind, hops in ((LOCAL, []), (HOME, [1e8]), (MBS, [1e8, 1e8])):
            assert service_delay(t, kind, hops, 1e9, False, CFG) == 0.0

    def test_home_with_fill(self):
        t = fixed_task(size=1e6, density=500.0)
        got = service_delay(t, HOME, [1e8], 5e9, True, CFG)
        assert got == pytest.approx(0.01 + 0.1 + 0.1, rel=1e-12)

    def test_zero_rate_is_infeasible_marker(self):
        t = fixed_task()
        assert math.isinf(service_delay(t, PEER, [1e8, 0.0], 1e9, False, CFG))

    def test_monotone_in_rate_and_cpu(self):
        rng = np.random.default_rng(5)
        t = fixed_task(size=2e6, density=400.0)
        for _ in range(100):
            r1, r2 = sorted(rng.uniform(1e6, 1e9, 2))
            f1, f2 = sorted(rng.uniform(1e8, 1e10, 2))
            slow = service_delay(t, HOME, [r1], f1, False, CFG)
            fast = service_delay(t, HOME, [r2], f2, False, CFG)
            assert fast <= slow


class TestPropulsion:
    def test_hover_identity(self):
        p = PropulsionParams()
        expect = p.theta1_w + p.theta2 * p.theta3 ** 0.25
        assert propulsion_power(0.0, p) == pytest.approx(expect, rel=1e-9)
        assert hover_power(p) == pytest.approx(168.48, abs=0.01)

    def test_cruise_value_direct_evaluation(self):
        p = PropulsionParams()
        v = 20.0
        expect = (79.86 * (1 + 1200.0 / 14400.0)
                  + 21.99 * math.sqrt(math.sqrt(263.8 + 160000.0 / 4.0) - 200.0)
                  + 0.009243 * 8000.0)
        assert propulsion_power(v, p) == pytest.approx(expect, rel=1e-12)

    def test_negative_speed_rejected(self):
        with pytest.raises(ValueError):
            propulsion_power(-1.0, PropulsionParams())

    def test_positive_everywhere(self):
        p = PropulsionParams()
        for v in np.linspace(0.0, 70.0, 40):
            assert propulsion_power(float(v), p) > 0.0

    def test_max_speed_within_budget(self):
        p = PropulsionParams()
        assert max_speed_within(2000.0, p, 50.0) == 50.0
        assert max_speed_within(100.0, p, 50.0) == 0.0   # below hover power
        v = max_speed_within(495.0, p, 50.0)
        assert 0.0 < v < 50.0
        assert propulsion_power(v, p) <= 495.0 + 1e-6


def _one_task_decision(scenario, state, k, route, theta=1.0, cpu=None):
    U, S = scenario.uav_count, scenario.services.count
    cache = state.prev_cache.copy()
    u = route.executes_on_uav()
    if u is not None:
        cache[u, state.tasks[k].service_id] = True
    dec = Decision(routes={k: route}, cache=cache,
                   theta_access={k: theta}, theta_inter={}, theta_mbs={},
                   cpu_alloc_hz={}, positions=state.uav_positions.copy())
    if route.kind == PEER:
        dec.theta_inter[(int(scenario.home[k]), int(route.target))] = theta
    if route.kind == MBS:
        dec.theta_mbs[int(scenario.home[k])] = theta
    if route.kind != LOCAL:
        dec.cpu_alloc_hz[k] = cpu if cpu is not None else 1e9
    return dec


class TestEnergy:
    def test_isd_local_compute(self, small_scenario):
        sc = small_scenario
        state = make_state(sc, {0: fixed_task(size=1e6, density=500.0)})
        dec = _one_task_decision(sc, state, 0, Route(LOCAL))
        # capacitance 1e-27, F^2 * d * c with the drawn F
        f = sc.isds[0].cpu_hz
        expect = 1e-27 * f * f * 1e6 * 500.0
        got = isd_energy(sc, state, dec, 0)
        assert got.compute_j == pytest.approx(expect, rel=1e-12)
        assert got.transmit_j == 0.0

    def test_idle_uav_pays_exactly_hover(self, small_scenario):
        sc = small_scenario
        state = make_state(sc, {})
        dec = Decision(routes={}, cache=state.prev_cache.copy(),
                       theta_access={}, theta_inter={}, theta_mbs={},
                       cpu_alloc_hz={}, positions=state.uav_positions.copy())
        e = uav_energy(sc, state, dec, 0)
        assert e.total_j == pytest.approx(
            hover_power(sc.uavs[0].propulsion) * sc.slot_len_s, rel=1e-12)
        assert e.compute_j == 0.0 and e.transmit_j == 0.0

    def test_mbs_compute(self, small_scenario):
        sc = small_scenario
        state = make_state(sc, {0: fixed_task(size=1e6, density=500.0)})
        dec = _one_task_decision(sc, state, 0, Route(MBS), cpu=1e9)
        expect = sc.mbs.joules_per_cycle * 1e6 * 500.0
        assert mbs_energy(sc, state, dec).compute_j == pytest.approx(expect)
        assert slot_energy(sc, state, dec, "mbs").total_j == pytest.approx(expect)

    def test_breakdown_sums_to_total(self, small_scenario):
        sc = small_scenario
        state = make_state(sc, {0: fixed_task(), 1: fixed_task(service=1)})
        dec = _one_task_decision(sc, state, 0, Route(MBS), cpu=1e9)
        dec.routes[1] = Route(LOCAL)
        for kind, idx in (("isd", 0), ("isd", 1), ("uav", 0), ("uav", 1),
                          ("mbs", None)):
            e = slot_energy(sc, state, dec, kind, idx)
            assert e.total_j == e.compute_j + e.transmit_j + e.propulsion_j


class TestAudit:
    def test_vacuous_slot_passes(self, small_scenario):
        sc = small_scenario
        state = make_state(sc, {})
        dec = Decision(routes={}, cache=state.prev_cache.copy(),
                       theta_access={}, theta_inter={}, theta_mbs={},
                       cpu_alloc_hz={}, positions=state.uav_positions.copy())
        rep = audit_constraints(sc, state, dec)
        assert rep.passed
        assert all(c.violation == 0.0 for c in rep.checks)

    def test_separation_violation_squared_form(self, small_scenario):
        sc = small_scenario
        state = make_state(sc, {})
        dec = Decision(routes={}, cache=state.prev_cache.copy(),
                       theta_access={}, theta_inter={}, theta_mbs={},
                       cpu_alloc_hz={}, positions=state.uav_positions.copy())
        dec.positions[1] = dec.positions[0] + np.array([5.0, 0.0])
        rep = audit_constraints(sc, state, dec)
        assert rep.violation("separation") == pytest.approx(75.0)  # 100 - 25

    def test_cache_capacity_overflow_counts(self, small_scenario):
        sc = small_scenario
        state = make_state(sc, {})
        dec = Decision(routes={}, cache=state.prev_cache.copy(),
                       theta_access={}, theta_inter={}, theta_mbs={},
                       cpu_alloc_hz={}, positions=state.uav_positions.copy())
        dec.cache[0, :] = False
        dec.cache[0, :sc.uavs[0].cache_slots + 1] = True
        rep = audit_constraints(sc, state, dec)
        assert rep.violation("cache_capacity[0]") == pytest.approx(1.0)

    def test_missing_service_flagged(self, small_scenario):
        sc = small_scenario
        state = make_state(sc, {0: fixed_task(service=sc.services.count - 1)})
        dec = _one_task_decision(sc, state, 0, Route(HOME, int(sc.home[0])),
                                 cpu=5e9)
        dec.cache[int(sc.home[0]), sc.services.count - 1] = False
        rep = audit_constraints(sc, state, dec)
        assert rep.violation("cache_requirement") == 1.0

    def test_report_self_consistency(self, small_scenario):
        sc = small_scenario
        state = make_state(sc, {0: fixed_task(deadline=1e-6)})
        dec = _one_task_decision(sc, state, 0, Route(LOCAL))
        rep = audit_constraints(sc, state, dec)
        assert rep.passed == all(c.violation <= 1e-9 for c in rep.checks)
        assert not rep.passed   # the deadline cannot be met

    def test_dimension_mismatch_rejected(self, small_scenario):
        sc = small_scenario
        state = make_state(sc, {})
        dec = Decision(routes={}, cache=state.prev_cache[:, :3].copy(),
                       theta_access={}, theta_inter={}, theta_mbs={},
                       cpu_alloc_hz={}, positions=state.uav_positions.copy())
        with pytest.raises(ValueError):
            audit_constraints(sc, state, dec)

    def test_energy_totals_match_itemization(self, small_scenario):
        sc = small_scenario
        state = make_state(sc, {0: fixed_task(), 2: fixed_task(service=2)})
        dec = _one_task_decision(sc, state, 0, Route(HOME, int(sc.home[0])),
                                 theta=0.5, cpu=5e9)
        dec.routes[2] = Route(LOCAL)
        total, per = total_delay(sc, state, dec)
        assert total == pytest.approx(sum(per.values()), rel=1e-12)
        assert per[0] == pytest.approx(task_delay(sc, state, dec, 0))

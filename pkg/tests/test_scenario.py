import json

import numpy as np
import pytest

from aerialmec.scenario import (CacheOverflowError, LruCache, ScenarioSpec,
                                apply_lru, assign_home, cache_matrix,
                                dbm_to_watts, default_uav_grid, draw_tasks,
                                generate_scenario, init_cache, popularity_lru,
                                spec_from_json, spec_to_json, zipf_popularity)
from oracles import ReferenceLru


class TestGeneration:
    def test_default_cardinalities_match_reference_setup(self):
        sc = generate_scenario(ScenarioSpec())
        assert sc.isd_count == 30
        assert sc.uav_count == 4
        assert sc.slot_count == 50
        assert sc.slot_len_s == 1.0
        assert sc.area_m == 1000.0
        got = [list(u.initial_position_m) for u in sc.uavs]
        assert got == [[250.0, 250.0], [750.0, 250.0],
                       [250.0, 750.0], [750.0, 750.0]]

    def test_minimal_scenario(self):
        sc = generate_scenario(ScenarioSpec(isd_count=1, uav_count=1,
                                            uav_cache_slots=(3, 3),
                                            service_count=5))
        assert sc.isd_count == 1 and sc.uav_count == 1
        assert int(sc.home[0]) == 0

    def test_determinism_same_seed(self):
        a = generate_scenario(ScenarioSpec(rng_seed=42))
        b = generate_scenario(ScenarioSpec(rng_seed=42))
        for ia, ib in zip(a.isds, b.isds):
            assert np.array_equal(ia.position_m, ib.position_m)
            assert ia.cpu_hz == ib.cpu_hz and ia.tx_power_w == ib.tx_power_w
        for ua, ub in zip(a.uavs, b.uavs):
            assert ua.cpu_hz == ub.cpu_hz
            assert ua.cache_slots == ub.cache_slots
        c = generate_scenario(ScenarioSpec(rng_seed=43))
        assert not np.array_equal(a.isds[0].position_m, c.isds[0].position_m)

    def test_parameters_within_table_ranges(self):
        sc = generate_scenario(ScenarioSpec(rng_seed=5))
        for isd in sc.isds:
            assert 0.5e9 <= isd.cpu_hz <= 1e9
            assert dbm_to_watts(10) <= isd.tx_power_w <= dbm_to_watts(20)
            assert np.all((0 <= isd.position_m) & (isd.position_m <= 1000))
        for uav in sc.uavs:
            assert 15e9 <= uav.cpu_hz <= 20e9
            assert dbm_to_watts(20) <= uav.tx_power_w <= dbm_to_watts(23)
            assert 5 <= uav.cache_slots <= 10

    def test_dbm_conversion(self):
        assert dbm_to_watts(30.0) == pytest.approx(1.0)
        assert dbm_to_watts(10.0) == pytest.approx(0.01)
        assert dbm_to_watts(23.0) == pytest.approx(0.19952623, rel=1e-6)

    def test_grid_layout_other_counts(self):
        g = default_uav_grid(2, 1000.0)
        assert g.shape == (2, 2)
        g9 = default_uav_grid(9, 900.0)
        assert g9.shape == (9, 2)
        assert list(g9[0]) == [150.0, 150.0]


class TestHomeAssignment:
    def test_corner_goes_to_nearest(self):
        spec = ScenarioSpec(isd_count=1, rng_seed=0)
        sc = generate_scenario(spec)
        # place the lone ISD at the origin: nearest initial point is UAV 0
        object.__setattr__(sc.isds[0], "position_m", np.array([0.0, 0.0]))
        assert int(assign_home(sc)[0]) == 0

    def test_tie_prefers_lower_id(self):
        sc = generate_scenario(ScenarioSpec(isd_count=1, rng_seed=0))
        object.__setattr__(sc.isds[0], "position_m", np.array([500.0, 250.0]))
        assert int(assign_home(sc)[0]) == 0    # equidistant from UAV 0 and 1

    def test_partition_covers_everything(self):
        sc = generate_scenario(ScenarioSpec(rng_seed=9))
        assert sc.home.shape == (30,)
        assert np.all((0 <= sc.home) & (sc.home < 4))


class TestTasks:
    def test_no_arrivals(self):
        sc = generate_scenario(ScenarioSpec(arrival_prob=0.0))
        rng = np.random.default_rng(0)
        assert draw_tasks(sc, 0, rng) == {}

    def test_all_arrive(self):
        sc = generate_scenario(ScenarioSpec(arrival_prob=1.0))
        rng = np.random.default_rng(0)
        assert len(draw_tasks(sc, 0, rng)) == 30

    def test_fields_within_ranges(self):
        sc = generate_scenario(ScenarioSpec(arrival_prob=1.0))
        rng = np.random.default_rng(1)
        for task in draw_tasks(sc, 0, rng).values():
            assert 0.5e6 <= task.size_bits <= 3e6
            assert 300.0 <= task.density <= 600.0
            assert 0.5 <= task.deadline_s <= 1.0
            assert 0 <= task.service_id < 20

    def test_beyond_horizon_rejected(self):
        sc = generate_scenario(ScenarioSpec(slot_count=2))
        with pytest.raises(ValueError):
            draw_tasks(sc, 2, np.random.default_rng(0))

    def test_service_draw_matches_popularity(self):
        sc = generate_scenario(ScenarioSpec(arrival_prob=1.0, rng_seed=3))
        rng = np.random.default_rng(123)
        counts = np.zeros(sc.services.count)
        n = 0
        while n < 100000:
            for t in draw_tasks(sc, 0, rng).values():
                counts[t.service_id] += 1
                n += 1
        p = sc.services.popularity
        expect = n * p
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - expect) <= 3.0 * sigma + 1.0)


class TestCache:
    def test_zipf_is_normalized_and_decreasing(self):
        p = zipf_popularity(20, 0.8)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(p) < 0)

    def test_init_cache_top_popular(self):
        sc = generate_scenario(ScenarioSpec(uav_cache_slots=(5, 5)))
        cache = init_cache(sc)
        # zipf popularity is strictly decreasing: top-5 are services 0..4
        for u in range(sc.uav_count):
            assert list(np.flatnonzero(cache[u])) == [0, 1, 2, 3, 4]

    def test_full_and_single_slot_caches(self):
        sc = generate_scenario(ScenarioSpec(service_count=6,
                                            uav_cache_slots=(6, 6)))
        assert np.all(init_cache(sc))
        sc1 = generate_scenario(ScenarioSpec(uav_cache_slots=(1, 1)))
        cache = init_cache(sc1)
        assert np.array_equal(np.flatnonzero(cache[0]), [0])

    def test_textbook_lru_eviction(self):
        c = LruCache(2, initial=[0, 1])    # 1 most recent
        assert c.serve(0) is False         # hit refreshes 0
        assert c.serve(3) is True          # inserts 3, evicts 1 (LRU)
        assert c.contents() == (0, 3)

    def test_untouched_cache_unchanged(self):
        caches = [LruCache(3, initial=[4, 5, 6])]
        out = apply_lru(caches, {})
        assert out[0].contents() == caches[0].contents()

    def test_capacity_never_exceeded(self):
        rng = np.random.default_rng(2)
        caches = [LruCache(4, initial=[0, 1, 2, 3])]
        for _ in range(200):
            served = {0: list(rng.integers(0, 12, size=rng.integers(0, 5)))}
            if len(set(served[0])) > 4:
                continue
            caches = apply_lru(caches, served)
            assert len(caches[0]) <= 4

    def test_overflow_demand_raises(self):
        caches = [LruCache(2, initial=[0, 1])]
        with pytest.raises(CacheOverflowError):
            apply_lru(caches, {0: [3, 4, 5]})

    def test_long_trace_matches_reference(self):
        rng = np.random.default_rng(77)
        mine = LruCache(5, initial=[0, 1, 2, 3, 4])
        ref = ReferenceLru(5, initial=[0, 1, 2, 3, 4])
        for _ in range(1000):
            s = int(rng.integers(0, 15))
            assert mine.serve(s) == ref.serve(s)
            assert mine.contents() == ref.contents()

    def test_popularity_lru_matrix(self):
        sc = generate_scenario(ScenarioSpec(uav_cache_slots=(5, 5)))
        caches = popularity_lru(sc)
        mat = cache_matrix(caches, sc.services.count)
        assert np.array_equal(mat, init_cache(sc))


class TestSpecJson:
    def test_round_trip(self):
        spec = ScenarioSpec(isd_count=12, uav_cpu_ghz=(10.0, 12.0),
                            rng_seed=99)
        again = spec_from_json(spec_to_json(spec))
        assert again == spec

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown scenario config"):
            spec_from_json(json.dumps({"isd_count": 5, "bogus_knob": 1}))

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError):
            spec_from_json(json.dumps({"isd_count": 0}))
        with pytest.raises(ValueError):
            spec_from_json(json.dumps({"arrival_prob": 1.5}))

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import build_cluster
from dcsim.detection import DetectorConfig, is_overloaded
from dcsim.placement import (
    MigrationPlan,
    consolidate_underloaded,
    pabfd_place,
    resolve_overload,
)
from dcsim.selection import SelectorConfig

THR = DetectorConfig("thr", 0.9)
MMT = SelectorConfig("mmt")


class TestPabfd:
    def test_prefers_smaller_power_increase(self):
        # VM 0 sits on host 2; hosts 0 (2000) and 1 (3000) are empty but active
        c = build_cluster([2000, 3000, 1000], [(500, 1024)], [2], active=[0, 1])
        dp = [75 * 500 / 2000, 75 * 500 / 3000]
        assert dp == [18.75, 12.5]
        assert pabfd_place(c, [0]).mapping == {0: 1}

    def test_ram_full_unplaced(self):
        c = build_cluster([3000, 3000], [(100, 1024), (100, 1024)], [0, 1], host_ram=1024)
        placed = pabfd_place(c, [0])
        assert placed.unplaced == [0] and not placed.mapping

    def test_tie_lower_id(self):
        c = build_cluster([2000, 2000, 2000], [(500, 1024)], [2], active=[0, 1])
        assert pabfd_place(c, [0]).mapping == {0: 0}

    def test_wakes_lowest_sleeping(self):
        c = build_cluster([1000, 1000, 1000, 1000], [(900, 1024), (500, 1024)], [0, 1])
        placed = pabfd_place(c, [1], exclude=[False, False, False, False])
        assert placed.mapping == {1: 2} and placed.woken == [2]
        assert not c.active[2]  # the input snapshot is untouched

    def test_no_wake(self):
        c = build_cluster([1000, 1000, 1000], [(900, 1024), (500, 1024)], [0, 1])
        placed = pabfd_place(c, [1], allow_wake=False)
        assert placed.unplaced == [1]

    def test_decreasing_order(self):
        # increasing order would give {2: 0, 1: 0, 0: 1}
        c = build_cluster([1000, 1000, 3000], [(600, 1024), (500, 1024), (400, 1024)], [2, 2, 2],
                          active=[0, 1])
        assert pabfd_place(c, [2, 0, 1]).mapping == {0: 0, 1: 1, 2: 0}

    def test_headroom(self):
        c = build_cluster([1000, 1000], [(850, 1024), (100, 1024)], [0, 1])
        assert pabfd_place(c, [1], headroom=0.9, allow_wake=False).unplaced == [1]
        assert pabfd_place(c, [1], headroom=1.0).mapping == {1: 0}

    @settings(max_examples=150, deadline=None)
    @given(st.data())
    def test_matches_exhaustive(self, data):
        n_hosts = data.draw(st.integers(1, 4))
        n_vms = data.draw(st.integers(1, 6))
        mips = data.draw(st.lists(st.sampled_from([1000, 2000, 3000]), min_size=n_hosts,
                                  max_size=n_hosts))
        vms = [(data.draw(st.sampled_from([0, 125, 250, 400, 500, 750])),
                data.draw(st.sampled_from([512, 1024, 2048]))) for _ in range(n_vms)]
        where = [data.draw(st.integers(0, n_hosts - 1)) for _ in range(n_vms)]
        c = build_cluster(mips, vms, where, host_ram=4096, active=range(n_hosts))
        movers = sorted(data.draw(st.lists(st.integers(0, n_vms - 1), min_size=1, unique=True)))
        headroom = data.draw(st.sampled_from([0.8, 0.9, 1.0]))
        placed = pabfd_place(c, movers, headroom, allow_wake=False)
        got = oracles.pabfd_exhaustive(
            mips, [4096] * n_hosts, c.demand, c.ram_used, [True] * n_hosts,
            [vms[v][0] for v in movers], [vms[v][1] for v in movers], [where[v] for v in movers],
            headroom)
        expect = {movers[i]: h for i, h in got.items()}
        assert placed.mapping == {v: h for v, h in expect.items() if h is not None}
        assert sorted(placed.unplaced) == sorted(v for v, h in expect.items() if h is None)
        after = c.demand.copy()
        for v, h in placed.mapping.items():
            after[h] += vms[v][0]
        for h in set(placed.mapping.values()):
            assert after[h] / mips[h] <= headroom + 1e-12


class TestResolveOverload:
    def test_single_eviction(self):
        c = build_cluster([1000], [(600, 1024), (500, 1024)], [0, 0])
        evicted = resolve_overload(c, 0, THR, MMT, [1.0])
        assert len(evicted) == 1

    def test_precondition(self):
        c = build_cluster([1000], [(300, 1024)], [0])
        with pytest.raises(ValueError):
            resolve_overload(c, 0, THR, MMT, [0.3])

    def test_terminates_on_empty(self):
        c = build_cluster([1000], [(1000, 1024)], [0])
        assert resolve_overload(c, 0, DetectorConfig("thr", 0.1), MMT, [1.0]) == [0]

    def test_mc_uses_histories(self):
        rng = np.random.default_rng(0)
        x = rng.random(12)
        vm_hist = np.vstack([rng.random(12), x, x])
        c = build_cluster([1000], [(400, 1024), (400, 1024), (400, 1024)], [0, 0, 0])
        evicted = resolve_overload(c, 0, THR, SelectorConfig("mc"), [1.0], vm_history=vm_hist)
        assert evicted == [1]

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(50, 600), min_size=1, max_size=8),
           st.sampled_from(["thr:0.8", "mad:2.5", "iqr:1.5", "lr:1.2", "lrr:1.2"]),
           st.lists(st.floats(0, 1), min_size=11, max_size=11),
           st.sampled_from(["mmt", "rc"]))
    def test_minimal_prefix(self, demands, policy, past, sel):
        det = DetectorConfig.parse(policy)
        c = build_cluster([2000], [(d, 1024) for d in demands], [0] * len(demands))
        hist = past + [min(1.0, sum(demands) / 2000)]
        if not is_overloaded(det, hist):
            return
        evicted = resolve_overload(c, 0, det, SelectorConfig(sel), hist,
                                   rng=np.random.default_rng(1))
        assert len(set(evicted)) == len(evicted) and set(evicted) <= set(range(len(demands)))
        left = sum(demands) - sum(demands[v] for v in evicted)
        after = hist[:-1] + [left / 2000 if len(evicted) < len(demands) else 0.0]
        before = hist[:-1] + [(left + demands[evicted[-1]]) / 2000]
        assert not is_overloaded(det, after) or len(evicted) == len(demands)
        assert is_overloaded(det, [min(1.0, x) for x in before])


class TestConsolidate:
    def test_three_hosts(self):
        c = build_cluster([1000] * 3, [(100, 1024), (300, 1024), (400, 1024)], [0, 1, 2])
        plan = consolidate_underloaded(c)
        assert plan.hosts_to_sleep[0] == 0
        # equal power curves tie on dP, so the lower id receives
        assert plan.moves[0] == (0, 0, 1)
        plan.validate()
        c.audit()
        assert not c.active[0]

    def test_single_host_kept(self):
        c = build_cluster([1000], [(100, 1024)], [0])
        plan = consolidate_underloaded(c)
        assert plan.hosts_to_sleep == [] and c.active[0]

    def test_guard_keeps_host(self):
        c = build_cluster([1000, 1000], [(500, 1024), (600, 1024)], [0, 1])
        plan = consolidate_underloaded(c)
        assert plan.moves == [] and plan.hosts_to_sleep == []
        assert c.active.all()

    def test_never_wakes(self):
        c = build_cluster([1000, 1000, 1000], [(500, 1024), (600, 1024)], [0, 1])
        consolidate_underloaded(c)
        assert not c.active[2]

    def test_empty_host_slept(self):
        c = build_cluster([1000, 1000], [(500, 1024)], [0], active=[1])
        plan = consolidate_underloaded(c)
        assert plan.hosts_to_sleep == [1]

    def test_excluded_hosts_untouched(self):
        c = build_cluster([1000] * 3, [(100, 1024), (300, 1024), (400, 1024)], [0, 1, 2])
        plan = consolidate_underloaded(c, exclude=[True, False, False])
        assert all(src != 0 and dst != 0 for _, src, dst in plan.moves)
        assert 0 not in plan.hosts_to_sleep

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 900), min_size=1, max_size=10), st.integers(1, 6), st.data())
    def test_invariants(self, demands, n_hosts, data):
        where = [data.draw(st.integers(0, n_hosts - 1)) for _ in demands]
        c = build_cluster([1000] * n_hosts, [(d, 1024) for d in demands], where,
                          active=range(n_hosts))
        c.set_demands(c.vm_demand)
        before = int(c.active.sum())
        plan = consolidate_underloaded(c)
        plan.validate()
        c.audit()
        assert int(c.active.sum()) <= before
        for _, _, dst in plan.moves:
            assert c.ratio(dst) <= 1.0 + 1e-12


def test_plan_validate_rejects():
    with pytest.raises(AssertionError):
        MigrationPlan(moves=[(0, 1, 1)]).validate()
    with pytest.raises(AssertionError):
        MigrationPlan(moves=[(0, 1, 2)], hosts_to_sleep=[2]).validate()

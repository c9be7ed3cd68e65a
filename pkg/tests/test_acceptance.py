"""The ten acceptance criteria, one test each."""

import os
import time

import numpy as np
import pytest

import oracles
from conftest import build_cluster, record_acceptance
from dcsim.cli import main
from dcsim.detection import (
    DetectorConfig,
    iqr,
    loess_predict,
    mad,
    robust_loess_predict,
)
from dcsim.engine import Mode, SimulationConfig, run
from dcsim.experiment import (
    FIGURES,
    DaySpec,
    ExperimentGrid,
    emit_summaries,
    execute,
    expand_grid,
    medians,
    run_experiment,
)
from dcsim.model import DataCenterConfig
from dcsim.placement import pabfd_place
from dcsim.selection import SelectorConfig, select_mc
from dcsim.workload import generate_synthetic


def test_1_baseline_zeros():
    rng = np.random.default_rng(1)
    bad = []
    for trial in range(6):
        n_vms = int(rng.integers(5, 40))
        d = DataCenterConfig(n_hosts=int(rng.integers(n_vms // 2, n_vms)) + 1, n_vms=n_vms,
                             rng_seed=trial)
        util = rng.random((n_vms, 48)) ** float(rng.uniform(0.3, 3))
        for mode in ("npa", "dvfs"):
            res = run(SimulationConfig(d, mode=mode), util)
            if (res.migration_count, res.slav, res.esv) != (0, 0.0, 0.0):
                bad.append((trial, mode))
    ok = record_acceptance(1, not bad, f"NPA/DVFS migrations=slav=esv=0 on 12 runs; violations {bad}")
    assert ok


def test_2_npa_closed_form():
    d = DataCenterConfig(n_hosts=10, n_vms=10)
    t0 = time.perf_counter()
    res = run(SimulationConfig(d, mode="npa"), generate_synthetic(0, 10, 288, 0.3))
    elapsed = time.perf_counter() - t0
    rel = abs(res.energy_kwh - 60.0) / 60.0
    ok = record_acceptance(2, rel <= 1e-9 and elapsed < 1.0,
                           f"NPA energy {res.energy_kwh!r} kWh (rel err {rel:.1e}), {elapsed:.3f} s")
    assert ok


def test_3_dvfs_closed_form():
    d = DataCenterConfig(n_hosts=1, n_vms=1, host_mips_choices=(2000,), vm_mips_choices=(1000,))
    res = run(SimulationConfig(d, mode="dvfs"), np.ones((1, 288)))
    rel = abs(res.energy_kwh - 5.1) / 5.1
    ok = record_acceptance(3, rel <= 1e-9, f"DVFS energy {res.energy_kwh!r} kWh (rel err {rel:.1e})")
    assert ok


def test_4_dominance():
    grid = ExperimentGrid(
        days=(DaySpec.parse("synthetic:0"),), baselines=("npa", "dvfs"),
        dc=DataCenterConfig(n_hosts=50, n_vms=100),
    )
    t0 = time.perf_counter()
    records = run_experiment(grid, jobs=1)
    elapsed = time.perf_counter() - t0
    failed = [r["key"]["combo"] for r in records if r["status"] != "ok"]
    med = medians(records)
    npa, dvfs = med["npa"]["energy_kwh"], med["dvfs"]["energy_kwh"]
    combos = {k: v["energy_kwh"] for k, v in med.items() if k not in ("npa", "dvfs")}
    losers = sorted(k for k, e in combos.items() if not e < dvfs)
    ok = (not failed and len(combos) == 81 and not losers and dvfs < npa and elapsed < 120)
    record_acceptance(
        4, ok,
        f"81 combos: max consolidation {max(combos.values()):.3f} < DVFS {dvfs:.3f} < NPA {npa:.3f} kWh; "
        f"failed {failed}, not below DVFS {losers}; sweep {elapsed:.1f} s",
    )
    assert ok


def test_5_statistics_oracles():
    rng = np.random.default_rng(5)
    worst = {}
    for name, ours, ref, n in [
        ("mad", mad, oracles.mad, 12),
        ("iqr", iqr, oracles.iqr, 12),
        ("loess", loess_predict, oracles.loess, 10),
        ("robust_loess", robust_loess_predict, oracles.robust_loess, 10),
    ]:
        err = 0.0
        for i in range(1000):
            w = rng.random(n)
            if i % 10 == 0:  # quantized windows exercise ties and zero spreads
                w = np.round(w * 4) / 4
            err = max(err, abs(ours(w) - ref(list(w))))
        worst[name] = err
    affine = 0.0
    for _ in range(100):
        a, b, n = rng.uniform(-1, 1), rng.uniform(-0.2, 0.2), int(rng.integers(2, 30))
        h = a + b * np.arange(1, n + 1)
        affine = max(affine, abs(loess_predict(h) - max(0.0, a + b * (n + 1))))
    ok = max(worst.values()) <= 1e-9 and affine <= 1e-9
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record_acceptance(5, ok, f"max |diff| over 1000 windows: {detail}; affine exact-fit {affine:.1e}")
    assert ok


def _mc_instance(rng):
    k = int(rng.integers(2, 6))
    h = rng.random((k, 12))
    kind = rng.integers(4)
    if kind == 1:  # duplicated row
        h[rng.integers(k)] = h[0]
    elif kind == 2:  # constant row
        h[rng.integers(k)] = rng.random()
    elif kind == 3:  # one row an affine image of another
        h[-1] = 0.3 * h[0] + 0.1
    return h


def test_6_mc_oracle():
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(200):
        h = _mc_instance(rng)
        ids = list(range(h.shape[0]))
        want = oracles.argmax_lowest(oracles.r2_brute(h), ids)
        mismatches += select_mc(ids, h, [1024] * len(ids)) != want
    ok = record_acceptance(6, mismatches == 0, f"MC vs brute-force R^2 argmax: {200 - mismatches}/200 agree")
    assert ok


def test_7_pabfd_oracle():
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(200):
        n_hosts, n_vms = int(rng.integers(1, 5)), int(rng.integers(1, 7))
        mips = list(rng.choice([1000, 2000, 3000], n_hosts))
        vms = [(float(rng.choice([0, 100, 250, 500, 750, 1000])), float(rng.choice([512, 1024, 2048])))
               for _ in range(n_vms)]
        where = list(rng.integers(0, n_hosts, n_vms))
        active = [h for h in range(n_hosts) if rng.random() < 0.8]
        c = build_cluster(mips, vms, where, host_ram=4096, active=active)
        movers = sorted(rng.choice(n_vms, int(rng.integers(1, n_vms + 1)), replace=False).tolist())
        headroom = float(rng.choice([0.8, 0.9, 1.0]))
        placed = pabfd_place(c, movers, headroom, allow_wake=False)
        got = oracles.pabfd_exhaustive(
            mips, [4096] * n_hosts, c.demand, c.ram_used, list(c.active),
            [vms[v][0] for v in movers], [vms[v][1] for v in movers], [where[v] for v in movers],
            headroom,
        )
        want = {movers[i]: h for i, h in got.items() if h is not None}
        mismatches += placed.mapping != want
    ok = record_acceptance(7, mismatches == 0, f"PABFD vs exhaustive min-dP: {200 - mismatches}/200 agree")
    assert ok


def test_8_metric_bounds():
    rng = np.random.default_rng(8)
    kinds = [("thr", 0.8), ("mad", 2.5), ("iqr", 1.5), ("lr", 1.2), ("lrr", 1.2)]
    problems = []
    for i in range(100):
        kind, param = kinds[i % 5]
        n_vms = int(rng.integers(4, 30))
        # two 1000-MIPS VMs per 2000-MIPS host keeps every instance placeable
        d = DataCenterConfig(n_hosts=int(rng.integers(n_vms // 2 + 1, n_vms)), n_vms=n_vms, rng_seed=i,
                             host_mips_choices=(2000, 3000), sleep_watts=float(rng.choice([0.0, 10.4])))
        cfg = SimulationConfig(d, DetectorConfig(kind, param), SelectorConfig(("mmt", "rc", "mc")[i % 3], i),
                               Mode.CONSOLIDATION)
        traces = generate_synthetic(1000 + i, n_vms, int(rng.integers(12, 60)), float(rng.uniform(0.1, 0.5)))
        res = run(cfg, traces, record=True, audit=True)
        pm = d.power_model()
        joules = sum(
            float(np.where(a, pm.idle_watts + (pm.max_watts - pm.idle_watts) * u, pm.sleep_watts).sum())
            * d.step_seconds
            for u, a in zip(res.host_utilization, res.host_active)
        )
        checks = {
            "slatah": 0 <= res.slatah <= 1,
            "pdm": 0 <= res.pdm <= 0.10,
            "slav": res.slav == res.slatah * res.pdm,
            "esv": res.esv == res.energy_kwh * res.slav,
            "energy": abs(res.energy_kwh - joules / 3.6e6) <= 1e-9 * max(1.0, res.energy_kwh),
        }
        problems += [(i, k) for k, v in checks.items() if not v]
    ok = record_acceptance(8, not problems, f"100 fuzzed consolidation runs; violations {problems}")
    assert ok


DET_GRID = """
[datacenter]
n_hosts = 30
n_vms = 60
rng_seed = 9

[engine]
horizon_steps = 48

[grid]
mad = 2.5
lr = 1.2
lrr = 1.2
selectors = mmt, rc, mc
days = synthetic:1, synthetic:2
baselines = npa, dvfs
"""


def test_9_determinism(tmp_path):
    d = DataCenterConfig(n_hosts=30, n_vms=60, rng_seed=9)
    cfg = SimulationConfig(d, DetectorConfig("iqr", 1.5), SelectorConfig("rc", 9), Mode.CONSOLIDATION)
    traces = generate_synthetic(4, 60, 96, 0.35)
    a, b = run(cfg, traces), run(cfg, traces)
    same_run = a.to_json() == b.to_json() and a.steps_csv() == b.steps_csv()

    grid = tmp_path / "grid.ini"
    grid.write_text(DET_GRID)
    codes = [main(["experiment", "--grid", str(grid), "--out", str(tmp_path / f"j{j}"), "--jobs", str(j)])
             for j in (1, 8)]
    names = ["runs.csv", "experiment.json", *FIGURES]
    diff = [n for n in names if (tmp_path / "j1" / n).read_bytes() != (tmp_path / "j8" / n).read_bytes()]
    ok = same_run and codes == [0, 0] and not diff
    record_acceptance(9, ok, f"repeat run identical: {same_run}; --jobs 1 vs 8 differing files: {diff}")
    assert ok


@pytest.mark.full_scale
def test_10_full_scale(tmp_path):
    days = tuple(DaySpec.parse(f"synthetic:{i}") for i in range(10))
    grid = ExperimentGrid(days=days)
    runs = expand_grid(grid)
    records, slowest, slow_key = [], 0.0, None
    t_all = time.perf_counter()
    for key, cfg, day in runs:
        t0 = time.perf_counter()
        records.append(execute(key, cfg, day))
        dt = time.perf_counter() - t0
        if dt > slowest:
            slowest, slow_key = dt, key.slug
    total = time.perf_counter() - t_all
    emit_summaries(records, tmp_path, None)
    combos = {k.combo for k, _, _ in runs}
    rows = {name: (tmp_path / name).read_text().splitlines()[1:] for name in FIGURES}
    one_row_each = all(
        len(r) == len(combos) and sorted(x.split(",")[0] for x in r) == sorted(combos) for r in rows.values()
    )
    failed = sum(r["status"] != "ok" for r in records)
    ok = len(runs) == 810 and not failed and slowest <= 60 and one_row_each
    record_acceptance(
        10, ok,
        f"{len(runs)} runs, {failed} failed, slowest {slowest:.1f} s ({slow_key}), total {total / 60:.1f} min "
        f"on {os.cpu_count()} core(s); one row per combo in each figure CSV: {one_row_each}",
    )
    assert ok

"""Time-stepped simulation of a data center under a consolidation policy,
plus the DVFS and non-power-aware baselines."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from dcsim import metrics
from dcsim.detection import FALLBACK_THRESHOLD, DetectorConfig, decide_full
from dcsim.model import DataCenterConfig, power_draw
from dcsim.placement import Cluster, MigrationPlan, consolidate_underloaded, pabfd_place, resolve_overload
from dcsim.selection import SelectorConfig, migration_seconds
from dcsim.workload import TraceSet, assign_traces

STEP_COLUMNS = (
    "step", "active_hosts", "total_power_w", "overloaded_hosts", "migrations",
    "unplaced_vms", "saturated_hosts", "served_mips", "active_capacity_mips",
)


class Mode(str, enum.Enum):
    CONSOLIDATION = "consolidation"
    DVFS = "dvfs"
    NPA = "npa"


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    dc: DataCenterConfig = field(default_factory=DataCenterConfig)
    detector: DetectorConfig | None = None
    selector: SelectorConfig | None = None
    mode: Mode = Mode.CONSOLIDATION
    bandwidth_bps: float = 1e9
    migration_bandwidth_share: float = 0.5
    migration_degradation: float = 0.10
    horizon_steps: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.mode is Mode.CONSOLIDATION and (self.detector is None or self.selector is None):
            raise SimulationError("consolidation mode needs a detector and a selector")
        if self.mode is not Mode.CONSOLIDATION and (self.detector or self.selector):
            raise SimulationError(f"{self.mode.value} mode takes no detector or selector")
        if not 0 < self.migration_bandwidth_share <= 1:
            raise SimulationError("migration_bandwidth_share must lie in (0, 1]")
        if not 0 <= self.migration_degradation <= 1:
            raise SimulationError("migration_degradation must lie in [0, 1]")
        if self.bandwidth_bps <= 0:
            raise SimulationError("bandwidth_bps must be positive")

    @property
    def label(self) -> str:
        if self.mode is not Mode.CONSOLIDATION:
            return self.mode.value
        return f"{self.detector.kind}-{self.selector.kind}-{self.detector.param!r}"

    @property
    def headroom(self) -> float:
        return self.detector.admission_headroom if self.detector else 1.0

    def as_dict(self) -> dict:
        d = {
            "dc": asdict(self.dc),
            "mode": self.mode.value,
            "detector": asdict(self.detector) if self.detector else None,
            "selector": asdict(self.selector) if self.selector else None,
            "bandwidth_bps": self.bandwidth_bps,
            "migration_bandwidth_share": self.migration_bandwidth_share,
            "migration_degradation": self.migration_degradation,
            "horizon_steps": self.horizon_steps,
        }
        d["dc"]["host_mips_choices"] = list(self.dc.host_mips_choices)
        d["dc"]["vm_mips_choices"] = list(self.dc.vm_mips_choices)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MigrationRecord:
    vm_id: int
    source: int
    dest: int
    start_step: int
    duration_seconds: float


@dataclass
class SimulationResult:
    config: SimulationConfig
    energy_kwh: float
    migration_count: int
    slatah: float
    pdm: float
    slav: float
    esv: float
    sla_event_pct: float
    steps: list
    host_active_seconds: np.ndarray
    host_overload_seconds: np.ndarray
    vm_demanded_mips_s: np.ndarray
    vm_degraded_mips_s: np.ndarray
    migrations: list
    trace_sources: list = field(default_factory=list)
    # per-step (utilization, active) snapshots, kept only when requested
    host_utilization: np.ndarray | None = None
    host_active: np.ndarray | None = None

    @property
    def report(self) -> metrics.MetricsReport:
        return metrics.MetricsReport(
            self.energy_kwh, self.slav, self.migration_count, self.esv, self.slatah, self.pdm
        )

    def as_dict(self) -> dict:
        return {
            "config": self.config.as_dict(),
            "config_hash": self.config.digest(),
            "label": self.config.label,
            "energy_kwh": self.energy_kwh,
            "migration_count": self.migration_count,
            "slatah": self.slatah,
            "pdm": self.pdm,
            "slav": self.slav,
            "esv": self.esv,
            "sla_event_pct": self.sla_event_pct,
            "unplaced_vm_events": int(sum(s["unplaced_vms"] for s in self.steps)),
            "hosts": {
                "active_seconds": self.host_active_seconds.tolist(),
                "overload_seconds": self.host_overload_seconds.tolist(),
            },
            "vms": {
                "demanded_mips_s": self.vm_demanded_mips_s.tolist(),
                "degraded_mips_s": self.vm_degraded_mips_s.tolist(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=1) + "\n"

    def steps_csv(self) -> str:
        lines = [",".join(STEP_COLUMNS)]
        for s in self.steps:
            lines.append(",".join(
                f"{s[c]:.6f}" if isinstance(s[c], float) else str(s[c]) for c in STEP_COLUMNS
            ))
        return "\n".join(lines) + "\n"


def bind_traces(traces, n_vms, seed, reuse=False) -> np.ndarray:
    """Utilization matrix (VMs x steps) from a trace set or a ready array."""
    if isinstance(traces, TraceSet):
        order = assign_traces(traces, n_vms, seed, reuse=reuse)
        return traces.as_array()[order]
    util = np.asarray(traces, dtype=float)
    if util.ndim != 2 or util.shape[0] != n_vms:
        raise SimulationError(f"expected a ({n_vms}, steps) utilization array, got {util.shape}")
    return util


class Simulation:
    """One deterministic, single-threaded simulation run."""

    def __init__(self, cfg: SimulationConfig, traces, reuse_traces=False, record=False, audit=False):
        self.cfg = cfg
        dc = cfg.dc
        self.hosts = dc.build_hosts(full_power=cfg.mode is Mode.NPA)
        self.vms = dc.build_vms()
        self.util = bind_traces(traces, dc.n_vms, [dc.rng_seed, 4], reuse_traces)
        if np.any(self.util < 0) or np.any(self.util > 1):
            raise SimulationError("utilization samples must lie in [0, 1]")
        self.horizon = cfg.horizon_steps or self.util.shape[1]
        if self.util.shape[1] < self.horizon:
            raise SimulationError(
                f"traces have {self.util.shape[1]} samples, horizon needs {self.horizon}"
            )
        self.trace_sources = [t.source_id for t in traces.traces] if isinstance(traces, TraceSet) else []
        self.record = record
        self.audit = audit

        self.vm_mips = np.array([v.mips for v in self.vms])
        self.vm_ram = np.array([v.ram_mb for v in self.vms])
        self.cluster = Cluster(
            [h.mips for h in self.hosts], [h.ram_mb for h in self.hosts], self.vm_ram,
            self.hosts[0].power_model,
        )
        self.rng = np.random.default_rng([dc.rng_seed, 3])
        self.migration_window = migration_seconds(
            self.vm_ram, cfg.migration_bandwidth_share * cfg.bandwidth_bps
        )
        window = cfg.detector.window_len if cfg.detector else 1
        n_hosts, n_vms = dc.n_hosts, dc.n_vms
        self.host_hist = np.zeros((n_hosts, window))
        self.hist_len = np.zeros(n_hosts, dtype=np.int64)

        self.energy_j = 0.0
        self.active_s = np.zeros(n_hosts)
        self.overload_s = np.zeros(n_hosts)
        self.cr = np.zeros(n_vms)
        self.cd = np.zeros(n_vms)
        self.sla_events = 0
        self.active_steps = 0
        self.migrations: list[MigrationRecord] = []
        self.in_flight: list[MigrationRecord] = []
        self.steps: list[dict] = []
        self.util_log = []
        self.active_log = []
        self._place_initial()

    def _place_initial(self):
        """Best-fit-decreasing on requested MIPS with every host available.

        VMs that miss the policy's admission headroom (a low static
        threshold on a small data center) are retried at full capacity;
        the first steps' overload handling then spreads them out.
        """
        c = self.cluster
        c.vm_demand = self.vm_mips.copy()
        c.active[:] = True
        pending = list(range(len(self.vms)))
        for headroom in sorted({self.cfg.headroom, 1.0}):
            placed = pabfd_place(c, pending, headroom)
            for vm, host in sorted(placed.mapping.items()):
                c.assign(vm, host)
            pending = placed.unplaced
            if not pending:
                break
        if pending:
            raise SimulationError(
                f"{len(pending)} VMs do not fit the data center at their requested capacity"
            )
        if self.cfg.mode is Mode.CONSOLIDATION:
            c.active[:] = np.array([bool(r) for r in c.residents])

    def _push_history(self):
        c = self.cluster
        self.host_hist[:, :-1] = self.host_hist[:, 1:]
        self.host_hist[:, -1] = c.utilization()
        self.hist_len = np.where(c.active, np.minimum(self.hist_len + 1, self.host_hist.shape[1]), 0)

    def _detect(self) -> np.ndarray:
        det = self.cfg.detector
        c = self.cluster
        over = np.zeros(c.n_hosts, bool)
        full = c.active & (self.hist_len >= det.window_len)
        warm = c.active & ~full
        if full.any():
            over[full] = decide_full(det, self.host_hist[full])
        over[warm] = self.host_hist[warm, -1] > FALLBACK_THRESHOLD
        return over

    def _plan(self, t) -> tuple[MigrationPlan, np.ndarray]:
        cfg, c = self.cfg, self.cluster
        over = self._detect()
        overloaded = np.flatnonzero(over)
        evictees = []
        sel_window = cfg.selector.window_len
        vm_hist = self.util[:, max(0, t - sel_window + 1): t + 1] if cfg.selector.kind == "mc" else None
        for h in overloaded.tolist():
            hist = self.host_hist[h, -max(1, self.hist_len[h]):]
            evictees += resolve_overload(
                c, h, cfg.detector, cfg.selector, hist, self.rng, vm_hist, cfg.bandwidth_bps
            )
        plan = MigrationPlan()
        if evictees:
            placed = pabfd_place(c, evictees, cfg.headroom, exclude=over, allow_wake=True)
            plan.moves = [(vm, int(c.vm_host[vm]), dst) for vm, dst in sorted(placed.mapping.items())]
            plan.hosts_to_wake = placed.woken
            plan.unplaced = placed.unplaced
            c.apply(plan)
        destinations = {dst for _, _, dst in plan.moves}
        plan.extend(consolidate_underloaded(c, cfg.headroom, exclude=over, destinations=destinations))
        return plan, over

    def step(self, t) -> MigrationPlan:
        cfg, c = self.cfg, self.cluster
        dt = cfg.dc.step_seconds
        c.set_demands(self.util[:, t] * self.vm_mips)
        self._push_history()

        plan, over = MigrationPlan(), np.zeros(c.n_hosts, bool)
        if cfg.mode is Mode.CONSOLIDATION:
            plan, over = self._plan(t)
            plan.validate()
            for h in plan.hosts_to_sleep:
                self.hist_len[h] = 0
            for h in plan.hosts_to_wake:
                self.hist_len[h] = 0
            for vm, src, dst in plan.moves:
                rec = MigrationRecord(vm, src, dst, t, float(self.migration_window[vm]))
                self.migrations.append(rec)
                self.in_flight.append(rec)
        if self.audit:
            c.audit()

        util = c.utilization()
        power = power_draw(c.power_model, util, c.active)
        self.energy_j += float(power.sum()) * dt
        if self.record:
            self.util_log.append(util.copy())
            self.active_log.append(c.active.copy())

        saturated = c.active & (c.ratio() >= 1.0)
        self.active_s[c.active] += dt
        self.overload_s[saturated] += dt
        self.sla_events += int(saturated.sum())
        self.active_steps += int(c.active.sum())

        demand = c.vm_demand
        self.cr += demand * dt
        t0, t1 = t * dt, (t + 1) * dt
        still = []
        for rec in self.in_flight:
            start = rec.start_step * dt
            end = start + rec.duration_seconds
            overlap = min(end, t1) - max(start, t0)
            if overlap > 0:
                self.cd[rec.vm_id] += cfg.migration_degradation * demand[rec.vm_id] * overlap
            if end > t1:
                still.append(rec)
        self.in_flight = still

        served = float(np.minimum(c.demand, c.host_mips)[c.active].sum())
        self.steps.append({
            "step": t,
            "active_hosts": int(c.active.sum()),
            "total_power_w": float(power.sum()),
            "overloaded_hosts": int(over.sum()),
            "migrations": len(plan.moves),
            "unplaced_vms": len(plan.unplaced),
            "saturated_hosts": int(saturated.sum()),
            "served_mips": served,
            "active_capacity_mips": float(c.host_mips[c.active].sum()),
        })
        return plan

    def run(self) -> SimulationResult:
        for t in range(self.horizon):
            self.step(t)
        return self.result()

    def result(self) -> SimulationResult:
        cfg = self.cfg
        energy_kwh = self.energy_j / 3.6e6
        sl = metrics.slatah(self.overload_s, self.active_s)
        pd = metrics.pdm(self.cd, self.cr)
        report = metrics.MetricsReport.from_components(energy_kwh, sl, pd, len(self.migrations))
        return SimulationResult(
            config=cfg,
            energy_kwh=energy_kwh,
            migration_count=len(self.migrations),
            slatah=sl,
            pdm=pd,
            slav=report.sla_violation,
            esv=report.esv,
            sla_event_pct=self.sla_events / self.active_steps if self.active_steps else 0.0,
            steps=self.steps,
            host_active_seconds=self.active_s.copy(),
            host_overload_seconds=self.overload_s.copy(),
            vm_demanded_mips_s=self.cr.copy(),
            vm_degraded_mips_s=self.cd.copy(),
            migrations=list(self.migrations),
            trace_sources=self.trace_sources,
            host_utilization=np.array(self.util_log) if self.record else None,
            host_active=np.array(self.active_log) if self.record else None,
        )


def run(cfg: SimulationConfig, traces, **kwargs) -> SimulationResult:
    """Simulate ``cfg`` over ``traces`` (a TraceSet, bound to VMs at random,
    or a VMs x steps utilization array)."""
    return Simulation(cfg, traces, **kwargs).run()

"""Power-aware best-fit-decreasing placement, overload resolution and
underload consolidation over a vectorized snapshot of the data center."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dcsim.detection import DetectorConfig, is_overloaded
from dcsim import _kernels as _k
from dcsim.model import PowerKind, PowerModel
from dcsim.selection import SelectorConfig, select_mc, select_mmt, select_rc

# power increases closer than this are ties, resolved by host id
POWER_TIE_TOL = 1e-9


@dataclass
class MigrationPlan:
    moves: list = field(default_factory=list)  # (vm, source, dest)
    hosts_to_sleep: list = field(default_factory=list)
    hosts_to_wake: list = field(default_factory=list)
    unplaced: list = field(default_factory=list)

    def extend(self, other: "MigrationPlan"):
        self.moves.extend(other.moves)
        self.hosts_to_sleep.extend(other.hosts_to_sleep)
        self.hosts_to_wake.extend(other.hosts_to_wake)
        self.unplaced.extend(other.unplaced)

    def validate(self):
        vms = [m[0] for m in self.moves]
        if len(vms) != len(set(vms)):
            raise AssertionError("a VM moves twice in one plan")
        if any(src == dst for _, src, dst in self.moves):
            raise AssertionError("move with source == dest")
        if set(self.hosts_to_sleep) & {d for _, _, d in self.moves}:
            raise AssertionError("a destination host is slated for sleep")


class Cluster:
    """Mutable array view of hosts and VMs within one simulation step.

    Host ``i`` and VM ``j`` are identified by their indices, which double
    as the ids used for every tie-break.
    """

    def __init__(self, host_mips, host_ram, vm_ram, power_model: PowerModel):
        self.host_mips = np.asarray(host_mips, dtype=float)
        self.host_ram = np.asarray(host_ram, dtype=float)
        self.vm_ram = np.asarray(vm_ram, dtype=float)
        self.power_model = power_model
        n_hosts, n_vms = len(self.host_mips), len(self.vm_ram)
        self.active = np.zeros(n_hosts, bool)
        self.vm_host = np.full(n_vms, -1, dtype=np.int64)
        self.vm_demand = np.zeros(n_vms)
        self.demand = np.zeros(n_hosts)
        self.ram_used = np.zeros(n_hosts)
        self.residents = [[] for _ in range(n_hosts)]

    @property
    def n_hosts(self):
        return len(self.host_mips)

    def set_demands(self, vm_demand):
        self.vm_demand = np.asarray(vm_demand, dtype=float)
        placed = self.vm_host >= 0
        self.demand = np.bincount(
            self.vm_host[placed], weights=self.vm_demand[placed], minlength=self.n_hosts
        ).astype(float)
        self.ram_used = np.bincount(
            self.vm_host[placed], weights=self.vm_ram[placed], minlength=self.n_hosts
        ).astype(float)

    def ratio(self, hosts=None):
        if hosts is None:
            return self.demand / self.host_mips
        return self.demand[hosts] / self.host_mips[hosts]

    def utilization(self, hosts=None):
        # incremental moves can leave -1e-17 residue on emptied sums
        return np.clip(self.ratio(hosts), 0.0, 1.0)

    def assign(self, vm, host):
        old = self.vm_host[vm]
        if old >= 0:
            self.residents[old].remove(vm)
            self.demand[old] -= self.vm_demand[vm]
            self.ram_used[old] -= self.vm_ram[vm]
            if not self.residents[old]:
                self.demand[old] = 0.0
                self.ram_used[old] = 0.0
        self.vm_host[vm] = host
        self.residents[host].append(vm)
        self.demand[host] += self.vm_demand[vm]
        self.ram_used[host] += self.vm_ram[vm]
        self.active[host] = True

    def apply(self, plan: MigrationPlan):
        for h in plan.hosts_to_wake:
            self.active[h] = True
        for vm, _, dst in plan.moves:
            self.assign(vm, dst)
        for h in plan.hosts_to_sleep:
            if self.residents[h]:
                raise AssertionError(f"host {h} slept while holding VMs")
            self.active[h] = False

    def audit(self):
        """Every VM on exactly one active host; sleeping hosts are empty."""
        seen = np.zeros(len(self.vm_ram), int)
        for h, vms in enumerate(self.residents):
            if vms and not self.active[h]:
                raise AssertionError(f"sleeping host {h} holds VMs")
            for vm in vms:
                seen[vm] += 1
                if self.vm_host[vm] != h:
                    raise AssertionError(f"VM {vm} index disagrees with host {h}")
        if np.any(seen != 1):
            raise AssertionError("VM residency is not one-to-one")
        if np.any(self.ram_used > self.host_ram + 1e-6):
            raise AssertionError("RAM oversubscribed")


@dataclass
class Placement:
    mapping: dict
    woken: list
    unplaced: list


def pabfd_place(cluster: Cluster, vms, headroom=1.0, exclude=None, allow_wake=True) -> Placement:
    """Power-aware best fit decreasing.

    VMs go in order of decreasing current demand (ties by id). Each takes
    the feasible active host with the smallest power increase, never its
    own current host nor any host flagged in ``exclude``. With no feasible
    active host, the lowest-id sleeping host that admits it is woken if
    ``allow_wake``; otherwise the VM is reported unplaced. ``cluster`` is
    not modified.
    """
    order = np.array(sorted(vms, key=lambda v: (-cluster.vm_demand[v], v)), dtype=np.int64)
    blocked = np.zeros(cluster.n_hosts, bool) if exclude is None else np.array(exclude, bool)
    model = cluster.power_model
    dest, woke = _k.pabfd(
        order, cluster.vm_demand, cluster.vm_ram, cluster.vm_host,
        cluster.demand.copy(), cluster.ram_used.copy(), cluster.active.copy(), blocked,
        cluster.host_mips, cluster.host_ram, model.idle_watts, model.max_watts,
        model.kind is PowerKind.FULL_POWER_ALWAYS, float(headroom), allow_wake, POWER_TIE_TOL,
    )
    mapping = {int(v): int(d) for v, d in zip(order, dest) if d >= 0}
    woken = [int(d) for d, w in zip(dest, woke) if w]
    unplaced = [int(v) for v, d in zip(order, dest) if d < 0]
    return Placement(mapping, woken, unplaced)


def resolve_overload(cluster: Cluster, host, detector: DetectorConfig, selector: SelectorConfig,
                     history, rng=None, vm_history=None, bandwidth_bps=1e9) -> list:
    """VMs to evict from ``host`` until the detector clears it.

    ``history`` is the host's utilization history (oldest first); after
    each eviction its last sample is replaced with the reduced utilization.
    ``vm_history`` has one row per VM, needed only by MC.
    """
    hist = np.array(history, dtype=float)
    if not is_overloaded(detector, hist):
        raise ValueError(f"host {host} is not overloaded")
    remaining = sorted(cluster.residents[host])
    demand = cluster.demand[host]
    mips = cluster.host_mips[host]
    evicted = []
    while remaining:
        ram = cluster.vm_ram[remaining]
        if selector.kind == "mmt":
            vm = select_mmt(remaining, ram, bandwidth_bps)
        elif selector.kind == "rc":
            vm = select_rc(remaining, rng)
        else:
            rows = vm_history[remaining] if vm_history is not None else np.empty((len(remaining), 0))
            vm = select_mc(remaining, rows, ram, selector.window_len, bandwidth_bps)
        remaining.remove(vm)
        evicted.append(vm)
        demand -= cluster.vm_demand[vm]
        hist[-1] = min(1.0, max(0.0, demand) / mips) if remaining else 0.0
        if not is_overloaded(detector, hist):
            break
    return evicted


def consolidate_underloaded(cluster: Cluster, headroom=1.0, exclude=None,
                            destinations=None) -> MigrationPlan:
    """Greedily empty the least-utilized hosts and put them to sleep.

    Hosts flagged in ``exclude`` (e.g. those found overloaded this step)
    are neither evacuated nor used as destinations; hosts in
    ``destinations`` already received VMs this step and are not evacuated.
    Sleeping hosts are never woken. The cluster is updated in place with
    every committed evacuation.
    """
    n = cluster.n_hosts
    blocked = np.zeros(n, bool) if exclude is None else np.array(exclude, bool)
    receiving = np.zeros(n, bool)
    if destinations is not None:
        receiving[list(destinations)] = True
    sleeping = np.zeros(n, bool)
    plan = MigrationPlan()
    eligible = cluster.active & ~blocked & ~receiving
    hosts = np.flatnonzero(eligible)
    # candidates' own load never changes in this loop (receivers drop out),
    # so one sort by (utilization, id) fixes the visiting order
    order = hosts[np.lexsort((hosts, cluster.utilization(hosts)))]
    for h in order.tolist():
        if receiving[h]:
            continue
        vms = list(cluster.residents[h])
        if vms:
            off_limits = ~cluster.active | blocked | sleeping
            off_limits[h] = True
            placed = pabfd_place(cluster, vms, headroom, off_limits, allow_wake=False)
            if placed.unplaced:
                continue
            step = MigrationPlan(moves=[(vm, h, dst) for vm, dst in sorted(placed.mapping.items())])
            for vm, dst in placed.mapping.items():
                cluster.assign(vm, dst)
                receiving[dst] = True
            plan.moves.extend(step.moves)
        cluster.active[h] = False
        sleeping[h] = True
        plan.hosts_to_sleep.append(h)
    return plan

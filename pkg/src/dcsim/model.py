"""Hosts, VMs, the host power model and data-center configuration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

HOST_MIPS_CHOICES = (1000, 2000, 3000)
HOST_RAM_MB = 32768
HOST_STORAGE_GB = 4096
HOST_BANDWIDTH_BPS = 1e9

VM_MIPS_CHOICES = (1000, 750, 500, 250)
VM_RAM_MB = 1024
VM_STORAGE_GB = 100

IDLE_WATTS = 175.0
MAX_WATTS = 250.0
SLEEP_WATTS_DOCUMENTED = 10.4


class HostStatus(enum.Enum):
    ACTIVE = "active"
    SLEEPING = "sleeping"


class PowerKind(enum.Enum):
    LINEAR = "linear"
    FULL_POWER_ALWAYS = "full_power_always"


@dataclass(frozen=True)
class PowerModel:
    """Host power as a function of CPU utilization.

    ``LINEAR`` interpolates between ``idle_watts`` and ``max_watts``;
    ``FULL_POWER_ALWAYS`` draws ``max_watts`` whenever the host is active
    (the non-power-aware baseline).
    """

    kind: PowerKind = PowerKind.LINEAR
    idle_watts: float = IDLE_WATTS
    max_watts: float = MAX_WATTS
    sleep_watts: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.idle_watts <= self.max_watts:
            raise ValueError(
                f"need 0 <= idle_watts <= max_watts, got {self.idle_watts}, {self.max_watts}"
            )
        if self.sleep_watts < 0:
            raise ValueError(f"sleep_watts must be >= 0, got {self.sleep_watts}")

    @classmethod
    def linear(cls, idle_watts=IDLE_WATTS, max_watts=MAX_WATTS, sleep_watts=0.0):
        return cls(PowerKind.LINEAR, idle_watts, max_watts, sleep_watts)

    @classmethod
    def full_power_always(cls, max_watts=MAX_WATTS, sleep_watts=0.0):
        return cls(PowerKind.FULL_POWER_ALWAYS, max_watts, max_watts, sleep_watts)


@dataclass(frozen=True)
class HostSpec:
    mips: float
    ram_mb: float = HOST_RAM_MB
    storage_gb: float = HOST_STORAGE_GB
    bandwidth_bps: float = HOST_BANDWIDTH_BPS
    power_model: PowerModel = field(default_factory=PowerModel)

    def __post_init__(self):
        if self.mips <= 0 or self.ram_mb <= 0 or self.bandwidth_bps <= 0:
            raise ValueError(f"host capacities must be positive: {self}")


@dataclass(frozen=True)
class VmSpec:
    mips: float
    ram_mb: float = VM_RAM_MB
    storage_gb: float = VM_STORAGE_GB

    def __post_init__(self):
        if self.mips <= 0 or self.ram_mb <= 0:
            raise ValueError(f"VM capacities must be positive: {self}")


@dataclass
class HostState:
    """Mutable placement state of one host.

    ``ram_used_mb`` and ``demand_mips`` are running sums over
    ``resident_vms``, kept so admission checks are O(1).
    """

    status: HostStatus = HostStatus.ACTIVE
    resident_vms: list = field(default_factory=list)
    ram_used_mb: float = 0.0
    demand_mips: float = 0.0

    def __post_init__(self):
        if self.status is HostStatus.SLEEPING and self.resident_vms:
            raise ValueError("a sleeping host cannot hold VMs")


@dataclass(frozen=True)
class DataCenterConfig:
    n_hosts: int = 800
    n_vms: int = 1000
    host_mips_choices: tuple = HOST_MIPS_CHOICES
    host_ram_mb: float = HOST_RAM_MB
    host_storage_gb: float = HOST_STORAGE_GB
    host_bandwidth_bps: float = HOST_BANDWIDTH_BPS
    vm_mips_choices: tuple = VM_MIPS_CHOICES
    vm_ram_mb: float = VM_RAM_MB
    vm_storage_gb: float = VM_STORAGE_GB
    idle_watts: float = IDLE_WATTS
    max_watts: float = MAX_WATTS
    sleep_watts: float = 0.0
    step_seconds: float = 300.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_hosts <= 0 or self.n_vms <= 0:
            raise ValueError("n_hosts and n_vms must be positive")
        if self.step_seconds <= 0:
            raise ValueError("step_seconds must be positive")

    def power_model(self, full_power=False) -> PowerModel:
        if full_power:
            return PowerModel.full_power_always(self.max_watts, self.sleep_watts)
        return PowerModel.linear(self.idle_watts, self.max_watts, self.sleep_watts)

    def build_hosts(self, full_power=False) -> list[HostSpec]:
        rng = np.random.default_rng([self.rng_seed, 1])
        mips = rng.choice(np.asarray(self.host_mips_choices, dtype=float), size=self.n_hosts)
        pm = self.power_model(full_power)
        return [
            HostSpec(float(m), self.host_ram_mb, self.host_storage_gb, self.host_bandwidth_bps, pm)
            for m in mips
        ]

    def build_vms(self) -> list[VmSpec]:
        rng = np.random.default_rng([self.rng_seed, 2])
        mips = rng.choice(np.asarray(self.vm_mips_choices, dtype=float), size=self.n_vms)
        return [VmSpec(float(m), self.vm_ram_mb, self.vm_storage_gb) for m in mips]


def raw_demand_ratio(host: HostSpec, demands) -> float:
    return float(sum(demands)) / host.mips


def host_cpu_utilization(host: HostSpec, demands) -> float:
    """Served CPU fraction: total MIPS demand over capacity, capped at 1."""
    return min(1.0, raw_demand_ratio(host, demands))


def power_draw(model: PowerModel, utilization, status=HostStatus.ACTIVE):
    """Watts drawn at ``utilization``; accepts scalars or arrays.

    ``status`` may be a :class:`HostStatus` or a boolean array marking
    active hosts.
    """
    u = np.asarray(utilization, dtype=float)
    if np.any(u < 0.0) or np.any(u > 1.0) or np.any(np.isnan(u)):
        raise ValueError(f"utilization must lie in [0, 1], got {utilization!r}")
    if model.kind is PowerKind.FULL_POWER_ALWAYS:
        active_watts = np.full_like(u, model.max_watts)
    else:
        active_watts = model.idle_watts + (model.max_watts - model.idle_watts) * u
    if isinstance(status, HostStatus):
        out = active_watts if status is HostStatus.ACTIVE else np.full_like(u, model.sleep_watts)
    else:
        out = np.where(np.asarray(status, dtype=bool), active_watts, model.sleep_watts)
    return float(out) if out.ndim == 0 else out


def admits(ram_used, ram_cap, demand, mips, vm_ram, vm_mips, headroom):
    """Admission test shared by :func:`can_fit` and the vectorized placer."""
    return (ram_used + vm_ram <= ram_cap) & ((demand + vm_mips) / mips <= headroom)


def can_fit(host: HostSpec, state: HostState, vm: VmSpec, admission_headroom=1.0, vm_demand=None) -> bool:
    """Whether ``vm`` may be placed on an active host.

    RAM is a hard limit; CPU is admitted while the raw demand ratio after
    placement stays within ``admission_headroom``. ``vm_demand`` is the
    VM's MIPS demand at placement time and defaults to ``vm.mips``.
    """
    mips = vm.mips if vm_demand is None else vm_demand
    return bool(
        admits(state.ram_used_mb, host.ram_mb, state.demand_mips, host.mips, vm.ram_mb, mips, admission_headroom)
    )

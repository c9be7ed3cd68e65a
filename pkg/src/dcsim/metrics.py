"""Energy/SLA metrics from simulation ledgers and median aggregation."""

from __future__ import annotations

import logging
import statistics
from dataclasses import asdict, dataclass

import numpy as np

log = logging.getLogger(__name__)

METRIC_NAMES = ("energy_kwh", "sla_violation", "migrations", "esv")


def slatah(overload_seconds, active_seconds) -> float:
    """Mean over hosts that were ever active of the fraction of their active
    time spent with demand at or above capacity."""
    over = np.asarray(overload_seconds, dtype=float)
    act = np.asarray(active_seconds, dtype=float)
    live = act > 0
    if not live.any():
        return 0.0
    return float(np.mean(over[live] / act[live]))


def pdm(degraded_mips_s, demanded_mips_s) -> float:
    """Mean over VMs of migration-degraded over total demanded MIPS-seconds.

    A VM that demanded nothing contributes 0.
    """
    cd = np.asarray(degraded_mips_s, dtype=float)
    cr = np.asarray(demanded_mips_s, dtype=float)
    if cr.size == 0:
        return 0.0
    ratio = np.divide(cd, cr, out=np.zeros_like(cd), where=cr > 0)
    return float(np.mean(ratio))


def slav(slatah_value: float, pdm_value: float) -> float:
    return slatah_value * pdm_value


def esv(energy_kwh: float, slav_value: float) -> float:
    return energy_kwh * slav_value


@dataclass(frozen=True)
class MetricsReport:
    energy_kwh: float
    sla_violation: float
    migrations: int
    esv: float
    slatah: float
    pdm: float

    @classmethod
    def from_components(cls, energy_kwh, slatah_value, pdm_value, migrations):
        v = slav(slatah_value, pdm_value)
        return cls(energy_kwh, v, int(migrations), esv(energy_kwh, v), slatah_value, pdm_value)

    def as_dict(self):
        d = asdict(self)
        return {
            "energy_kwh": d["energy_kwh"],
            "sla_violation": d["sla_violation"],
            "migrations": d["migrations"],
            "esv": d["esv"],
            "components": {"slatah": d["slatah"], "pdm": d["pdm"]},
        }


def aggregate_median(groups: dict) -> dict:
    """Per-combo median of each metric over its day runs.

    ``groups`` maps a combo label to a list of :class:`MetricsReport`;
    empty groups are skipped with a warning.
    """
    out = {}
    for label in sorted(groups):
        reports = groups[label]
        if not reports:
            log.warning("no results for %s; excluded from medians", label)
            continue
        out[label] = {
            name: float(statistics.median(float(getattr(r, name)) for r in reports))
            for name in METRIC_NAMES
        }
    return out

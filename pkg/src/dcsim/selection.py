"""Choosing which VM leaves an overloaded host.

Candidates are VM ids; ties always go to the lowest id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dcsim import _kernels as _k

KINDS = ("mmt", "rc", "mc")
R2_TIE_TOL = 1e-9
VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class SelectorConfig:
    kind: str = "mmt"
    rng_seed: int = 0
    window_len: int = 12

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown selector {self.kind!r}; expected one of {KINDS}")
        if self.window_len < 3:
            raise ValueError("MC window must be at least 3 samples")

    @classmethod
    def parse(cls, text: str, rng_seed=0) -> "SelectorConfig":
        return cls(text.strip().lower(), rng_seed)


def migration_seconds(ram_mb, bandwidth_bps):
    """Time to copy ``ram_mb`` mebibytes at ``bandwidth_bps`` bits per second."""
    return np.asarray(ram_mb, dtype=float) * 8 * 2**20 / bandwidth_bps


def select_mmt(vm_ids, ram_mb, bandwidth_bps=1e9) -> int:
    """VM with the shortest estimated migration time."""
    if len(vm_ids) == 0:
        raise ValueError("no candidates")
    times = migration_seconds(ram_mb, bandwidth_bps)
    return min(zip(times.tolist(), vm_ids))[1]


def select_rc(vm_ids, rng: np.random.Generator) -> int:
    """Uniform random VM; advances ``rng``."""
    if len(vm_ids) == 0:
        raise ValueError("no candidates")
    ordered = sorted(vm_ids)
    return ordered[int(rng.integers(len(ordered)))]


def multiple_r2(histories) -> np.ndarray:
    """Squared multiple correlation of each row regressed on all other rows.

    OLS with intercept over the columns (time steps). A row with no
    variance gets 0; rank-deficient regressors are handled by projecting
    onto their span.
    """
    h = np.ascontiguousarray(histories, dtype=float)
    if h.ndim != 2 or h.shape[0] < 2:
        raise ValueError("need at least two histories")
    return _k.multiple_r2(h, VARIANCE_FLOOR)


def pick_max(scores, vm_ids, tol=R2_TIE_TOL) -> int:
    scores = np.asarray(scores, dtype=float)
    best = scores.max()
    return min(v for v, s in zip(vm_ids, scores) if s >= best - tol)


def select_mc(vm_ids, histories, ram_mb, window_len=12, bandwidth_bps=1e9) -> int:
    """VM whose recent utilization is best explained by its neighbours'.

    ``histories`` holds one row per candidate, oldest sample first. With
    fewer than two candidates or less than ``window_len`` samples this
    falls back to :func:`select_mmt`.
    """
    h = np.asarray(histories, dtype=float)
    if len(vm_ids) < 2 or h.ndim != 2 or h.shape[1] < window_len:
        return select_mmt(vm_ids, ram_mb, bandwidth_bps)
    return pick_max(multiple_r2(h[:, -window_len:]), vm_ids)

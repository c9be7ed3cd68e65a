"""Host overload detection: static threshold and four adaptive policies.

The statistics (``mad``, ``iqr``, ``loess_predict``, ``robust_loess_predict``)
reduce along the last axis, so the simulator can evaluate every host with a
full history window in one call. A 1-D input yields a Python float.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dcsim import _kernels as _k

KINDS = ("thr", "mad", "iqr", "lr", "lrr")
DEFAULT_WINDOW = {"thr": 1, "mad": 12, "iqr": 12, "lr": 10, "lrr": 10}
FALLBACK_THRESHOLD = 0.9
ROBUST_ITERATIONS = 2


def _rows(values):
    v = np.asarray(values, dtype=float)
    if v.ndim == 0 or v.shape[-1] == 0:
        raise ValueError("need a non-empty sequence")
    return np.ascontiguousarray(v.reshape(-1, v.shape[-1])), v.shape[:-1]


def _shape(out, lead):
    return float(out[0]) if lead == () else out.reshape(lead)


@dataclass(frozen=True)
class DetectorConfig:
    kind: str = "thr"
    param: float = 0.9
    window_len: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown detector {self.kind!r}; expected one of {KINDS}")
        if self.window_len == 0:
            object.__setattr__(self, "window_len", DEFAULT_WINDOW[self.kind])
        p = self.param
        if self.kind == "thr" and not 0.0 < p <= 1.0:
            raise ValueError(f"THR threshold must lie in (0, 1], got {p}")
        if self.kind in ("mad", "iqr") and p <= 0:
            raise ValueError(f"{self.kind} safety parameter must be > 0, got {p}")
        if self.kind in ("lr", "lrr") and p < 1:
            raise ValueError(f"{self.kind} safety parameter must be >= 1, got {p}")
        if self.kind == "iqr" and self.window_len < 4:
            raise ValueError("IQR needs a window of at least 4 samples")
        if self.kind in ("lr", "lrr") and self.window_len < 2:
            raise ValueError("regression needs a window of at least 2 samples")

    @classmethod
    def parse(cls, text: str) -> "DetectorConfig":
        """Parse ``"kind:param"``, e.g. ``"lr:1.2"``."""
        kind, sep, param = text.strip().partition(":")
        if not sep:
            raise ValueError(f"malformed policy {text!r}; expected kind:param")
        try:
            value = float(param)
        except ValueError:
            raise ValueError(f"malformed policy parameter in {text!r}") from None
        return cls(kind.strip().lower(), value)

    @property
    def token(self) -> str:
        return f"{self.kind}:{self.param!r}"

    @property
    def admission_headroom(self) -> float:
        return self.param if self.kind == "thr" else 1.0


def mad(values):
    """Median absolute deviation from the median."""
    x, lead = _rows(values)
    return _shape(_k.mad_rows(x), lead)


def iqr(values):
    """Interquartile range from Tukey hinges.

    The sorted values are split at the median (the median element is
    dropped for odd lengths) and each quartile is the median of its half.
    """
    x, lead = _rows(values)
    if x.shape[1] < 4:
        raise ValueError(f"iqr needs at least 4 values, got {x.shape[1]}")
    return _shape(_k.iqr_rows(x), lead)


def tricube_weights(n: int) -> np.ndarray:
    return _k.tricube(n)


def loess_predict(history):
    """One-step-ahead local linear prediction with tricube weights.

    The most recent sample weighs 1 and older samples decay with index
    distance. The prediction is floored at zero.
    """
    x, lead = _rows(history)
    if x.shape[1] < 2:
        raise ValueError("loess_predict needs at least 2 samples")
    return _shape(_k.loess_rows(x, 0), lead)


def robust_loess_predict(history, iterations=ROBUST_ITERATIONS):
    """:func:`loess_predict` refit with bisquare weights on the residuals.

    A zero median absolute residual keeps the current fit; a refit left
    with fewer than two weighted points reverts to the plain fit.
    """
    x, lead = _rows(history)
    if x.shape[1] < 2:
        raise ValueError("robust_loess_predict needs at least 2 samples")
    return _shape(_k.loess_rows(x, iterations), lead)


_STATS = {"mad": mad, "iqr": iqr}
_CODES = {"thr": _k.THR, "mad": _k.MAD, "iqr": _k.IQR, "lr": _k.LR, "lrr": _k.LRR}


def dynamic_threshold(cfg: DetectorConfig, history):
    """``1 - safety * stat(window)``, clamped to [0, 1]."""
    h = np.asarray(history, dtype=float)
    if h.shape[-1] < (4 if cfg.kind == "iqr" else 1):
        raise ValueError("history too short for dynamic threshold")
    stat = _STATS[cfg.kind](h[..., -cfg.window_len:])
    out = np.clip(1.0 - cfg.param * np.asarray(stat), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def decide_full(cfg: DetectorConfig, windows):
    """Overload decision for histories that already span the window."""
    x, lead = _rows(windows)
    if cfg.kind != "thr":
        x = np.ascontiguousarray(x[:, -cfg.window_len:])
    out = _k.overloaded_rows(_CODES[cfg.kind], float(cfg.param), x)
    return bool(out[0]) if lead == () else out.reshape(lead)


def is_overloaded(cfg: DetectorConfig, history) -> bool:
    """Whether the host whose utilization history is ``history`` is overloaded.

    ``history`` is ordered oldest first. Until a statistical policy has a
    full window it behaves like a 0.9 static threshold.
    """
    h = np.asarray(history, dtype=float)
    if h.ndim != 1 or h.size == 0:
        raise ValueError("history must be a non-empty 1-D sequence")
    if cfg.kind != "thr" and h.size < cfg.window_len:
        return bool(h[-1] > FALLBACK_THRESHOLD)
    return bool(decide_full(cfg, h))


def underload_candidate(utilizations, eligible=None):
    """Index of the least-utilized eligible host, ties to the lowest index.

    Returns None when nothing is eligible.
    """
    u = np.asarray(utilizations, dtype=float)
    mask = np.ones(u.shape, bool) if eligible is None else np.asarray(eligible, bool)
    if not mask.any():
        return None
    return int(np.argmin(np.where(mask, u, np.inf)))


def is_underloaded_candidate(host, utilizations, eligible=None) -> bool:
    return underload_candidate(utilizations, eligible) == host

"""PlanetLab-style CPU utilization traces: parsing, synthesis, VM binding.

A trace file holds one integer percentage (0-100) per line, one sample per
five-minute interval.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TRACE_INTERVAL_SECONDS = 300
SAMPLES_PER_DAY = 86400 // TRACE_INTERVAL_SECONDS


class TraceError(ValueError):
    """Malformed or inconsistent trace input."""


@dataclass(frozen=True)
class UtilizationTrace:
    samples: tuple
    source_id: str = ""
    interval_seconds: int = TRACE_INTERVAL_SECONDS

    def __post_init__(self):
        if self.interval_seconds != TRACE_INTERVAL_SECONDS:
            raise TraceError(f"interval must be {TRACE_INTERVAL_SECONDS} s")
        if any(not 0.0 <= s <= 1.0 for s in self.samples):
            raise TraceError(f"{self.source_id}: samples must lie in [0, 1]")

    def __len__(self):
        return len(self.samples)

    def render(self) -> str:
        return "".join(f"{round(s * 100)}\n" for s in self.samples)


@dataclass(frozen=True)
class TraceSet:
    traces: tuple
    day_label: str = ""

    def __post_init__(self):
        lengths = {len(t) for t in self.traces}
        if len(lengths) > 1:
            raise TraceError(f"{self.day_label}: traces differ in length {sorted(lengths)}")

    def __len__(self):
        return len(self.traces)

    @property
    def n_samples(self) -> int:
        return len(self.traces[0]) if self.traces else 0

    def as_array(self) -> np.ndarray:
        return np.array([t.samples for t in self.traces], dtype=float)


def parse_trace_file(source, source_id=None) -> UtilizationTrace:
    """Parse a trace from a path, bytes, or an open text/binary stream."""
    if isinstance(source, (str, os.PathLike)):
        source_id = source_id or os.path.basename(os.fspath(source))
        with open(source, "rb") as fh:
            raw = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    else:
        raw = source.read()
    text = raw.decode("ascii") if isinstance(raw, (bytes, bytearray)) else raw
    source_id = source_id or "<stream>"

    lines = text.split("\n")
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise TraceError(f"{source_id}: empty trace")

    samples = []
    for lineno, line in enumerate(lines, start=1):
        token = line.strip()
        try:
            value = int(token)
        except ValueError:
            raise TraceError(f"{source_id}: line {lineno}: not an integer: {token!r}") from None
        if not 0 <= value <= 100:
            raise TraceError(f"{source_id}: line {lineno}: {value} outside [0, 100]")
        samples.append(value / 100)
    return UtilizationTrace(tuple(samples), source_id)


def load_trace_dir(directory, day_label=None) -> TraceSet:
    directory = Path(directory)
    if not directory.is_dir():
        raise TraceError(f"not a directory: {directory}")
    names = sorted(p.name for p in directory.iterdir() if p.is_file() and not p.name.startswith("."))
    if not names:
        raise TraceError(f"{directory}: no trace files")
    traces = []
    for name in names:
        try:
            traces.append(parse_trace_file(directory / name))
        except OSError as exc:
            raise TraceError(f"{directory / name}: {exc}") from exc
    return TraceSet(tuple(traces), day_label or directory.name)


def write_trace_dir(traces: TraceSet, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = len(str(len(traces)))
    for i, trace in enumerate(traces.traces):
        (directory / f"vm{i:0{width}d}").write_text(trace.render())


def generate_synthetic(seed, n_traces, n_samples=SAMPLES_PER_DAY, mean_util=0.3,
                       reversion=0.1, noise=0.05) -> TraceSet:
    """Mean-reverting random walks quantized to whole percent.

    Each trace draws its own level uniformly from
    ``[0.5, 1.5] * mean_util`` and reverts toward it at rate ``reversion``
    with Gaussian steps of scale ``noise``; samples are clipped to [0, 1].
    """
    if not 0.0 < mean_util <= 0.5:
        raise ValueError(f"mean_util must lie in (0, 0.5], got {mean_util}")
    if n_samples < 1 or n_traces < 1:
        raise ValueError("n_traces and n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    levels = mean_util * rng.uniform(0.5, 1.5, size=n_traces)
    shocks = rng.normal(0.0, noise, size=(n_traces, n_samples))
    x = np.empty((n_traces, n_samples))
    # start from the stationary distribution so there is no warm-up drift
    stationary_sd = noise / np.sqrt(1.0 - (1.0 - reversion) ** 2)
    x[:, 0] = np.clip(levels + rng.normal(0.0, stationary_sd, size=n_traces), 0.0, 1.0)
    for t in range(1, n_samples):
        x[:, t] = np.clip(x[:, t - 1] + reversion * (levels - x[:, t - 1]) + shocks[:, t], 0.0, 1.0)
    pct = np.rint(x * 100).astype(int)
    traces = tuple(
        UtilizationTrace(tuple(int(v) / 100 for v in row), f"syn{seed}-{i}") for i, row in enumerate(pct)
    )
    return TraceSet(traces, f"syn-{seed}")


def assign_traces(traces: TraceSet, n_vms, seed, reuse=False) -> list[int]:
    """Random VM→trace binding; entry ``i`` is the trace index for VM ``i``."""
    n_vms = n_vms if isinstance(n_vms, int) else len(n_vms)
    if not reuse and len(traces) < n_vms:
        raise TraceError(f"{len(traces)} traces for {n_vms} VMs and reuse is disabled")
    rng = np.random.default_rng(seed)
    if reuse:
        picks = rng.integers(0, len(traces), size=n_vms)
    else:
        picks = rng.permutation(len(traces))[:n_vms]
    return [int(i) for i in picks]


def traces_from_text(texts: dict) -> TraceSet:
    """Build a set from ``{name: file_text}``; handy for tests and stdin."""
    return TraceSet(
        tuple(parse_trace_file(io.BytesIO(t.encode()), name) for name, t in sorted(texts.items()))
    )

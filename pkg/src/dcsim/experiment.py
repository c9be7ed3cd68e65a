"""Batch experiments: grid files, grid expansion, parallel runs and the
figure-ready summary CSVs."""

from __future__ import annotations

import configparser
import csv
import functools
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from dcsim.detection import KINDS as DETECTOR_KINDS
from dcsim.detection import DetectorConfig
from dcsim.engine import Mode, SimulationConfig, run
from dcsim.metrics import MetricsReport, aggregate_median
from dcsim.model import DataCenterConfig
from dcsim.selection import KINDS as SELECTOR_KINDS
from dcsim.selection import SelectorConfig
from dcsim.workload import SAMPLES_PER_DAY, generate_synthetic, load_trace_dir

log = logging.getLogger(__name__)

DEFAULT_GRID = {
    "thr": (0.6, 0.7, 0.8, 0.9, 1.0),
    "mad": (1.5, 2.0, 2.5, 3.0, 3.5),
    "iqr": (0.5, 1.0, 1.5, 2.0, 2.5, 3.0),
    "lr": (1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6),
    "lrr": (1.0, 1.1, 1.2, 1.3),
}
BASELINES = ("npa", "dvfs")
RUN_COLUMNS = (
    "combo_label", "day", "seed", "status", "energy_kwh", "sla_violation", "slatah", "pdm",
    "esv", "migrations", "sla_event_pct", "config_hash", "error",
)
FIGURES = {
    "energy_median.csv": "energy_kwh",
    "slav_median.csv": "sla_violation",
    "migrations_median.csv": "migrations",
    "esv_median.csv": "esv",
}
ENGINE_KEYS = ("bandwidth_bps", "migration_bandwidth_share", "migration_degradation", "horizon_steps")


class ConfigError(ValueError):
    """Malformed configuration or grid input."""


@dataclass(frozen=True, order=True)
class RunKey:
    combo: str
    day: str
    seed: int

    @property
    def slug(self) -> str:
        return f"{self.combo}__{self.day}__{self.seed}"


@dataclass(frozen=True)
class DaySpec:
    """A workload day: a directory of trace files or a synthetic seed."""

    label: str
    path: str | None = None
    seed: int | None = None
    mean_util: float = 0.3

    @classmethod
    def parse(cls, token: str, mean_util=0.3, base_dir=None) -> "DaySpec":
        token = token.strip()
        if token.startswith("synthetic:"):
            try:
                seed = int(token.split(":", 1)[1])
            except ValueError:
                raise ConfigError(f"bad synthetic day {token!r}") from None
            return cls(f"syn-{seed}", seed=seed, mean_util=mean_util)
        path = Path(token)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return cls(path.name, path=str(path))

    def load(self, n_vms, n_samples):
        if self.path is not None:
            return load_trace_dir(self.path, self.label)
        return generate_synthetic(self.seed, n_vms, n_samples, self.mean_util)


@dataclass(frozen=True)
class ExperimentGrid:
    detectors: tuple = tuple(DEFAULT_GRID.items())
    selectors: tuple = SELECTOR_KINDS
    days: tuple = ()
    baselines: tuple = ()
    dc: DataCenterConfig = field(default_factory=DataCenterConfig)
    engine: dict = field(default_factory=dict)
    reuse_traces: bool = False

    def as_dict(self) -> dict:
        return {
            "detectors": [[k, list(p)] for k, p in self.detectors],
            "selectors": list(self.selectors),
            "days": [asdict(d) for d in self.days],
            "baselines": list(self.baselines),
            "dc": _dc_dict(self.dc),
            "engine": dict(sorted(self.engine.items())),
            "reuse_traces": self.reuse_traces,
        }


def _dc_dict(dc):
    d = asdict(dc)
    d["host_mips_choices"] = list(dc.host_mips_choices)
    d["vm_mips_choices"] = list(dc.vm_mips_choices)
    return d


def _floats(text, key):
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {text!r}") from None


def _words(text):
    return tuple(t.strip().lower() for t in text.split(",") if t.strip())


def _dc_from_section(section) -> DataCenterConfig:
    kwargs = {}
    types = {f.name: f.type for f in fields(DataCenterConfig)}
    for key, value in section.items():
        if key not in types:
            raise ConfigError(f"unknown datacenter key {key!r}")
        if key.endswith("_choices"):
            kwargs[key] = _floats(value, key)
        elif key in ("n_hosts", "n_vms", "rng_seed"):
            try:
                kwargs[key] = int(value)
            except ValueError:
                raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
        else:
            kwargs[key] = _floats(value, key)[0]
    try:
        return DataCenterConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _engine_from_section(section) -> dict:
    out = {}
    for key, value in section.items():
        if key not in ENGINE_KEYS:
            raise ConfigError(f"unknown engine key {key!r}")
        out[key] = int(value) if key == "horizon_steps" else _floats(value, key)[0]
    return out


def _read(path_or_text) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if isinstance(path_or_text, Path) or os.path.exists(str(path_or_text)):
            with open(path_or_text) as fh:
                parser.read_file(fh)
        else:
            parser.read_string(str(path_or_text))
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    unknown = set(parser.sections()) - {"datacenter", "engine", "grid"}
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    return parser


def load_config(path_or_text) -> tuple[DataCenterConfig, dict]:
    """Data-center and engine settings from a config file (or its text)."""
    parser = _read(path_or_text)
    dc = _dc_from_section(parser["datacenter"]) if parser.has_section("datacenter") else DataCenterConfig()
    engine = _engine_from_section(parser["engine"]) if parser.has_section("engine") else {}
    return dc, engine


def load_grid(path_or_text) -> ExperimentGrid:
    """Read a grid file; see the README for the key set."""
    parser = _read(path_or_text)
    base_dir = Path(path_or_text).parent if os.path.exists(str(path_or_text)) else None
    dc, engine = load_config(path_or_text)
    if not parser.has_section("grid"):
        return ExperimentGrid(dc=dc, engine=engine)
    g = parser["grid"]
    for key in g:
        if key not in DETECTOR_KINDS + ("selectors", "days", "baselines", "synthetic_mean", "reuse_traces"):
            raise ConfigError(f"unknown grid key {key!r}")
    named = [k for k in DETECTOR_KINDS if k in g]
    detectors = tuple((k, _floats(g[k], k)) for k in named) if named else tuple(DEFAULT_GRID.items())
    for kind, params in detectors:
        for p in params:
            try:
                DetectorConfig(kind, p)
            except ValueError as exc:
                raise ConfigError(f"bad detector token {kind}:{p}: {exc}") from None
    selectors = _words(g.get("selectors", ",".join(SELECTOR_KINDS)))
    for s in selectors:
        if s not in SELECTOR_KINDS:
            raise ConfigError(f"unknown selector {s!r}")
    baselines = _words(g.get("baselines", ""))
    for b in baselines:
        if b not in BASELINES:
            raise ConfigError(f"unknown baseline {b!r}")
    mean = _floats(g.get("synthetic_mean", "0.3"), "synthetic_mean")[0]
    days = tuple(DaySpec.parse(t, mean, base_dir) for t in g.get("days", "").split(",") if t.strip())
    return ExperimentGrid(
        detectors, selectors, days, baselines, dc, engine,
        g.getboolean("reuse_traces", fallback=False),
    )


def parse_policy_list(tokens) -> tuple:
    """``["lr:1.2", "lr:1.3", "thr:0.8"]`` -> ``(("lr", (1.2, 1.3)), ("thr", (0.8,)))``."""
    grouped = {}
    for tok in tokens:
        try:
            cfg = DetectorConfig.parse(tok)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        grouped.setdefault(cfg.kind, []).append(cfg.param)
    return tuple((k, tuple(v)) for k, v in grouped.items())


def expand_grid(grid: ExperimentGrid) -> list:
    """Ordered ``(RunKey, SimulationConfig, DaySpec)`` triples.

    Order: detector kind, parameter, selector, day; baselines last.
    """
    if not grid.days:
        raise ConfigError("nothing to run: the grid has no days")
    seed = grid.dc.rng_seed
    runs = []
    for kind, params in grid.detectors:
        for p in params:
            for sel in grid.selectors:
                for day in grid.days:
                    cfg = SimulationConfig(
                        grid.dc, DetectorConfig(kind, p), SelectorConfig(sel, seed),
                        Mode.CONSOLIDATION, **grid.engine,
                    )
                    runs.append((RunKey(cfg.label, day.label, seed), cfg, day))
    for base in grid.baselines:
        for day in grid.days:
            cfg = SimulationConfig(grid.dc, None, None, Mode(base), **grid.engine)
            runs.append((RunKey(cfg.label, day.label, seed), cfg, day))
    if not runs:
        raise ConfigError("nothing to run: the grid expands to zero runs")
    keys = [r[0] for r in runs]
    if len(set(keys)) != len(keys):
        raise ConfigError("grid expands to duplicate run keys")
    return runs


@functools.lru_cache(maxsize=4)
def _day_traces(day: DaySpec, n_vms, n_samples):
    return day.load(n_vms, n_samples)


def execute(key: RunKey, cfg: SimulationConfig, day: DaySpec, reuse=False) -> dict:
    """Run one simulation; failures become an error record."""
    record = {"key": asdict(key), "config_hash": cfg.digest(), "config": cfg.as_dict()}
    try:
        n_samples = cfg.horizon_steps or SAMPLES_PER_DAY
        traces = _day_traces(day, cfg.dc.n_vms, n_samples)
        result = run(cfg, traces, reuse_traces=reuse)
    except Exception as exc:  # noqa: BLE001 - a bad day must not abort the batch
        log.warning("run %s failed: %s", key.slug, exc)
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return record
    record.update(
        status="ok",
        error="",
        metrics=result.report.as_dict(),
        sla_event_pct=result.sla_event_pct,
    )
    return record


def _execute_packed(args):
    return execute(*args)


def run_experiment(grid: ExperimentGrid, jobs=1, store_dir=None) -> list:
    """Execute every run of ``grid``; returns records sorted by run key.

    With ``store_dir`` each record is written to ``runs/<key>.json`` as
    it completes.
    """
    runs = expand_grid(grid)
    store = Path(store_dir) / "runs" if store_dir else None
    if store:
        store.mkdir(parents=True, exist_ok=True)
    records = []

    def keep(rec):
        records.append(rec)
        if store:
            key = RunKey(**rec["key"])
            (store / f"{key.slug}.json").write_text(_dumps(rec))

    packed = [(k, c, d, grid.reuse_traces) for k, c, d in runs]
    if jobs <= 1:
        for args in packed:
            keep(_execute_packed(args))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_execute_packed, args) for args in packed]
            for fut in as_completed(futures):
                keep(fut.result())
    records.sort(key=lambda r: RunKey(**r["key"]))
    if store:
        (Path(store_dir) / "experiment.json").write_text(_dumps(experiment_manifest(grid, runs)))
    return records


def experiment_manifest(grid: ExperimentGrid, runs) -> dict:
    return {
        "grid": grid.as_dict(),
        "runs": [
            {"key": asdict(k), "config_hash": c.digest()} for k, c, _ in sorted(runs, key=lambda r: r[0])
        ],
    }


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def load_store(in_dir) -> tuple[list, dict | None]:
    in_dir = Path(in_dir)
    files = sorted((in_dir / "runs").glob("*.json"))
    if not files:
        raise ConfigError(f"{in_dir}: no run records under runs/")
    records = [json.loads(f.read_text()) for f in files]
    records.sort(key=lambda r: RunKey(**r["key"]))
    manifest = in_dir / "experiment.json"
    return records, json.loads(manifest.read_text()) if manifest.exists() else None


def _fmt(x) -> str:
    return f"{float(x):.6f}"


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def runs_csv(records) -> str:
    rows = []
    for rec in records:
        key = rec["key"]
        if rec["status"] == "ok":
            m = rec["metrics"]
            values = [
                _fmt(m["energy_kwh"]), _fmt(m["sla_violation"]), _fmt(m["components"]["slatah"]),
                _fmt(m["components"]["pdm"]), _fmt(m["esv"]), _fmt(m["migrations"]),
                _fmt(rec["sla_event_pct"]),
            ]
        else:
            values = [""] * 7
        rows.append([key["combo"], key["day"], key["seed"], rec["status"], *values,
                     rec["config_hash"], rec.get("error", "")])
    return _csv(rows, RUN_COLUMNS)


def medians(records) -> dict:
    groups = {}
    for rec in records:
        combo = rec["key"]["combo"]
        groups.setdefault(combo, [])
        if rec["status"] == "ok":
            m = rec["metrics"]
            groups[combo].append(MetricsReport(
                m["energy_kwh"], m["sla_violation"], m["migrations"], m["esv"],
                m["components"]["slatah"], m["components"]["pdm"],
            ))
    return aggregate_median(groups)


def emit_summaries(records, out_dir, manifest=None) -> list:
    """Write runs.csv, the four ``*_median.csv`` files and experiment.json."""
    if not records:
        raise ConfigError("no results to summarize")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create {out_dir}: {exc}") from exc
    written = {"runs.csv": runs_csv(records)}
    med = medians(records)
    for name, metric in FIGURES.items():
        rows = [[label, _fmt(values[metric])] for label, values in sorted(med.items())]
        written[name] = _csv(rows, ("combo_label", "median_value"))
    if manifest is not None:
        written["experiment.json"] = _dumps(manifest)
    for name, text in written.items():
        try:
            (out_dir / name).write_text(text)
        except OSError as exc:
            raise ConfigError(f"cannot write {out_dir / name}: {exc}") from exc
    return sorted(written)


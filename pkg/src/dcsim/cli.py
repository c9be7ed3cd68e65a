"""Command line: ``simulate``, ``experiment`` and ``summarize``.

Exit status is 0 on success, 1 for configuration errors and 2 when some
runs of an experiment failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from dcsim.detection import DetectorConfig
from dcsim.engine import Mode, SimulationConfig, SimulationError, run
from dcsim.experiment import (
    ConfigError,
    emit_summaries,
    experiment_manifest,
    expand_grid,
    load_config,
    load_grid,
    load_store,
    run_experiment,
)
from dcsim.model import DataCenterConfig
from dcsim.selection import SelectorConfig
from dcsim.workload import SAMPLES_PER_DAY, TraceError, generate_synthetic, load_trace_dir

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2

log = logging.getLogger("dcsim")


def _synthetic_spec(text):
    spec = {"seed": 0, "vms": None, "mean": 0.3}
    for part in text.split(","):
        key, sep, value = part.partition("=")
        key = key.strip()
        if not sep or key not in spec:
            raise ConfigError(f"bad --synthetic item {part!r}; expected seed=N,vms=M,mean=U")
        try:
            spec[key] = float(value) if key == "mean" else int(value)
        except ValueError:
            raise ConfigError(f"bad --synthetic value {part!r}") from None
    return spec


def cmd_simulate(args) -> int:
    dc, engine = load_config(args.config) if args.config else (DataCenterConfig(), {})
    mode = Mode(args.mode)
    detector = selector = None
    if mode is Mode.CONSOLIDATION:
        try:
            detector = DetectorConfig.parse(args.policy)
            selector = SelectorConfig.parse(args.selector, dc.rng_seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if args.traces:
        traces = load_trace_dir(args.traces)
    else:
        spec = _synthetic_spec(args.synthetic)
        if spec["vms"]:
            dc = replace(dc, n_vms=spec["vms"])
        steps = engine.get("horizon_steps") or SAMPLES_PER_DAY
        traces = generate_synthetic(spec["seed"], dc.n_vms, steps, spec["mean"])
    cfg = SimulationConfig(dc, detector, selector, mode, **engine)
    result = run(cfg, traces, reuse_traces=args.reuse_traces)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.json").write_text(result.to_json())
    (out / "steps.csv").write_text(result.steps_csv())
    print(
        f"{cfg.label}: energy {result.energy_kwh:.6f} kWh, migrations {result.migration_count}, "
        f"SLATAH {result.slatah:.6f}, PDM {result.pdm:.6f}, SLAV {result.slav:.6f}, ESV {result.esv:.6f}"
    )
    return EXIT_OK


def cmd_experiment(args) -> int:
    grid = load_grid(args.grid)
    runs = expand_grid(grid)
    log.info("%d runs, %d jobs", len(runs), args.jobs)
    records = run_experiment(grid, jobs=args.jobs, store_dir=args.out)
    emit_summaries(records, args.out, experiment_manifest(grid, runs))
    failed = sum(r["status"] != "ok" for r in records)
    print(f"{len(records)} runs, {failed} failed -> {args.out}")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_summarize(args) -> int:
    records, manifest = load_store(args.input)
    emit_summaries(records, args.out, manifest)
    failed = sum(r["status"] != "ok" for r in records)
    print(f"{len(records)} runs summarized -> {args.out}")
    return EXIT_PARTIAL if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcsim", description="Trace-driven simulator for energy-aware VM consolidation."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation")
    p.add_argument("--config", help="config file with [datacenter]/[engine] sections")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--traces", help="directory of PlanetLab-format trace files")
    src.add_argument("--synthetic", help="seed=N,vms=M,mean=U")
    p.add_argument("--mode", choices=[m.value for m in Mode], default="consolidation")
    p.add_argument("--policy", default="lr:1.2", help="overload detector, e.g. thr:0.9, mad:2.5")
    p.add_argument("--selector", default="mmt", choices=["mmt", "rc", "mc"])
    p.add_argument("--reuse-traces", action="store_true", help="allow several VMs per trace")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="run a policy grid over workload days")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("summarize", help="rebuild summary files from a result store")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, SimulationError, TraceError, ValueError) as exc:
        print(f"dcsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Trace-driven simulator for energy-aware dynamic VM consolidation."""

from dcsim.model import (
    DataCenterConfig,
    HostSpec,
    PowerModel,
    VmSpec,
    can_fit,
    host_cpu_utilization,
    power_draw,
)
from dcsim.workload import (
    TraceError,
    TraceSet,
    UtilizationTrace,
    assign_traces,
    generate_synthetic,
    load_trace_dir,
    parse_trace_file,
)
from dcsim.detection import (
    DetectorConfig,
    dynamic_threshold,
    iqr,
    is_overloaded,
    loess_predict,
    mad,
    robust_loess_predict,
)
from dcsim.selection import SelectorConfig, select_mc, select_mmt, select_rc
from dcsim.engine import SimulationConfig, SimulationResult, Simulation, run
from dcsim.metrics import MetricsReport, aggregate_median, esv, pdm, slatah, slav

__version__ = "0.1.0"

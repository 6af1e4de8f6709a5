"""Config loading, grid execution, persistence and reporting."""

from .config import ExperimentConfig, GateConfig, load_config, read_config
from .report import emit_report, read_records, render_table
from .runner import RunResult, run_grid
from .store import ResultStore

__all__ = [
    "ExperimentConfig",
    "GateConfig",
    "ResultStore",
    "RunResult",
    "emit_report",
    "load_config",
    "read_config",
    "read_records",
    "render_table",
    "run_grid",
]

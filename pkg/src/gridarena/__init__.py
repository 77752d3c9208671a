"""Grid-replay benchmarking harness for sequential hyperparameter
optimization engines."""

from .driver import Protocol, RunRecord, budget_for, rank_sequence, run
from .engines import EngineConfig, Exhausted, make_engine
from .grid import Arm, GridError, GridSpec
from .table import (
    CV,
    LandscapeSpec,
    ScoreTable,
    load_table,
    save_table,
    synth_table,
)

__all__ = [
    "Arm",
    "CV",
    "EngineConfig",
    "Exhausted",
    "GridError",
    "GridSpec",
    "LandscapeSpec",
    "Protocol",
    "RunRecord",
    "ScoreTable",
    "budget_for",
    "load_table",
    "make_engine",
    "rank_sequence",
    "run",
    "save_table",
    "synth_table",
]

__version__ = "0.1.0"

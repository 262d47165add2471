"""Continual-learning replay-memory experiments.

Dict-level convenience wrappers around the compiled `_gpsim` module, which
speaks JSON strings. Configs follow the same schema as the CLI's JSON files.
"""

import json

from ._gpsim import (
    ConfigError,
    ContractError,
    Error,
    IngestError,
    NumericError,
    __version__,
    methods,
)
from . import _gpsim

__all__ = [
    "ConfigError",
    "ContractError",
    "Error",
    "IngestError",
    "NumericError",
    "__version__",
    "diagnose_difficulty",
    "diagnose_zeroshot",
    "methods",
    "render_report",
    "report_curves_csv",
    "run",
    "sweep",
    "validate_result",
]


def run(config, method=None, data_root=None):
    """Run an experiment from a config dict; returns the result dict.

    `method` overrides the config's method ("er-res", "gps", "oracle", ...).
    """
    return json.loads(_gpsim.run(json.dumps(config), method or "", data_root or ""))


def sweep(config, tasks, data_root=None):
    """Full switching-point objective profiles for the given 1-based tasks."""
    return json.loads(_gpsim.sweep(json.dumps(config), list(tasks), data_root or ""))


def diagnose_difficulty(config, data_root=None):
    """Per-task end-to-end accuracy and its variance across tasks."""
    return json.loads(_gpsim.diagnose_difficulty(json.dumps(config), data_root or ""))


def diagnose_zeroshot(config, data_root=None):
    """Zero-shot transfer from the first task to real and pseudo tasks."""
    return json.loads(_gpsim.diagnose_zeroshot(json.dumps(config), data_root or ""))


def render_report(results):
    """Text comparison table for result dicts from one benchmark."""
    return _gpsim.render_report([json.dumps(r) for r in results])


def report_curves_csv(results):
    """Long-format per-task accuracy curves (CSV) for result dicts."""
    return _gpsim.report_curves_csv([json.dumps(r) for r in results])


def validate_result(result):
    """Validate a result dict (schema, shapes, averages); returns it normalized."""
    return json.loads(_gpsim.validate_result(json.dumps(result)))

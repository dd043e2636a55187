"""Python access to the stnscm forecaster core.

Settings are plain dicts of config keys, the same keys the CLI accepts
with --set; values are converted with str().
"""

import json

import numpy as np

from ._core import (
    AlignmentError,
    ConfigError,
    DegenerateInputError,
    DimensionError,
    Error,
    IoError,
    NumericError,
    ValidationError,
    build_graphs,
    gradcheck,
    oracle_effect,
    synth_generate,
)
from ._core import compute_metrics as _compute_metrics
from ._core import train as _train

__all__ = [
    "AlignmentError",
    "ConfigError",
    "DegenerateInputError",
    "DimensionError",
    "Error",
    "IoError",
    "NumericError",
    "ValidationError",
    "build_graphs",
    "compute_metrics",
    "gradcheck",
    "oracle_effect",
    "synth_generate",
    "train",
]


def compute_metrics(pred, truth, mape_threshold=1.0):
    pred = np.ascontiguousarray(pred, dtype=np.float64)
    truth = np.ascontiguousarray(truth, dtype=np.float64)
    return _compute_metrics(pred, truth, mape_threshold)


def train(settings):
    result = _train(settings)
    result["metrics"] = json.loads(result.pop("metrics_json"))
    return result

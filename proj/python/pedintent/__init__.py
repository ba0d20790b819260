"""Multi-modal pedestrian crossing-intention prediction."""

import json as _json

from ._core import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    Error,
    Model,
    NumericalError,
    Windows,
    auc,
    auc_oracle,
    class_weights,
    evaluate,
    gradcheck,
    model_spec_json,
    named_configs,
    run_cli,
    synthetic_windows,
    weighted_bce,
)


def model_spec(spec):
    """Expanded model spec as a dict; `spec` is a preset name or a dict."""
    return _json.loads(model_spec_json(spec if isinstance(spec, str) else _json.dumps(spec)))


def build_model(spec):
    return Model(spec if isinstance(spec, str) else _json.dumps(spec))


def train(model, train_windows, val_windows=None, **config):
    """Trains in place; keyword arguments are TrainConfig fields."""
    return model.train(train_windows, val_windows, _json.dumps(config))


__all__ = [
    "ConfigError", "ContractError", "DataError", "DimensionError", "Error", "Model", "NumericalError", "Windows",
    "auc", "auc_oracle", "build_model", "class_weights", "evaluate", "gradcheck", "model_spec", "model_spec_json",
    "named_configs", "run_cli", "synthetic_windows", "train", "weighted_bce",
]

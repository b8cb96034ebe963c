"""Regression models for MOS prediction: OLS baseline and a bagged CART forest."""

import numpy as np

from ..errors import FeatureMismatch
from ._backend import DEFAULT as BACKEND, available as available_backends
from .forest import ForestModel, ForestParams, Tree, fit_forest, fit_tree
from .linear import LinearModel, fit_linear
from .metrics import EvalMetrics, evaluate, minmax_normalize, rmse_from_mse


def predict(model, rows):
    """Predict MOS for a FeatureMatrix (names checked) or a bare 2-D array."""
    names = getattr(rows, "feature_names", None)
    X = rows.X if names is not None else np.asarray(rows, dtype=np.float64)
    if names is not None and tuple(names) != tuple(model.feature_names):
        raise FeatureMismatch(f"model expects {list(model.feature_names)}, got {list(names)}")
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise FeatureMismatch(f"expected {len(model.feature_names)} feature columns")
    return model.predict(X)


__all__ = [
    "BACKEND", "EvalMetrics", "ForestModel", "ForestParams", "LinearModel", "Tree",
    "available_backends", "evaluate", "fit_forest", "fit_linear", "fit_tree",
    "minmax_normalize", "predict", "rmse_from_mse",
]

"""Regression metrics: MSE, RMSE, R^2 and MAE."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import LengthMismatch


@dataclass(frozen=True)
class EvalMetrics:
    mse: float
    rmse: float
    r2: float
    mae: float
    degenerate_target: bool = False

    def to_dict(self) -> dict:
        doc = asdict(self)
        if not self.degenerate_target:
            del doc["degenerate_target"]
        else:
            doc["r2"] = None
        return doc


def rmse_from_mse(mse: float) -> float:
    return math.sqrt(mse)


def evaluate(predictions, targets) -> EvalMetrics:
    """Score predictions against targets.

    R^2 uses the mean of ``targets``; when the targets are constant it is
    undefined, reported as NaN with ``degenerate_target=True``.
    """
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.size} predictions for {t.size} targets")
    if p.size == 0:
        raise LengthMismatch("cannot evaluate zero predictions")
    resid = t - p
    ss_res = float(np.sum(resid * resid))
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    mse = ss_res / t.size
    degenerate = ss_tot == 0.0
    r2 = math.nan if degenerate else 1.0 - ss_res / ss_tot
    return EvalMetrics(mse=mse, rmse=rmse_from_mse(mse), r2=r2,
                       mae=float(np.mean(np.abs(resid))), degenerate_target=degenerate)


def minmax_normalize(values, lo: float, hi: float) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)

"""Ordinary least squares baseline."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import SingularDesign

MOS_MIN, MOS_MAX = 1.0, 5.0
RIDGE_ALPHA = 1e-8


@dataclass
class LinearModel:
    coefficients: np.ndarray
    intercept: float
    feature_names: tuple
    normalization: Optional[object] = None
    ridge: bool = False
    clamp_events: int = field(default=0, compare=False)

    def predict_raw(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.coefficients + self.intercept

    def predict(self, X) -> np.ndarray:
        """Clamp to [1, 5]; every clipped value bumps ``clamp_events``."""
        raw = self.predict_raw(X)
        self.clamp_events += int(np.count_nonzero((raw < MOS_MIN) | (raw > MOS_MAX)))
        return np.clip(raw, MOS_MIN, MOS_MAX)

    def to_dict(self) -> dict:
        return {
            "kind": "linear",
            "version": 1,
            "feature_names": list(self.feature_names),
            "coefficients": [float(c) for c in self.coefficients],
            "intercept": float(self.intercept),
            "ridge": self.ridge,
            "normalization": self.normalization.to_dict() if self.normalization is not None else None,
        }

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearModel":
        from ..feature_lab import Normalization

        norm = doc.get("normalization")
        return cls(np.asarray(doc["coefficients"], dtype=np.float64), float(doc["intercept"]),
                   tuple(doc["feature_names"]), Normalization.from_dict(norm) if norm else None,
                   bool(doc.get("ridge", False)))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LinearModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_linear(train, ridge_fallback: bool = False,
               feature_names: Optional[Sequence[str]] = None) -> LinearModel:
    """Least-squares fit with intercept.

    A rank-deficient design raises :class:`SingularDesign` unless
    ``ridge_fallback`` is set, in which case a tiny ridge penalty (not
    applied to the intercept) makes the system solvable.
    """
    if isinstance(train, tuple):
        X, y = train
        normalization = None
    else:
        X, y = train.X, train.y
        feature_names = train.feature_names
        normalization = train.normalization
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if feature_names is None:
        feature_names = tuple(f"x{j}" for j in range(p))
    design = np.hstack([X, np.ones((n, 1))])
    rank = np.linalg.matrix_rank(design)
    ridge = False
    if rank < p + 1:
        if not ridge_fallback:
            raise SingularDesign(f"design matrix has rank {rank} < {p + 1} (n={n}, p={p})")
        penalty = RIDGE_ALPHA * np.eye(p + 1)
        penalty[-1, -1] = 0.0
        scale = max(1.0, float(np.abs(design).max()) ** 2)
        beta = np.linalg.solve(design.T @ design + scale * penalty, design.T @ y)
        ridge = True
    else:
        beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return LinearModel(beta[:-1].copy(), float(beta[-1]), tuple(feature_names), normalization, ridge)

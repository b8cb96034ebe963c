"""Model features derived from the five network KPIs."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dataset_store import CleanDataset, SessionRecord
from .errors import FeatureMismatch, NotCleaned, TooFewRows

BASE_FEATURES = ("delay", "bitrate", "jitter", "throughput", "packet_loss")
ENGINEERED_FEATURES = ("log_delay", "log_bitrate", "thr_x_jitter", "delay_x_jitter",
                       "packet_loss_sq", "loss_rate")
ALL_FEATURES = BASE_FEATURES + ENGINEERED_FEATURES

# keeps the bitrate/loss ratio finite on loss-free sessions (loss is in percent)
LOSS_RATE_EPSILON = 1.0
MIN_SPLIT_ROWS = 5


@dataclass(frozen=True)
class FeatureVector:
    delay: float
    bitrate: float
    jitter: float
    throughput: float
    packet_loss: float
    log_delay: float
    log_bitrate: float
    thr_x_jitter: float
    delay_x_jitter: float
    packet_loss_sq: float
    loss_rate: float

    def as_tuple(self, names: Sequence[str] = ALL_FEATURES) -> tuple:
        return tuple(getattr(self, n) for n in names)


def engineer_kpis(delay: float, bitrate: float, jitter: float, throughput: float,
                  packet_loss: float) -> FeatureVector:
    """Expand one KPI tuple (ms, kbps, ms, bps, percent) into the full vector."""
    if delay <= 0 or bitrate <= 0:
        raise NotCleaned(
            f"delay={delay}, bitrate={bitrate}: rows with delay of 0 or -1000 and "
            "zero bitrate are dropped during cleaning and cannot be scored")
    return FeatureVector(
        delay=delay, bitrate=bitrate, jitter=jitter, throughput=throughput,
        packet_loss=packet_loss,
        log_delay=math.log(delay),
        log_bitrate=math.log(bitrate),
        thr_x_jitter=throughput * jitter,
        delay_x_jitter=delay * jitter,
        packet_loss_sq=packet_loss * packet_loss,
        loss_rate=bitrate / (packet_loss + LOSS_RATE_EPSILON),
    )


def kpis_of(rec: SessionRecord) -> tuple:
    return (float(rec.delay_ms), float(rec.bitrate_kbps), float(rec.jitter_ms),
            float(rec.throughput_bps), rec.loss_pct)


@dataclass
class Normalization:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # True where std == 0; those columns are passed through

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = X.copy()
        keep = ~self.constant
        out[:, keep] = (X[:, keep] - self.mean[keep]) / self.std[keep]
        return out

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Normalization":
        return cls(np.asarray(doc["mean"], dtype=np.float64),
                   np.asarray(doc["std"], dtype=np.float64),
                   np.asarray(doc["constant"], dtype=bool))


@dataclass
class FeatureMatrix:
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = ALL_FEATURES
    normalization: Optional[Normalization] = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.feature_names = tuple(self.feature_names)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"X {self.X.shape} and y {self.y.shape} disagree")
        if self.X.shape[1] != len(self.feature_names):
            raise FeatureMismatch(f"{self.X.shape[1]} columns for {len(self.feature_names)} names")
        if np.isnan(self.X).any() or np.isnan(self.y).any():
            raise ValueError("feature matrix contains missing values")

    def __len__(self):
        return self.X.shape[0]

    @property
    def rows(self) -> list:
        return [dict(zip(self.feature_names, r)) for r in self.X.tolist()]

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        idx = [self.feature_names.index(n) for n in names]
        return FeatureMatrix(self.X[:, idx], self.y, tuple(names))

    def take(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.X[idx], self.y[idx], self.feature_names, self.normalization)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(",".join((*self.feature_names, "mos")) + "\n")
        for row, target in zip(self.X.tolist(), self.y.tolist()):
            out.write(",".join(repr(v) for v in (*row, target)) + "\n")
        return out.getvalue()

    def scatter_series(self) -> str:
        """Long-format ``feature,value,mos`` table, one row per point."""
        out = io.StringIO()
        out.write("feature,value,mos\n")
        for j, name in enumerate(self.feature_names):
            for v, t in zip(self.X[:, j].tolist(), self.y.tolist()):
                out.write(f"{name},{v!r},{t!r}\n")
        return out.getvalue()


def engineer(data) -> FeatureMatrix:
    """Build the 11-column matrix (5 base KPIs + 6 derived) from cleaned records."""
    records = data.records if isinstance(data, CleanDataset) else list(data)
    rows, target = [], []
    for rec in records:
        if rec.jitter_ms < 1:
            raise NotCleaned(f"jitter {rec.jitter_ms} < 1; run clean() first")
        rows.append(engineer_kpis(*kpis_of(rec)).as_tuple())
        target.append(rec.mos)
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(ALL_FEATURES))
    return FeatureMatrix(X, np.array(target, dtype=np.float64), ALL_FEATURES)


def split(matrix: FeatureMatrix, test_fraction: float = 0.2, seed: int = 0):
    """Seeded shuffle, then the first ``round(fraction * N)`` rows go to test."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(matrix)
    if n < MIN_SPLIT_ROWS:
        raise TooFewRows(f"{n} rows; need at least {MIN_SPLIT_ROWS} to split")
    n_test = int(math.floor(test_fraction * n + 0.5))
    n_test = min(max(n_test, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return matrix.take(np.sort(perm[n_test:])), matrix.take(np.sort(perm[:n_test]))


def standardize(train: FeatureMatrix, test: FeatureMatrix):
    """Z-score both sets with statistics from ``train`` only."""
    if len(train) == 0:
        raise TooFewRows("cannot standardize an empty training set")
    if test.feature_names != train.feature_names:
        raise FeatureMismatch("train and test feature names differ")
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    constant = std == 0
    norm = Normalization(np.where(constant, 0.0, mean), np.where(constant, 1.0, std), constant)
    train_t = FeatureMatrix(norm.apply(train.X), train.y, train.feature_names, norm)
    test_t = FeatureMatrix(norm.apply(test.X), test.y, test.feature_names, norm)
    return train_t, test_t, norm

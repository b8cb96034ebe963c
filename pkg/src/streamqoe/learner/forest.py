"""Bagged CART regression forest.

Each tree sees a bootstrap resample of the rows and, at every split, a
fresh subset of ``ceil(max_features_fraction * n_features)`` features.
Splits minimise the summed squared error of the two children; cut
points are midpoints between consecutive distinct values. Ties go to
the lowest feature index, then the lowest threshold.

Tree ``i`` draws all of its randomness from ``SeedSequence([seed, i])``,
so trees can be grown in any order and still match a serial run.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from ..errors import EmptyTrain, FeatureMismatch
from . import _backend

MOS_MIN, MOS_MAX = 1.0, 5.0
UNLIMITED_DEPTH = 2**31 - 1

FILE_MAGIC = b"SQOEFRST"
FILE_VERSION = 1
_ARRAYS = (("feature", "<i8"), ("threshold", "<f8"), ("left", "<i8"),
           ("right", "<i8"), ("value", "<f8"), ("n_samples", "<i8"))


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 600
    max_depth: Optional[int] = 48
    max_features_fraction: float = 0.58
    min_samples_leaf: int = 1
    seed: int = 0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be positive")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative")
        if not 0 < self.max_features_fraction <= 1:
            raise ValueError("max_features_fraction must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be at least 1")

    def n_candidates(self, n_features: int) -> int:
        # the epsilon absorbs products like 0.1 * 30 = 3.0000000000000004
        k = math.ceil(self.max_features_fraction * n_features - 1e-9)
        return min(max(k, 1), n_features)


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):  # preorder: parents precede children
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def predict(self, X: np.ndarray, backend: Optional[str] = None) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _backend.kernel(backend).predict_tree(
            X, self.feature, self.threshold, self.left, self.right, self.value)

    def to_nested(self, node: int = 0) -> dict:
        """Nested ``split``/``leaf`` dictionaries, for inspection and JSON export."""
        if self.feature[node] < 0:
            return {"leaf": {"value": float(self.value[node]), "n": int(self.n_samples[node])}}
        return {"split": {
            "feature_index": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "left": self.to_nested(int(self.left[node])),
            "right": self.to_nested(int(self.right[node])),
        }}

    @classmethod
    def constant(cls, value: float, n: int = 1) -> "Tree":
        return cls(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                   np.array([float(value)]), np.array([n]))


@dataclass
class ForestModel:
    trees: list
    params: ForestParams
    feature_names: tuple
    normalization: Optional[object] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_estimators(self) -> int:
        return len(self.trees)

    def predict_raw(self, X, backend: Optional[str] = None) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        total = np.zeros(X.shape[0], dtype=np.float64)
        lo = np.full(X.shape[0], np.inf)
        hi = np.full(X.shape[0], -np.inf)
        for tree in self.trees:
            p = tree.predict(X, backend)
            total += p
            np.minimum(lo, p, out=lo)
            np.maximum(hi, p, out=hi)
        # unanimous trees return their shared value exactly, free of summation error
        return np.where(lo == hi, lo, total / len(self.trees))

    def predict(self, X, backend: Optional[str] = None) -> np.ndarray:
        """Mean tree prediction, clamped to the MOS range."""
        return np.clip(self.predict_raw(X, backend), MOS_MIN, MOS_MAX)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(dumps_forest(self))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ForestModel":
        return loads_forest(Path(path).read_bytes())


def tree_seeds(seed: int, tree_index: int):
    """Bootstrap generator and kernel RNG state for one tree."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, tree_index])
    rng = np.random.default_rng(ss)
    kernel_state = int(ss.generate_state(1, dtype=np.uint64)[0])
    return rng, kernel_state


def fit_tree(X: np.ndarray, y: np.ndarray, params: ForestParams, tree_index: int = 0,
             backend: Optional[str] = None) -> Tree:
    n_rows, n_features = X.shape
    rng, state = tree_seeds(params.seed, tree_index)
    if params.bootstrap:
        samples = rng.integers(0, n_rows, size=n_rows, dtype=np.int64)
    else:
        samples = np.arange(n_rows, dtype=np.int64)
    max_depth = UNLIMITED_DEPTH if params.max_depth is None else params.max_depth
    arrays = _backend.kernel(backend).build_tree(
        X, y, samples, max_depth, params.min_samples_leaf,
        params.n_candidates(n_features), state)
    return Tree(*arrays)


def fit_forest(train, params: ForestParams = ForestParams(), backend: Optional[str] = None,
               feature_names: Optional[Sequence[str]] = None) -> ForestModel:
    """Grow ``params.n_estimators`` trees on a FeatureMatrix (or an ``(X, y)`` pair)."""
    if isinstance(train, tuple):
        X, y = train
        normalization = None
    else:
        X, y = train.X, train.y
        feature_names = train.feature_names
        normalization = train.normalization
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyTrain("training set has no rows")
    if feature_names is None:
        feature_names = tuple(f"x{j}" for j in range(X.shape[1]))
    trees = [fit_tree(X, y, params, i, backend) for i in range(params.n_estimators)]
    return ForestModel(trees, params, tuple(feature_names), normalization)


def check_features(model_names: Sequence[str], given: Sequence[str]) -> None:
    if tuple(model_names) != tuple(given):
        raise FeatureMismatch(f"model expects {list(model_names)}, got {list(given)}")


def dumps_forest(model: ForestModel) -> bytes:
    """Versioned binary form: magic, version, JSON header, raw little-endian arrays."""
    header = {
        "params": asdict(model.params),
        "feature_names": list(model.feature_names),
        "node_counts": [t.n_nodes for t in model.trees],
        "arrays": [name for name, _ in _ARRAYS],
        "normalization": model.normalization.to_dict() if model.normalization is not None else None,
        "meta": model.meta,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [FILE_MAGIC, struct.pack("<II", FILE_VERSION, len(head)), head]
    for name, dtype in _ARRAYS:
        chunks.append(b"".join(np.asarray(getattr(t, name), dtype=dtype).tobytes()
                               for t in model.trees))
    return b"".join(chunks)


def loads_forest(blob: bytes) -> ForestModel:
    from ..feature_lab import Normalization

    if not blob.startswith(FILE_MAGIC):
        raise ValueError("not a streamqoe forest file")
    offset = len(FILE_MAGIC)
    version, head_len = struct.unpack_from("<II", blob, offset)
    if version != FILE_VERSION:
        raise ValueError(f"unsupported forest file version {version}")
    offset += 8
    header = json.loads(blob[offset:offset + head_len])
    offset += head_len
    counts = header["node_counts"]
    total = sum(counts)
    columns = {}
    for name, dtype in _ARRAYS:
        arr = np.frombuffer(blob, dtype=dtype, count=total, offset=offset)
        offset += arr.nbytes
        columns[name] = arr.astype(np.int64 if dtype == "<i8" else np.float64)
    trees = []
    start = 0
    for n in counts:
        trees.append(Tree(*(np.ascontiguousarray(columns[name][start:start + n])
                            for name, _ in _ARRAYS)))
        start += n
    norm = header["normalization"]
    return ForestModel(trees, ForestParams(**header["params"]), tuple(header["feature_names"]),
                       Normalization.from_dict(norm) if norm else None, header.get("meta", {}))

"""End-to-end pipeline steps shared by the CLI: ingest, synthesize, train, predict."""

from __future__ import annotations

import json
import logging
import os
import tempfile
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dataset_store as ds
from .feature_lab import ALL_FEATURES, BASE_FEATURES, engineer, engineer_kpis, split, standardize
from .har_ingest import DEFAULT_SEGMENT_DURATION_MS, DEFAULT_SEGMENT_PATTERN, build_capture
from .learner import ForestModel, ForestParams, LinearModel, evaluate, fit_forest, fit_linear
from .learner.forest import FILE_MAGIC
from .learner.metrics import minmax_normalize
from .net_emulator import NetworkProfile, parse_profiles, simulate_session
from .quality_model import (ScorerConfig, SegmentMedia, mode0_input, mos_from_scores,
                            score_external, score_surrogate)
from .stall_engine import detect_stalls_timeline, format_stalling_string

log = logging.getLogger(__name__)

# (height, width, bitrate kbps, fps): synthetic rungs spanning 146p-720p, 150-820 kbps
MEDIA_LADDER = (
    (146, 264, 150, 24.0),
    (240, 426, 270, 25.0),
    (360, 640, 410, 30.0),
    (480, 854, 550, 30.0),
    (480, 854, 710, 30.0),
    (720, 1280, 820, 30.0),
)

ENV_OUTPUT_DIR = "STREAMQOE_OUTPUT_DIR"
ENV_EXTERNAL_SCORER = "STREAMQOE_EXTERNAL_SCORER"


def derive_seed(seed: int, purpose: str, *index: int) -> int:
    """Independent 63-bit seed for one (purpose, index...) stream."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(purpose.encode()), *index])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass
class PipelineConfig:
    seed: int = 0
    test_fraction: float = 0.2
    n_estimators: int = 600
    max_depth: Optional[int] = 48
    max_features: float = 0.58
    min_samples_leaf: int = 1
    segment_duration_ms: int = DEFAULT_SEGMENT_DURATION_MS
    session_duration_s: int = 40
    segment_pattern: str = DEFAULT_SEGMENT_PATTERN
    output_dir: str = "."
    scorer_backend: str = "surrogate"
    scorer_mode: int = 0
    external_command: Optional[str] = None
    use_average: bool = False
    scorer_timeout_s: float = 120.0

    @property
    def scorer(self) -> ScorerConfig:
        return ScorerConfig(mode=self.scorer_mode, backend=self.scorer_backend,
                            external_command=self.external_command,
                            use_average=self.use_average, timeout_s=self.scorer_timeout_s)

    def forest_params(self) -> ForestParams:
        return ForestParams(n_estimators=self.n_estimators, max_depth=self.max_depth,
                            max_features_fraction=self.max_features,
                            min_samples_leaf=self.min_samples_leaf,
                            seed=derive_seed(self.seed, "forest"))

    def updated(self, **overrides) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def _coerce(kind, text: str):
    text = text.strip()
    if kind is bool:
        return text.lower() in ("1", "true", "yes", "on")
    if text.lower() in ("none", ""):
        return None
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


_FIELD_TYPES = {
    "seed": int, "test_fraction": float, "n_estimators": int, "max_depth": int,
    "max_features": float, "min_samples_leaf": int, "segment_duration_ms": int,
    "session_duration_s": int, "segment_pattern": str, "output_dir": str,
    "scorer_backend": str, "scorer_mode": int, "external_command": str,
    "use_average": bool, "scorer_timeout_s": float,
}


def parse_config(text: str) -> dict:
    """``key = value`` lines; lines starting with ``#`` are comments. Unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[key] = _coerce(_FIELD_TYPES[key], value)
    return values


def load_config(path: Optional[str] = None, environ=os.environ) -> PipelineConfig:
    """Defaults, then the config file, then environment overrides."""
    cfg = PipelineConfig()
    if path:
        cfg = replace(cfg, **parse_config(Path(path).read_text(encoding="utf-8")))
    if environ.get(ENV_OUTPUT_DIR):
        cfg = replace(cfg, output_dir=environ[ENV_OUTPUT_DIR])
    if environ.get(ENV_EXTERNAL_SCORER):
        cfg = replace(cfg, external_command=environ[ENV_EXTERNAL_SCORER], scorer_backend="external")
    return cfg


def write_atomic(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, bytes):
        tmp.write_bytes(data)
    else:
        tmp.write_text(data, encoding="utf-8", newline="")
    tmp.replace(path)


# -- ingest -----------------------------------------------------------------

def ingest_file(har_path: Path, cfg: PipelineConfig, durations=None):
    raw = Path(har_path).read_bytes()
    capture = build_capture(raw, cfg.segment_pattern,
                            durations if durations is not None else cfg.segment_duration_ms,
                            source=Path(har_path).name)
    report = detect_stalls_timeline(capture.segments, capture.startup_ms)
    capture.stalls = [tuple(ev) for ev in report.events]
    return capture, report


# -- synthesize -------------------------------------------------------------

def session_media(rung: int, cfg: PipelineConfig) -> list:
    height, width, kbps, fps = MEDIA_LADDER[rung]
    seg_s = cfg.segment_duration_ms / 1000
    total = float(cfg.session_duration_s)
    media = []
    while total > 1e-9:
        d = min(seg_s, total)
        media.append(SegmentMedia(kbps, width, height, fps, d))
        total -= d
    return media


def _score(media, report, cfg: PipelineConfig):
    if cfg.scorer_backend == "surrogate":
        return score_surrogate(media, report)
    with tempfile.TemporaryDirectory() as tmp:
        spec = Path(tmp) / "mode0.json"
        spec.write_text(json.dumps(mode0_input(media, report)))
        return score_external([spec], cfg.scorer)


def synthesize_session(profile: NetworkProfile, rung: int, seed: int, cfg: PipelineConfig,
                       extras: Optional[dict] = None) -> ds.SessionRecord:
    media = session_media(rung, cfg)
    timings, kpis = simulate_session(profile, media, seed)
    report = detect_stalls_timeline(timings)
    mos = mos_from_scores(_score(media, report, cfg))
    stall_ms = int(round(report.total_s * 1000))
    height, width, _, fps = MEDIA_LADDER[rung]
    return ds.SessionRecord(
        mos_x100=ds.encode_mos(mos),
        loss_x100=ds.encode_scaled(kpis.packet_loss_pct),
        jitter_ms=int(round(kpis.jitter_ms)),
        delay_ms=int(round(kpis.delay_ms)),
        bitrate_kbps=int(round(kpis.bitrate_kbps)),
        throughput_bps=int(round(kpis.throughput_bps)),
        rebuffering_ms=stall_ms,
        buffering_ms=report.startup_ms + stall_ms,
        framerate_x100=ds.encode_scaled(fps),
        duration_ms=sum(t.duration_ms for t in timings),
        stalling=format_stalling_string(report.events),
        vheight=height,
        vwidth=width,
        startup_ms=report.startup_ms,
        extras=dict(extras or {}),
    )


def synthesize(profiles: Sequence[NetworkProfile], n_sessions: int, cfg: PipelineConfig) -> list:
    records = []
    for p_idx, profile in enumerate(profiles):
        for s_idx in range(n_sessions):
            rung_rng = np.random.default_rng(derive_seed(cfg.seed, "ladder", p_idx, s_idx))
            rung = int(rung_rng.integers(len(MEDIA_LADDER)))
            records.append(synthesize_session(
                profile, rung, derive_seed(cfg.seed, "session", p_idx, s_idx), cfg,
                extras={"profile": profile.name, "session": str(s_idx)}))
    return records


def synthesize_from_file(profile_path, n_sessions: int, cfg: PipelineConfig) -> list:
    profiles = parse_profiles(Path(profile_path).read_text(encoding="utf-8"))
    return synthesize(profiles, n_sessions, cfg)


# -- train ------------------------------------------------------------------

@dataclass
class TrainResult:
    baseline: LinearModel
    enhanced: ForestModel
    metrics: dict
    report_csv: str = field(repr=False, default="")


def _metrics_block(name, features, preds, targets, lo, hi, extra=None) -> dict:
    raw = evaluate(preds, targets)
    norm = evaluate(minmax_normalize(preds, lo, hi), minmax_normalize(targets, lo, hi))
    doc = {"model": name, "features": list(features), **raw.to_dict(), "normalized": norm.to_dict()}
    doc.update(extra or {})
    return doc


def comparison_csv(models: Sequence[dict]) -> str:
    lines = ["model,R2,MSE,RMSE,MAE"]
    for m in models:
        r2 = "" if m["r2"] is None else repr(m["r2"])
        lines.append(f"{m['model']},{r2},{m['mse']!r},{m['rmse']!r},{m['mae']!r}")
    return "\n".join(lines) + "\n"


def train(records: Sequence[ds.SessionRecord], cfg: PipelineConfig, dataset_name: str = "",
          backend: Optional[str] = None) -> TrainResult:
    cleaned = ds.clean(records)
    matrix = engineer(cleaned)
    train_m, test_m = split(matrix, cfg.test_fraction, derive_seed(cfg.seed, "split"))
    train_s, test_s, _ = standardize(train_m, test_m)

    baseline = fit_linear(train_s.select(BASE_FEATURES), ridge_fallback=True)
    baseline.normalization = _subset_norm(train_s.normalization, BASE_FEATURES)
    enhanced = fit_forest(train_s, cfg.forest_params(), backend=backend)
    enhanced.meta = {"seed": cfg.seed, "dataset": dataset_name}

    lo, hi = float(train_m.y.min()), float(train_m.y.max())
    base_pred = baseline.predict(test_s.select(BASE_FEATURES).X)
    enh_pred = enhanced.predict(test_s.X)
    models = [
        _metrics_block("linear_regression_baseline", BASE_FEATURES, base_pred, test_s.y, lo, hi,
                       {"clamp_events": baseline.clamp_events}),
        _metrics_block("random_forest_enhanced", ALL_FEATURES, enh_pred, test_s.y, lo, hi),
    ]
    metrics = {
        "seed": cfg.seed,
        "dataset": dataset_name,
        "provenance": cleaned.provenance,
        "rows": {"retained": len(cleaned.records), "train": len(train_m), "test": len(test_m)},
        "forest_params": {"n_estimators": cfg.n_estimators, "max_depth": cfg.max_depth,
                          "max_features": cfg.max_features,
                          "min_samples_leaf": cfg.min_samples_leaf},
        "normalized_target_range": [lo, hi],
        "models": models,
    }
    return TrainResult(baseline, enhanced, metrics, comparison_csv(models))


def _subset_norm(norm, names):
    from .feature_lab import Normalization

    idx = [ALL_FEATURES.index(n) for n in names]
    return Normalization(norm.mean[idx], norm.std[idx], norm.constant[idx])


def dumps_metrics(metrics: dict) -> str:
    return json.dumps(metrics, indent=2, sort_keys=True) + "\n"


# -- predict ----------------------------------------------------------------

def load_model(path):
    blob = Path(path).read_bytes()
    if blob.startswith(FILE_MAGIC):
        from .learner.forest import loads_forest
        return loads_forest(blob)
    return LinearModel.from_dict(json.loads(blob))


def predict_kpis(model, delay: float, jitter: float, packet_loss: float, bitrate: float,
                 throughput: float) -> float:
    """MOS for one KPI tuple (ms, ms, percent, kbps, bps)."""
    vec = engineer_kpis(delay, bitrate, jitter, throughput, packet_loss)
    row = np.array([vec.as_tuple(model.feature_names)], dtype=np.float64)
    if model.normalization is not None:
        row = model.normalization.apply(row)
    return float(model.predict(row)[0])

"""P.1203-compatible quality scores.

Two backends share one output type:

* ``surrogate``: a small closed-form Mode 0 model driven by segment
  metadata and stalls. It is *not* the ITU reference algorithm. It keeps
  the reference output keys and the [1, 5] range, so the pipeline runs
  without the reference software installed.
* ``external``: runs a reference implementation as a subprocess and
  parses its JSON report (keys ``O21`` ... ``O46``, ``mode``, ``streamId``).
"""

from __future__ import annotations

import json
import math
import os
import shlex
import subprocess
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .errors import ExternalToolFailure, SchemaMismatch, UnsupportedMode
from .stall_engine import StallReport

SUPPORTED_VIDEO_CODECS = ("h264",)
AUDIO_CODEC_SCORES = {"aac_lc": 4.6, "he_aac": 4.2, "mp2": 4.0, "ac3": 4.4}

# Surrogate constants. Changing any of these breaks the golden tests on purpose.
BITRATE_KNEE_KBPS = 500.0
AREA_KNEE_PX = 640.0 * 360.0
FPS_KNEE = 12.0
RESOLUTION_FLOOR = 0.5
FRAMERATE_FLOOR = 0.75
AUDIO_WEIGHT = 0.15
STALL_SLOPE_PER_S = 0.06
STALL_EVENT_PENALTY = 0.2

SCORE_MIN, SCORE_MAX = 1.0, 5.0
DEFAULT_TIMEOUT_S = 120.0
DEFAULT_EXTERNAL_COMMAND = "python3 -m itu_p1203 {use_average} -m {mode} {inputs}"


@dataclass(frozen=True)
class SegmentMedia:
    bitrate_kbps: float
    width: int
    height: int
    framerate_fps: float
    duration_s: float
    codec: str = "h264"
    audio_codec: str = "aac_lc"

    def __post_init__(self):
        for name in ("bitrate_kbps", "width", "height", "framerate_fps", "duration_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.codec not in SUPPORTED_VIDEO_CODECS:
            raise UnsupportedMode(f"video codec {self.codec!r} not supported (only H.264)")
        if self.audio_codec not in AUDIO_CODEC_SCORES:
            raise ValueError(f"unknown audio codec {self.audio_codec!r}")


@dataclass
class QualityScores:
    o21: list
    o22: list
    o23: float
    o34: list
    o35: float
    o46: float
    mode: int = 0
    stream_id: int = 42

    def check_ranges(self):
        scalars = {"O23": self.o23, "O35": self.o35, "O46": self.o46}
        series = {"O21": self.o21, "O22": self.o22, "O34": self.o34}
        for key, value in scalars.items():
            if not SCORE_MIN <= value <= SCORE_MAX:
                raise SchemaMismatch(f"{key}={value} outside [1, 5]")
        for key, values in series.items():
            for v in values:
                if not SCORE_MIN <= v <= SCORE_MAX:
                    raise SchemaMismatch(f"{key} contains {v} outside [1, 5]")
        return self

    def to_report(self) -> dict:
        return {"O21": list(self.o21), "O22": list(self.o22), "O23": self.o23,
                "O34": list(self.o34), "O35": self.o35, "O46": self.o46,
                "mode": self.mode, "streamId": self.stream_id}


@dataclass(frozen=True)
class ScorerConfig:
    mode: int = 0
    backend: str = "surrogate"
    external_command: Optional[str] = None
    use_average: bool = False
    timeout_s: float = DEFAULT_TIMEOUT_S

    def __post_init__(self):
        if self.mode not in (0, 1, 2, 3):
            raise UnsupportedMode(f"P.1203 mode must be 0-3, got {self.mode}")
        if self.backend not in ("surrogate", "external"):
            raise ValueError(f"unknown scorer backend {self.backend!r}")
        if self.backend == "surrogate" and self.mode != 0:
            raise UnsupportedMode("the surrogate backend implements mode 0 only")


def _clamp(x: float) -> float:
    return min(SCORE_MAX, max(SCORE_MIN, x))


def _saturate(x: float, knee: float) -> float:
    return 1.0 - math.exp(-x / knee)


def video_quality(seg: SegmentMedia) -> float:
    """Per-second video score for one segment; non-decreasing in every input."""
    s_rate = _saturate(seg.bitrate_kbps, BITRATE_KNEE_KBPS)
    s_res = _saturate(seg.width * seg.height, AREA_KNEE_PX)
    s_fps = _saturate(seg.framerate_fps, FPS_KNEE)
    shape = (s_rate
             * (RESOLUTION_FLOOR + (1.0 - RESOLUTION_FLOOR) * s_res)
             * (FRAMERATE_FLOOR + (1.0 - FRAMERATE_FLOOR) * s_fps))
    return _clamp(SCORE_MIN + (SCORE_MAX - SCORE_MIN) * shape)


def stalling_quality(total_stall_s: float, n_events: int) -> float:
    penalty = STALL_SLOPE_PER_S * total_stall_s + STALL_EVENT_PENALTY * n_events
    return _clamp(SCORE_MIN + (SCORE_MAX - SCORE_MIN) * math.exp(-penalty))


def overall_quality(o35: float, o23: float) -> float:
    """Combine audiovisual and stalling quality; never above either input."""
    return _clamp(SCORE_MIN + (o35 - SCORE_MIN) * (o23 - SCORE_MIN) / (SCORE_MAX - SCORE_MIN))


def _per_second(segments: Sequence[SegmentMedia]) -> list:
    """Map each started playback second to the segment playing at its start."""
    total = 0.0
    for seg in segments:
        total += seg.duration_s
    n_seconds = math.ceil(total - 1e-9)
    out = []
    seg_iter = iter(segments)
    current = next(seg_iter)
    seg_end = current.duration_s
    for k in range(n_seconds):
        while k >= seg_end - 1e-9:
            current = next(seg_iter)
            seg_end += current.duration_s
        out.append(current)
    return out


def score_surrogate(segments: Sequence[SegmentMedia], stalls: StallReport,
                    config: Optional[ScorerConfig] = None) -> QualityScores:
    if config is not None and (config.mode != 0 or config.backend != "surrogate"):
        raise UnsupportedMode("surrogate scoring is mode 0 only")
    if not segments:
        raise ValueError("at least one segment is required")
    seconds = _per_second(segments)
    o22 = [video_quality(s) for s in seconds]
    o21 = [_clamp(AUDIO_CODEC_SCORES[s.audio_codec]) for s in seconds]
    o34 = [_clamp((1.0 - AUDIO_WEIGHT) * v + AUDIO_WEIGHT * a) for v, a in zip(o22, o21)]
    acc = 0.0
    for v in o34:
        acc += v
    o35 = _clamp(acc / len(o34))
    o23 = stalling_quality(stalls.total_s, stalls.count)
    return QualityScores(o21=o21, o22=o22, o23=o23, o34=o34, o35=o35,
                         o46=overall_quality(o35, o23), mode=0)


def mos_from_scores(q: QualityScores) -> float:
    """Session MOS is the overall (O46) score."""
    return q.o46


def mode0_input(segments: Sequence[SegmentMedia], stalls: Optional[StallReport] = None,
                stream_id: int = 42) -> dict:
    """Build a Mode 0 JSON input document for a reference implementation."""
    video, audio = [], []
    start = 0.0
    for seg in segments:
        video.append({"bitrate": seg.bitrate_kbps, "codec": seg.codec, "duration": seg.duration_s,
                      "fps": seg.framerate_fps, "resolution": f"{seg.width}x{seg.height}",
                      "start": start})
        audio.append({"bitrate": 128, "codec": seg.audio_codec.replace("_", ""),
                      "duration": seg.duration_s, "start": start})
        start += seg.duration_s
    stalling = [[ev.start_s, ev.duration_s] for ev in (stalls.events if stalls else ())]
    return {
        "I11": {"segments": audio, "streamId": stream_id},
        "I13": {"segments": video, "streamId": stream_id},
        "I23": {"stalling": stalling, "streamId": stream_id},
        "IGen": {"device": "pc", "displaySize": "1920x1080", "viewingDistance": "150cm"},
    }


def strip_json_comments(text: str) -> str:
    """Remove ``//`` line comments that sit outside string literals."""
    out = []
    in_string = escaped = False
    i = 0
    while i < len(text):
        ch = text[i]
        if in_string:
            out.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
            out.append(ch)
        elif text.startswith("//", i):
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def _scores_from_doc(doc: dict) -> QualityScores:
    if "O46" not in doc:
        raise SchemaMismatch(f"report lacks O46 (keys: {sorted(doc)})")
    try:
        scores = QualityScores(
            o21=[float(v) for v in doc.get("O21", [])],
            o22=[float(v) for v in doc.get("O22", [])],
            o23=float(doc.get("O23", SCORE_MAX)),
            o34=[float(v) for v in doc.get("O34", [])],
            o35=float(doc.get("O35", doc["O46"])),
            o46=float(doc["O46"]),
            mode=int(doc.get("mode", 0)),
            stream_id=int(doc.get("streamId", 42)),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaMismatch(f"malformed score report: {exc}") from exc
    return scores.check_ranges()


def parse_report(text: str) -> dict:
    """Parse reference-tool output into ``{input_name: QualityScores}``.

    Accepts either the per-file mapping the extractor prints or a single
    bare score object (keyed as ``""``).
    """
    try:
        doc = json.loads(strip_json_comments(text))
    except ValueError as exc:
        raise SchemaMismatch(f"tool output is not JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaMismatch("tool output must be a JSON object")
    if "O46" in doc or "O35" in doc:
        return {"": _scores_from_doc(doc)}
    if not doc:
        raise SchemaMismatch("tool output is empty")
    out = {}
    for name, sub in doc.items():
        if not isinstance(sub, dict):
            raise SchemaMismatch(f"entry {name!r} is not an object")
        out[name] = _scores_from_doc(sub)
    return out


def build_command(template: str, inputs: Sequence[str], config: ScorerConfig) -> list:
    args = []
    for token in shlex.split(template):
        if token == "{inputs}":
            args.extend(str(p) for p in inputs)
        elif token == "{use_average}":
            if config.use_average:
                args.append("--use-average")
        else:
            args.append(token.replace("{mode}", str(config.mode)))
    return args


def score_external_all(inputs: Sequence[Union[str, os.PathLike]], config: ScorerConfig) -> dict:
    template = config.external_command or DEFAULT_EXTERNAL_COMMAND
    args = build_command(template, [str(p) for p in inputs], config)
    try:
        proc = subprocess.run(args, capture_output=True, text=True, timeout=config.timeout_s)
    except subprocess.TimeoutExpired as exc:
        raise ExternalToolFailure(f"{args[0]} timed out after {config.timeout_s} s") from exc
    except OSError as exc:
        raise ExternalToolFailure(f"cannot run {args[0]}: {exc}") from exc
    if proc.returncode != 0:
        raise ExternalToolFailure(
            f"{args[0]} exited with {proc.returncode}: {proc.stderr.strip()[:500]}")
    return parse_report(proc.stdout)


def score_external(inputs: Sequence[Union[str, os.PathLike]], config: ScorerConfig) -> QualityScores:
    """Score media files or a mode-N JSON spec with the external tool.

    When the tool reports several inputs, the first one is returned; use
    :func:`score_external_all` for the full mapping.
    """
    reports = score_external_all(inputs, config)
    return next(iter(reports.values()))

"""HAR 1.2 ingestion and per-segment delivery timelines.

All times are integer milliseconds. ``started_at`` is measured from the
earliest entry in the capture, which therefore sits at 0.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .errors import MalformedHar, NegativeTiming, NoSegmentsFound

log = logging.getLogger(__name__)

DEFAULT_SEGMENT_PATTERN = r"\.ts(\?.*)?$"
DEFAULT_SEGMENT_DURATION_MS = 10_000
CAPTURE_SCHEMA = "streamqoe.capture/1"


@dataclass(frozen=True)
class HarEntry:
    url: str
    started_at: int
    send_ms: int
    wait_ms: int
    receive_ms: int
    body_size: int

    def __post_init__(self):
        if min(self.send_ms, self.wait_ms, self.receive_ms) < 0:
            raise NegativeTiming(f"negative timing in entry for {self.url}")
        if self.body_size < 0 or self.started_at < 0:
            raise MalformedHar(f"negative size or start for {self.url}")


@dataclass(frozen=True)
class SegmentTiming:
    index: int
    t_start: int
    t_s: int
    t_w: int
    t_r: int
    t_seg: int
    duration_ms: Optional[int] = None
    size_bytes: int = 0
    url: str = ""

    @classmethod
    def from_parts(cls, index, t_start, t_s, t_w, t_r, duration_ms=None, size_bytes=0, url=""):
        """Build a timing whose arrival is ``t_start + t_s + t_w + t_r``."""
        return cls(index, t_start, t_s, t_w, t_r, t_start + t_s + t_w + t_r,
                   duration_ms, size_bytes, url)


@dataclass
class SessionCapture:
    segments: list
    page_load_ms: int = 0
    startup_ms: int = 0
    source: str = ""
    epoch_ms: int = 0
    stalls: list = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "schema": CAPTURE_SCHEMA,
            "source": self.source,
            "epoch_ms": self.epoch_ms,
            "page_load_ms": self.page_load_ms,
            "startup_ms": self.startup_ms,
            "segments": [asdict(s) for s in self.segments],
            "stalls": [list(ev) for ev in self.stalls],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SessionCapture":
        doc = json.loads(text)
        if doc.get("schema") != CAPTURE_SCHEMA:
            raise MalformedHar(f"unexpected capture schema {doc.get('schema')!r}")
        segments = [SegmentTiming(**s) for s in doc["segments"]]
        return cls(
            segments=segments,
            page_load_ms=doc["page_load_ms"],
            startup_ms=doc["startup_ms"],
            source=doc["source"],
            epoch_ms=doc["epoch_ms"],
            stalls=[tuple(ev) for ev in doc.get("stalls", [])],
        )


def _parse_timestamp(value: str) -> datetime:
    # HAR uses ISO 8601; python 3.10 fromisoformat rejects a trailing "Z"
    if value.endswith("Z"):
        value = value[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(value)
    except ValueError as exc:
        raise MalformedHar(f"bad startedDateTime {value!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts


def _timing(timings: dict, key: str, url: str) -> int:
    value = timings.get(key, 0)
    if value is None:
        value = 0
    if value == -1:
        log.warning("timing %r is -1 (not applicable) for %s; using 0 ms", key, url)
        return 0
    if value < 0:
        raise NegativeTiming(f"timing {key}={value} for {url}")
    return int(round(value))


def _body_size(response: dict) -> int:
    size = response.get("bodySize", -1)
    if size is None or size < 0:
        size = response.get("content", {}).get("size", 0) or 0
    return max(0, int(size))


def _load_document(raw: Union[bytes, str]) -> dict:
    try:
        doc = json.loads(raw)
    except (ValueError, TypeError) as exc:
        raise MalformedHar(f"not a JSON document: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("log"), dict):
        raise MalformedHar("missing 'log' object")
    if not isinstance(doc["log"].get("entries"), list):
        raise MalformedHar("missing 'log.entries' array")
    return doc


def har_epoch(raw: Union[bytes, str]) -> Optional[datetime]:
    """Return the absolute timestamp of the earliest entry, if any."""
    entries = _load_document(raw)["log"]["entries"]
    if not entries:
        return None
    return min(_parse_timestamp(e["startedDateTime"]) for e in entries)


def parse_har(raw: Union[bytes, str]) -> list:
    """Parse a HAR 1.2 document into :class:`HarEntry` records.

    Entries come back sorted by ``started_at``; ties keep file order.
    """
    doc = _load_document(raw)
    raw_entries = doc["log"]["entries"]
    if not raw_entries:
        return []
    try:
        stamps = [_parse_timestamp(e["startedDateTime"]) for e in raw_entries]
    except (KeyError, TypeError) as exc:
        raise MalformedHar("entry without startedDateTime") from exc
    epoch = min(stamps)
    out = []
    for entry, stamp in zip(raw_entries, stamps):
        try:
            url = entry["request"]["url"]
            timings = entry["timings"]
        except (KeyError, TypeError) as exc:
            raise MalformedHar(f"entry missing request.url or timings: {exc}") from exc
        out.append(HarEntry(
            url=url,
            started_at=int(round((stamp - epoch) / timedelta(milliseconds=1))),
            send_ms=_timing(timings, "send", url),
            wait_ms=_timing(timings, "wait", url),
            receive_ms=_timing(timings, "receive", url),
            body_size=_body_size(entry.get("response", {})),
        ))
    out.sort(key=lambda e: e.started_at)
    return out


def serialize_har(entries: Iterable[HarEntry], epoch: Optional[datetime] = None) -> bytes:
    """Write entries back out as a minimal HAR 1.2 document.

    Only the fields :func:`parse_har` reads are emitted, so
    ``parse_har(serialize_har(x)) == x`` for sorted input.
    """
    if epoch is None:
        epoch = datetime(2024, 1, 1, tzinfo=timezone.utc)
    har_entries = []
    for e in entries:
        stamp = epoch + timedelta(milliseconds=e.started_at)
        har_entries.append({
            "startedDateTime": stamp.isoformat(timespec="milliseconds").replace("+00:00", "Z"),
            "time": e.send_ms + e.wait_ms + e.receive_ms,
            "request": {"method": "GET", "url": e.url, "httpVersion": "HTTP/1.1",
                        "headers": [], "queryString": [], "cookies": [],
                        "headersSize": -1, "bodySize": 0},
            "response": {"status": 200, "statusText": "OK", "httpVersion": "HTTP/1.1",
                         "headers": [], "cookies": [], "content": {"size": e.body_size, "mimeType": "video/mp2t"},
                         "redirectURL": "", "headersSize": -1, "bodySize": e.body_size},
            "cache": {},
            "timings": {"blocked": -1, "dns": -1, "connect": -1, "ssl": -1,
                        "send": e.send_ms, "wait": e.wait_ms, "receive": e.receive_ms},
        })
    doc = {"log": {"version": "1.2", "creator": {"name": "streamqoe", "version": "0.1.0"},
                   "pages": [], "entries": har_entries}}
    return json.dumps(doc, indent=2).encode("utf-8")


def extract_segments(entries: Sequence[HarEntry], pattern: str = DEFAULT_SEGMENT_PATTERN) -> list:
    """Keep media-segment requests and compute their arrival times.

    Segments are numbered from 1 in ``started_at`` order. ``duration_ms``
    is left unset; see :func:`assign_durations`.
    """
    regex = re.compile(pattern)
    matched = [e for e in entries if regex.search(e.url)]
    if not matched:
        raise NoSegmentsFound(f"no entry URL matches {pattern!r}")
    matched.sort(key=lambda e: e.started_at)
    return [
        SegmentTiming.from_parts(i, e.started_at, e.send_ms, e.wait_ms, e.receive_ms,
                                 size_bytes=e.body_size, url=e.url)
        for i, e in enumerate(matched, start=1)
    ]


def assign_durations(segments: Sequence[SegmentTiming],
                     durations_ms: Union[int, Sequence[int]] = DEFAULT_SEGMENT_DURATION_MS) -> list:
    """Attach playback durations, either one uniform value or one per segment."""
    if isinstance(durations_ms, int):
        durations = [durations_ms] * len(segments)
    else:
        durations = list(durations_ms)
        if len(durations) < len(segments):
            raise ValueError(f"{len(durations)} durations for {len(segments)} segments")
    for d in durations[:len(segments)]:
        if d <= 0:
            raise ValueError(f"segment duration must be positive, got {d}")
    return [replace(s, duration_ms=int(d)) for s, d in zip(segments, durations)]


_EXTINF = re.compile(r"^#EXTINF:\s*([0-9.]+)")


def load_durations(path: Union[str, Path]) -> list:
    """Read per-segment durations (ms) from an HLS playlist or a JSON sidecar.

    JSON may be a bare list of milliseconds or ``{"durations_ms": [...]}``.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("#EXTM3U"):
        return [int(round(float(m.group(1)) * 1000))
                for m in map(_EXTINF.match, text.splitlines()) if m]
    doc = json.loads(text)
    if isinstance(doc, dict):
        doc = doc["durations_ms"]
    return [int(d) for d in doc]


def _page_load_ms(doc: dict) -> int:
    pages = doc["log"].get("pages") or []
    if not pages:
        return 0
    on_load = (pages[0].get("pageTimings") or {}).get("onLoad", -1)
    if on_load is None or on_load < 0:
        return 0
    return int(round(on_load))


def build_capture(raw: Union[bytes, str], pattern: str = DEFAULT_SEGMENT_PATTERN,
                  durations_ms: Union[int, Sequence[int]] = DEFAULT_SEGMENT_DURATION_MS,
                  source: str = "") -> SessionCapture:
    """Run the full ingest chain on one HAR document.

    Startup is the arrival time of the first segment, measured from the
    first request in the capture.
    """
    doc = _load_document(raw)
    segments = assign_durations(extract_segments(parse_har(raw), pattern), durations_ms)
    epoch = har_epoch(raw)
    epoch_ms = int(epoch.timestamp() * 1000) if epoch else 0
    return SessionCapture(
        segments=segments,
        page_load_ms=_page_load_ms(doc),
        startup_ms=segments[0].t_seg,
        source=source,
        epoch_ms=epoch_ms,
    )

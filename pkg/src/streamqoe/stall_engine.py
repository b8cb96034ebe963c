"""Stall detection from segment timelines and from per-second player polls.

A stall is reported as ``(start, duration)`` in seconds, where ``start`` is
the playback (media) position at which playback froze. The dataset encoding
is ``"<start> - <duration>"`` clauses joined by ``" | "``, with ``"0 - 0"``
meaning no stalls.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Optional, Sequence

from .errors import BadStallSyntax, EmptyTrace, MissingDurations, NonMonotoneArrivals

NO_STALL = "0 - 0"
_CLAUSE = re.compile(r"^\s*(\d+)\s*-\s*(\d+)\s*$")


class StallEvent(NamedTuple):
    start_s: float
    duration_s: float


class StallMethod(str, Enum):
    TIMELINE = "timeline"
    POLLER = "poller"


@dataclass(frozen=True)
class StallReport:
    events: tuple
    method: StallMethod
    startup_ms: int = 0

    @property
    def total_s(self) -> float:
        total = 0.0
        for ev in self.events:
            total += ev.duration_s
        return total

    @property
    def count(self) -> int:
        return len(self.events)


def detect_stalls_timeline(segments: Sequence, startup_ms: Optional[int] = None) -> StallReport:
    """Find stalls from segment arrival times and playback durations.

    Playback starts when segment 1 arrives. Segment ``n+1`` is due once
    every earlier segment has played, including the stalls already
    suffered; if it arrives later, the gap is a stall at the media
    position where segment ``n`` ended.

    Parameters
    ----------
    segments : sequence of SegmentTiming
        Contiguously indexed, with ``duration_ms`` set.
    startup_ms : int, optional
        Carried into the report. Defaults to the first arrival time.
    """
    if not segments:
        return StallReport((), StallMethod.TIMELINE, startup_ms or 0)
    for prev, seg in zip(segments, segments[1:]):
        if seg.index != prev.index + 1:
            raise ValueError(f"segment indices not contiguous at {prev.index} -> {seg.index}")
        if seg.t_seg < prev.t_seg:
            raise NonMonotoneArrivals(
                f"segment {seg.index} arrives at {seg.t_seg} ms, before segment {prev.index}")
    if any(s.duration_ms is None for s in segments):
        raise MissingDurations("every segment needs duration_ms before stall detection")

    origin = segments[0].t_seg
    due = 0  # wall ms (from playback start) at which the next segment is needed
    position = 0  # media ms played so far
    events = []
    for n, seg in enumerate(segments):
        if n:
            arrival = seg.t_seg - origin
            if arrival > due:
                stall = arrival - due
                events.append(StallEvent(position / 1000, stall / 1000))
                due += stall
        due += seg.duration_ms
        position += seg.duration_ms
    if startup_ms is None:
        startup_ms = origin
    return StallReport(tuple(events), StallMethod.TIMELINE, int(startup_ms))


_STALLED = {"s", "stalled", "stall", True, 1}
_PLAYING = {"p", "playing", "play", False, 0}


def _is_stalled(state) -> bool:
    key = state.lower() if isinstance(state, str) else state
    if key in _STALLED:
        return True
    if key in _PLAYING:
        return False
    raise ValueError(f"unknown player state {state!r}")


def detect_stalls_poller(player_trace: Iterable) -> StallReport:
    """Run-length encode a 1 Hz player trace into stall events.

    Each maximal run of stalled samples is one event. The onset is the
    number of playing samples seen before the run, i.e. the playback
    position in seconds, and the duration is the run length.
    """
    states = [_is_stalled(s) for s in player_trace]
    if not states:
        raise EmptyTrace("player trace has no samples")
    events = []
    played = 0
    run = 0
    for stalled in states:
        if stalled:
            run += 1
            continue
        if run:
            events.append(StallEvent(float(played), float(run)))
            run = 0
        played += 1
    if run:
        events.append(StallEvent(float(played), float(run)))
    return StallReport(tuple(events), StallMethod.POLLER)


def parse_stalling_string(s: str) -> list:
    text = s.strip()
    sentinel = _CLAUSE.match(text)
    if sentinel and sentinel.groups() == ("0", "0"):
        return []
    events = []
    for clause in text.split("|"):
        m = _CLAUSE.match(clause)
        if not m:
            raise BadStallSyntax(clause.strip())
        start, duration = int(m.group(1)), int(m.group(2))
        if duration <= 0:
            raise BadStallSyntax(clause.strip(), f"stall duration must be positive in {clause.strip()!r}")
        events.append(StallEvent(start, duration))
    return events


def _whole_seconds(x: float) -> int:
    return int(math.floor(x + 0.5))


def format_stalling_string(events: Sequence) -> str:
    """Encode events for the dataset, rounding to whole seconds.

    Onsets must be strictly increasing after rounding; a stall shorter
    than half a second is written as 1 s so it stays visible.
    """
    if not events:
        return NO_STALL
    clauses = []
    last = None
    for ev in events:
        start = _whole_seconds(ev.start_s)
        if ev.duration_s <= 0 or start < 0:
            raise ValueError(f"invalid stall event {tuple(ev)}")
        if last is not None and start <= last:
            raise ValueError(f"overlapping or unordered stall onsets: {last} then {start}")
        last = start
        clauses.append(f"{start} - {max(1, _whole_seconds(ev.duration_s))}")
    return " | ".join(clauses)

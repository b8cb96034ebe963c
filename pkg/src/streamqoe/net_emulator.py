"""Network profiles and a deterministic segment-delivery simulator.

Profile files use the ``config.txt`` grammar::

    // Good 4G Network Profile:
    -incoming
    delay 20ms
    delay-distro 5ms
    loss 0%
    rate 10Mbps
    -outgoing
    ...

The simulator works at segment granularity. Loss is folded into an
effective rate ``R * (1 - loss)``; jitter is uniform with half-width
``delay-distro`` per direction; the player keeps at most two segments
in flight (the one playing and the next).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateProfile, MissingDirection, ProfileSyntaxError
from .har_ingest import SegmentTiming
from .quality_model import SegmentMedia

REQUEST_BYTES = 500

_RATE_UNITS = {"bps": 1, "kbps": 1_000, "mbps": 1_000_000, "gbps": 1_000_000_000}
_TIME_UNITS = {"ms": 1.0, "s": 1000.0}
_NUMBER = r"([0-9]+(?:\.[0-9]+)?)"
_LINE_PATTERNS = {
    "delay": re.compile(rf"^delay\s+{_NUMBER}\s*(ms|s)$", re.I),
    "delay-distro": re.compile(rf"^delay-distro\s+{_NUMBER}\s*(ms|s)$", re.I),
    "loss": re.compile(rf"^loss\s+{_NUMBER}\s*%$", re.I),
    "rate": re.compile(rf"^rate\s+{_NUMBER}\s*(bps|kbps|mbps|gbps)$", re.I),
}
_PROFILE_NAME = re.compile(r"^//\s*(.*?)\s*(?:network\s+profile)?\s*:?\s*$", re.I)


@dataclass(frozen=True)
class DirectionSpec:
    delay_ms: float = 0.0
    delay_distro_ms: float = 0.0
    loss_pct: float = 0.0
    rate_bps: float = 1_000_000.0

    def __post_init__(self):
        if self.delay_ms < 0 or self.delay_distro_ms < 0:
            raise ValueError("delay and delay-distro must be non-negative")
        if not 0 <= self.loss_pct <= 100:
            raise ValueError(f"loss must be within [0, 100], got {self.loss_pct}")
        if not self.rate_bps > 0:
            raise ValueError(f"rate must be positive, got {self.rate_bps}")

    def effective_rate_bps(self) -> float:
        if self.loss_pct >= 100:
            raise DegenerateProfile("100% loss: nothing is ever delivered")
        return self.rate_bps * (1.0 - self.loss_pct / 100.0)


@dataclass(frozen=True)
class NetworkProfile:
    name: str
    incoming: DirectionSpec
    outgoing: DirectionSpec


@dataclass(frozen=True)
class KpiSample:
    delay_ms: float
    jitter_ms: float
    packet_loss_pct: float
    throughput_bps: float
    bitrate_kbps: float


class _Block:
    def __init__(self, name, lineno):
        self.name = name
        self.lineno = lineno
        self.directions = {}
        self.current = None

    def close(self, index):
        if not self.directions:  # comment-only block
            return None
        for direction in ("incoming", "outgoing"):
            if direction not in self.directions:
                raise MissingDirection(self.lineno, f"profile {self.name or '(unnamed)'} has no -{direction} section")
        specs = {}
        for direction, (fields, lineno) in self.directions.items():
            if "rate_bps" not in fields:
                raise ProfileSyntaxError(lineno, f"-{direction} section has no rate")
            try:
                specs[direction] = DirectionSpec(**fields)
            except ValueError as exc:
                raise ProfileSyntaxError(lineno, str(exc)) from exc
        return NetworkProfile(self.name or f"custom-{index}", specs["incoming"], specs["outgoing"])


def parse_profiles(config_text: str) -> list:
    """Parse profile definitions; errors carry 1-based line numbers."""
    profiles = []
    block: Optional[_Block] = None

    def finish():
        if block is not None:
            prof = block.close(len(profiles))
            if prof is not None:
                profiles.append(prof)

    for lineno, raw in enumerate(config_text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("//"):
            finish()
            name = _PROFILE_NAME.match(line).group(1) or None
            block = _Block(name, lineno)
            continue
        if line.lower() in ("-incoming", "-outgoing"):
            direction = line[1:].lower()
            if block is None or direction in block.directions:
                finish()
                block = _Block(None, lineno)
            block.directions[direction] = ({}, lineno)
            block.current = direction
            continue
        if block is None or block.current is None:
            raise ProfileSyntaxError(lineno, f"{line!r} outside an -incoming/-outgoing section")
        fields = block.directions[block.current][0]
        key = line.split()[0].lower()
        pattern = _LINE_PATTERNS.get(key)
        m = pattern.match(line) if pattern else None
        if not m:
            raise ProfileSyntaxError(lineno, f"cannot parse {line!r}")
        value = float(m.group(1))
        if key == "delay":
            fields["delay_ms"] = value * _TIME_UNITS[m.group(2).lower()]
        elif key == "delay-distro":
            fields["delay_distro_ms"] = value * _TIME_UNITS[m.group(2).lower()]
        elif key == "loss":
            fields["loss_pct"] = value
        else:
            fields["rate_bps"] = value * _RATE_UNITS[m.group(2).lower()]
    finish()
    return profiles


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _rate(bps: float) -> str:
    for unit, scale in (("Gbps", 1e9), ("Mbps", 1e6), ("Kbps", 1e3)):
        if float(bps / scale).is_integer() and bps >= scale:
            return f"{_num(bps / scale)}{unit}"
    return f"{_num(bps)}bps"


def render_profiles(profiles: Sequence[NetworkProfile]) -> str:
    lines = []
    for prof in profiles:
        lines.append(f"// {prof.name} Network Profile:")
        for direction in ("incoming", "outgoing"):
            spec = getattr(prof, direction)
            lines += [f"-{direction}",
                      f"delay {_num(spec.delay_ms)}ms",
                      f"delay-distro {_num(spec.delay_distro_ms)}ms",
                      f"loss {_num(spec.loss_pct)}%",
                      f"rate {_rate(spec.rate_bps)}"]
        lines.append("")
    return "\n".join(lines)


def _wait_ms(profile: NetworkProfile, rng: np.random.Generator) -> int:
    base = profile.incoming.delay_ms + profile.outgoing.delay_ms
    spread = profile.incoming.delay_distro_ms + profile.outgoing.delay_distro_ms
    jitter = (rng.uniform(-profile.incoming.delay_distro_ms, profile.incoming.delay_distro_ms)
              + rng.uniform(-profile.outgoing.delay_distro_ms, profile.outgoing.delay_distro_ms))
    lo = math.ceil(max(0.0, base - spread))
    hi = math.floor(base + spread)
    return int(min(hi, max(lo, round(base + jitter))))


def transfer_ms(size_bytes: float, direction: DirectionSpec) -> int:
    return int(round(size_bytes * 8 * 1000 / direction.effective_rate_bps()))


def simulate_session(profile: NetworkProfile, media: Sequence[SegmentMedia], seed: int):
    """Simulate delivery of ``media`` under ``profile``.

    Returns
    -------
    timings : list of SegmentTiming
        With ``duration_ms`` filled in from the media.
    kpis : KpiSample
    """
    if not media:
        raise ValueError("media must contain at least one segment")
    profile.incoming.effective_rate_bps()
    profile.outgoing.effective_rate_bps()
    rng = np.random.default_rng(seed)

    t_s = transfer_ms(REQUEST_BYTES, profile.outgoing)
    timings = []
    arrivals, play_end = [], []
    for n, seg in enumerate(media):
        size = int(round(seg.bitrate_kbps * seg.duration_s * 125))
        duration_ms = int(round(seg.duration_s * 1000))
        if n == 0:
            start = 0
        elif n == 1:
            start = arrivals[0]
        else:
            start = max(arrivals[n - 1], play_end[n - 2])
        t_w = _wait_ms(profile, rng)
        t_r = transfer_ms(size, profile.incoming)
        timing = SegmentTiming.from_parts(n + 1, start, t_s, t_w, t_r,
                                          duration_ms=duration_ms, size_bytes=size,
                                          url=f"seg{n + 1:05d}.ts")
        timings.append(timing)
        arrivals.append(timing.t_seg)
        play_start = timing.t_seg if n == 0 else max(play_end[n - 1], timing.t_seg)
        play_end.append(play_start + duration_ms)

    waits = [t.t_w for t in timings]
    jitter = 0.0
    if len(waits) > 1:
        jitter = float(np.mean(np.abs(np.diff(waits))))
    wall_ms = max(arrivals[-1] - timings[0].t_start, 1)
    total_bits = 8 * sum(t.size_bytes for t in timings)
    kpis = KpiSample(
        delay_ms=float(np.mean(waits)),
        jitter_ms=jitter,
        packet_loss_pct=float(profile.incoming.loss_pct),
        throughput_bps=total_bits * 1000.0 / wall_ms,
        bitrate_kbps=float(np.mean([m.bitrate_kbps for m in media])),
    )
    return timings, kpis

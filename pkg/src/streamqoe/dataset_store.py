"""Integer-scaled session records with their CSV storage and cleaning pass.

Scaled columns (stored as ``round(value * 100)``): ``mos``, ``loss``
(percent) and ``framerate``. Everything else is an integer in its natural
unit: ms for times, kbps for bitrate, bps for throughput, px for sizes.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, Union

from .errors import HeaderMismatch, OutOfRange, QoEError, RowParseError
from .stall_engine import parse_stalling_string

log = logging.getLogger(__name__)

SCALE = 100
MOS_MIN_X100, MOS_MAX_X100 = 100, 500
BAD_DELAY = (-1000, 0)
BAD_JITTER = (0, -1000)
JITTER_FILL = 1

# column name -> record attribute, in table order
COLUMNS = (
    ("mos", "mos_x100"),
    ("loss", "loss_x100"),
    ("jitter", "jitter_ms"),
    ("delay", "delay_ms"),
    ("bitrate", "bitrate_kbps"),
    ("throughput", "throughput_bps"),
    ("rebuffering", "rebuffering_ms"),
    ("buffering", "buffering_ms"),
    ("framerate", "framerate_x100"),
    ("duration", "duration_ms"),
    ("stalling", "stalling"),
    ("vheight", "vheight"),
    ("vwidth", "vwidth"),
    ("startup", "startup_ms"),
)
CANONICAL_COLUMNS = tuple(c for c, _ in COLUMNS)


def encode_scaled(value: float) -> int:
    return int(math.floor(value * SCALE + 0.5))


def decode_scaled(x: int) -> float:
    return x / SCALE


def encode_mos(mos: float) -> int:
    if not 1.0 <= mos <= 5.0:
        raise OutOfRange(f"MOS {mos} outside [1, 5]")
    return encode_scaled(mos)


def decode_mos(x: int) -> float:
    if not MOS_MIN_X100 <= x <= MOS_MAX_X100:
        raise OutOfRange(f"scaled MOS {x} outside [{MOS_MIN_X100}, {MOS_MAX_X100}]")
    return decode_scaled(x)


@dataclass
class SessionRecord:
    mos_x100: int
    loss_x100: int
    jitter_ms: int
    delay_ms: int
    bitrate_kbps: int
    throughput_bps: int
    rebuffering_ms: int
    buffering_ms: int
    framerate_x100: int
    duration_ms: int
    stalling: str
    vheight: int
    vwidth: int
    startup_ms: int
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not MOS_MIN_X100 <= self.mos_x100 <= MOS_MAX_X100:
            raise OutOfRange(f"mos {self.mos_x100} outside [{MOS_MIN_X100}, {MOS_MAX_X100}]")
        parse_stalling_string(self.stalling)

    @property
    def mos(self) -> float:
        return decode_mos(self.mos_x100)

    @property
    def loss_pct(self) -> float:
        return decode_scaled(self.loss_x100)

    @property
    def framerate_fps(self) -> float:
        return decode_scaled(self.framerate_x100)


@dataclass
class CleanDataset:
    records: list
    provenance: dict


def _record_from_row(row: dict, lineno: int) -> SessionRecord:
    values = {}
    for col, attr in COLUMNS:
        text = row[col].strip()
        if attr == "stalling":
            values[attr] = text
            continue
        try:
            values[attr] = int(text)
        except ValueError:
            raise RowParseError(lineno, f"column {col!r}: {text!r} is not an integer") from None
    extras = {k: v for k, v in row.items() if k not in CANONICAL_COLUMNS}
    try:
        return SessionRecord(**values, extras=extras)
    except QoEError as exc:
        raise RowParseError(lineno, str(exc)) from exc


def load_csv(path: Union[str, Path], on_error: str = "raise") -> list:
    """Load records from CSV.

    Parameters
    ----------
    on_error : {"raise", "skip"}
        ``"skip"`` logs malformed rows with their line numbers and drops them.
    """
    if on_error not in ("raise", "skip"):
        raise ValueError(f"on_error must be 'raise' or 'skip', got {on_error!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise HeaderMismatch(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        missing = [c for c in CANONICAL_COLUMNS if c not in header]
        if missing:
            raise HeaderMismatch(f"{path}: missing columns {missing}")
        records = []
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if len(row) != len(header):
                    raise RowParseError(lineno, f"expected {len(header)} fields, got {len(row)}")
                records.append(_record_from_row(dict(zip(header, row)), lineno))
            except RowParseError as exc:
                if on_error == "raise":
                    raise
                log.warning("%s: skipping %s", path, exc)
    return records


def _cell(value, force_quote=False) -> str:
    text = str(value)
    if force_quote or any(ch in text for ch in ',"\r\n|'):
        return '"' + text.replace('"', '""') + '"'
    return text


def dumps_csv(records: Sequence[SessionRecord]) -> str:
    extra_cols = []
    for rec in records:
        for key in rec.extras:
            if key not in extra_cols:
                extra_cols.append(key)
    out = io.StringIO()
    out.write(",".join(_cell(c) for c in (*CANONICAL_COLUMNS, *extra_cols)) + "\n")
    for rec in records:
        cells = [_cell(getattr(rec, attr)) for _, attr in COLUMNS]
        cells += [_cell(rec.extras.get(key, "")) for key in extra_cols]
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def save_csv(records: Sequence[SessionRecord], path: Union[str, Path]) -> None:
    """Write records in table column order; unknown columns follow."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps_csv(records), encoding="utf-8", newline="")
    tmp.replace(path)


def clean(records: Iterable[SessionRecord]) -> CleanDataset:
    """Drop unusable rows and patch jitter so logs stay finite.

    Rows with delay of -1000 or 0 are dropped first, then rows with zero
    bitrate; surviving jitter values of 0 or -1000 become 1.
    """
    prov = {"loaded": 0, "dropped_delay": 0, "dropped_bitrate": 0, "jitter_adjusted": 0}
    kept = []
    for rec in records:
        prov["loaded"] += 1
        if rec.delay_ms in BAD_DELAY:
            prov["dropped_delay"] += 1
            continue
        if rec.bitrate_kbps == 0:
            prov["dropped_bitrate"] += 1
            continue
        if rec.jitter_ms in BAD_JITTER:
            prov["jitter_adjusted"] += 1
            rec = replace(rec, jitter_ms=JITTER_FILL, extras=dict(rec.extras))
        kept.append(rec)
    return CleanDataset(kept, prov)

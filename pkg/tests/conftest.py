import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"

# 15 published session rows, in column order:
# mos loss jitter delay bitrate throughput rebuffering buffering framerate duration stalling vheight vwidth startup
SAMPLE_ROWS = [
    (242, 1000, 43, 66, 310, 28680, 4580, 1780, 3404, 50000, "6 - 10", 360, 640, 920),
    (191, 0, 83, 242, 660, 60034, 0, 4730, 2065, 41000, "7 - 10", 264, 264, 2040),
    (293, 0, 54, 78, 820, 61616, 0, 2650, 4940, 40000, "7 - 10", 480, 854, 750),
    (206, 3000, 86, 116, 290, 11315, 3340, 1570, 1700, 42000, "3 - 20 | 7 - 10", 264, 264, 2320),
    (216, 0, 90, 135, 400, 32850, 0, 3140, 6628, 49000, "8 - 10", 146, 264, 570),
    (199, 2000, 81, 48, 150, 41440, 0, 1910, 2337, 45000, "8 - 10", 148, 264, 2070),
    (459, 1000, 133, 415, 540, 47065, 0, 1200, 3753, 41000, "8 - 10", 720, 1280, 270),
    (219, 0, 81, 57, 550, 37532, 3230, 1390, 3736, 49000, "8 - 10", 360, 640, 680),
    (254, 0, 59, 81, 710, 48481, 0, 1280, 4132, 40000, "6 - 15 | 8 - 10", 426, 426, 3570),
    (215, 0, 132, 177, 430, 17397, 0, 2170, 3535, 45000, "15 - 20 | 8 - 10", 240, 426, 1610),
    (169, 0, 104, 47, 250, 126440, 0, 1060, 3921, 42000, "9 - 10", 240, 426, 1380),
    (258, 0, 44, 61, 270, 41767, 0, 3600, 7871, 46000, "9 - 10", 360, 640, 2180),
    (306, 0, 121, 3, 410, 40390, 0, 1830, 3732, 52000, "9 - 10", 480, 854, 770),
    (328, 0, 67, 51, 810, 34687, 0, 1010, 3778, 41000, "1 - 20 | 9 - 10", 480, 854, 670),
    (306, 0, 89, 2, 410, 14726, 3130, 1830, 4343, 50000, "0 - 0", 240, 426, 740),
]

GOOD_4G = """// Good 4G Network Profile:
-incoming
delay 20ms
delay-distro 5ms
loss 0%
rate 10Mbps
-outgoing
delay 20ms
delay-distro 5ms
loss 0%
rate 5Mbps
"""


@pytest.fixture
def sample_records():
    from streamqoe.dataset_store import SessionRecord
    return [SessionRecord(*row) for row in SAMPLE_ROWS]


def make_har(entries, pages=None, epoch=datetime(2024, 5, 1, 12, 0, tzinfo=timezone.utc)):
    """Each entry dict holds url, start (ms) and the send/wait/receive timings; size is optional."""
    out = []
    for e in entries:
        stamp = epoch + timedelta(milliseconds=e["start"])
        out.append({
            "startedDateTime": stamp.isoformat(timespec="milliseconds").replace("+00:00", "Z"),
            "time": 0,
            "request": {"method": "GET", "url": e["url"], "headers": []},
            "response": {"status": 200, "bodySize": e.get("size", 1000), "content": {"size": e.get("size", 1000)}},
            "timings": {"send": e["send"], "wait": e["wait"], "receive": e["receive"]},
        })
    return json.dumps({"log": {"version": "1.2", "pages": pages or [], "entries": out}}).encode()


@pytest.fixture
def har_builder():
    return make_har


# -- acceptance reporting: one PASS/FAIL line per criterion ---------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    number, title = mark.args
    failed = call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception)
    prev = _CRITERIA.get(number, (title, True))
    if call.when == "call" or failed:
        _CRITERIA[number] = (title, prev[1] and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import playback_oracle, trace_from_states
from streamqoe.errors import BadStallSyntax, EmptyTrace, MissingDurations, NonMonotoneArrivals
from streamqoe.har_ingest import SegmentTiming
from streamqoe.stall_engine import (
    NO_STALL, StallEvent, detect_stalls_poller, detect_stalls_timeline,
    format_stalling_string, parse_stalling_string,
)


def timeline(arrivals, durations):
    return [SegmentTiming.from_parts(i + 1, a, 0, 0, 0, duration_ms=d)
            for i, (a, d) in enumerate(zip(arrivals, durations))]


def random_timeline(rng, max_segments=50):
    """Durations 2-12 s; nominal arrivals on a download cadence plus +/-30 s noise, made monotone."""
    n = int(rng.integers(1, max_segments + 1))
    durations = rng.integers(2000, 12001, n)
    nominal = np.cumsum(rng.integers(500, 12001, n))
    arrivals = np.maximum.accumulate(np.maximum(nominal + rng.integers(-30000, 30001, n), 0))
    return arrivals.tolist(), durations.tolist()


def test_worked_example():
    # clock starts at 1000: seg2 due at 5000, arrives 8000; seg3 due 12000, arrives 11000
    report = detect_stalls_timeline(timeline([1000, 8000, 11000], [4000, 4000, 4000]))
    assert report.events == (StallEvent(4.0, 3.0),)
    assert report.startup_ms == 1000
    assert report.total_s == 3.0 and report.count == 1


@pytest.mark.parametrize("seed", range(50))
def test_matches_millisecond_oracle(seed):
    rng = np.random.default_rng(seed)
    arrivals, durations = random_timeline(rng)
    report = detect_stalls_timeline(timeline(arrivals, durations))
    expected = playback_oracle(arrivals, durations)
    assert [(round(e.start_s * 1000), round(e.duration_s * 1000)) for e in report.events] == expected


def test_first_segment_anchors_the_clock():
    # a late first segment is startup delay, never a stall
    report = detect_stalls_timeline(timeline([60000, 61000], [10000, 10000]))
    assert report.events == () and report.startup_ms == 60000


def test_errors():
    with pytest.raises(NonMonotoneArrivals):
        detect_stalls_timeline(timeline([0, 5000, 4000], [2000] * 3))
    with pytest.raises(MissingDurations):
        detect_stalls_timeline([SegmentTiming.from_parts(1, 0, 0, 0, 0)])
    assert detect_stalls_timeline([]).events == ()


@pytest.mark.parametrize("seed", range(20))
def test_poller_agrees_on_whole_second_timelines(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(2, 15))
    durations = (rng.integers(2, 13, n) * 1000).tolist()
    arrivals = np.maximum.accumulate(np.cumsum(rng.integers(0, 14, n)) * 1000).tolist()
    arrivals = [a - arrivals[0] for a in arrivals]
    report = detect_stalls_timeline(timeline(arrivals, durations))
    _, states = playback_oracle(arrivals, durations, keep_states=True)
    polled = detect_stalls_poller(trace_from_states(states))
    assert polled.events == report.events


def test_poller_basics():
    r = detect_stalls_poller("ppsspps")
    assert r.events == (StallEvent(2.0, 2.0), StallEvent(4.0, 1.0))
    assert detect_stalls_poller(["stalled", "playing"]).events == (StallEvent(0.0, 1.0),)
    with pytest.raises(EmptyTrace):
        detect_stalls_poller([])
    with pytest.raises(ValueError):
        detect_stalls_poller(["buffering?"])


@pytest.mark.parametrize("text", ["3 - 20 | 7 - 10", "6 - 10", NO_STALL, "15 - 20 | 8 - 10"])
def test_table_strings_parse(text):
    events = parse_stalling_string(text)
    if text == NO_STALL:
        assert events == []
    else:
        assert len(events) == text.count("|") + 1


@pytest.mark.parametrize("text", ["3 - 20 | 7 - 10", "6 - 10", NO_STALL, "1 - 20 | 9 - 10"])
def test_canonical_strings_round_trip(text):
    assert format_stalling_string(parse_stalling_string(text)) == text


@pytest.mark.parametrize("bad", ["", "3-", "a - 1", "3 - 0", "1 - 2 || 3 - 4", "-1 - 2"])
def test_bad_syntax(bad):
    with pytest.raises(BadStallSyntax):
        parse_stalling_string(bad)


def test_formatter_rounding_rules():
    assert format_stalling_string([StallEvent(2.5, 0.2)]) == "3 - 1"
    assert format_stalling_string([StallEvent(2.49, 1.5)]) == "2 - 2"
    with pytest.raises(ValueError):
        format_stalling_string([StallEvent(2.2, 1.0), StallEvent(2.4, 1.0)])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 40), st.integers(1, 60)), min_size=1, max_size=8))
def test_round_trip_property(pairs):
    onsets = np.cumsum([p[0] for p in pairs]).tolist()
    events = [StallEvent(s, d) for s, (_, d) in zip(onsets, pairs)]
    text = format_stalling_string(events)
    assert parse_stalling_string(text) == events
    assert format_stalling_string(parse_stalling_string(text)) == text

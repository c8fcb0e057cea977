from collections import defaultdict
from datetime import datetime, time, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evabs.ingestion import (
    IngestionError,
    SegmentationPolicy,
    SensorReading,
    label_events,
    parse_boundary,
    parse_timezone,
    read_activities_csv,
    read_intervals_csv,
    read_readings_csv,
    readings_to_events,
    segment_cases,
)
from evabs.xes import CONCEPT_NAME, LABEL, LIFECYCLE, TIMESTAMP

UTC = timezone.utc
T0 = datetime(2015, 11, 3, 8, 0, tzinfo=UTC)


def at(minutes):
    return T0 + timedelta(minutes=minutes)


def test_change_points_become_start_and_complete():
    events = readings_to_events([SensorReading(at(0), "S", 1), SensorReading(at(1), "S", 0)])
    assert [(e[TIMESTAMP], e[CONCEPT_NAME], e[LIFECYCLE]) for e in events] == [
        (at(0), "S", "start"),
        (at(1), "S", "complete"),
    ]


def test_repeated_state_is_not_a_change_point():
    events = readings_to_events([SensorReading(at(0), "S", 1), SensorReading(at(1), "S", 1)])
    assert len(events) == 1 and events[0][LIFECYCLE] == "start"


def test_first_reading_off_is_a_complete():
    events = readings_to_events([SensorReading(at(0), "S", 0)])
    assert events[0][LIFECYCLE] == "complete"


def test_duplicate_reading_rejected():
    with pytest.raises(IngestionError):
        readings_to_events([SensorReading(at(0), "S", 1), SensorReading(at(0), "S", 0)])


def test_simultaneous_events_ordered_by_sensor_id():
    events = readings_to_events([SensorReading(at(0), "b", 1), SensorReading(at(0), "a", 1)])
    assert [e[CONCEPT_NAME] for e in events] == ["a", "b"]


def test_invalid_state_rejected():
    with pytest.raises(IngestionError):
        SensorReading(at(0), "S", 2)


@st.composite
def sensor_streams(draw):
    readings = []
    for sensor in ["s1", "s2", "s3"][: draw(st.integers(1, 3))]:
        minutes = sorted(draw(st.sets(st.integers(0, 3 * 24 * 60), max_size=12)))
        readings += [SensorReading(at(m), sensor, draw(st.integers(0, 1))) for m in minutes]
    order = draw(st.permutations(range(len(readings))))
    return [readings[i] for i in order]


def oracle_change_points(readings):
    per_sensor = defaultdict(list)
    for r in readings:
        per_sensor[r.sensor_id].append(r)
    out = []
    for sensor, rs in per_sensor.items():
        prev = None
        for r in sorted(rs, key=lambda r: r.timestamp):
            if r.state != prev:
                out.append((r.timestamp, sensor, "start" if r.state else "complete"))
            prev = r.state
    return sorted(out)


@given(sensor_streams())
@settings(max_examples=80, deadline=None)
def test_merge_matches_sort_oracle(readings):
    events = readings_to_events(readings)
    got = [(e[TIMESTAMP], e[CONCEPT_NAME], e[LIFECYCLE]) for e in events]
    assert got == oracle_change_points(readings)


def test_midnight_cut():
    e1 = readings_to_events([SensorReading(datetime(2015, 11, 3, 23, 59, tzinfo=UTC), "a", 1),
                             SensorReading(datetime(2015, 11, 4, 0, 1, tzinfo=UTC), "a", 0)])
    log = segment_cases(e1)
    assert [t.case_id for t in log.traces] == ["2015-11-03", "2015-11-04"]
    assert [len(t) for t in log.traces] == [1, 1]


def test_event_at_boundary_belongs_to_new_day():
    events = readings_to_events([SensorReading(datetime(2015, 11, 4, 0, 0, tzinfo=UTC), "a", 1)])
    assert segment_cases(events).traces[0].case_id == "2015-11-04"


def test_one_day_one_trace():
    events = readings_to_events([SensorReading(at(m), "a", m % 2) for m in range(10)])
    log = segment_cases(events)
    assert len(log.traces) == 1 and len(log.traces[0]) == 10


def test_local_time_decides_the_day():
    cet = timezone(timedelta(hours=1))
    ts = datetime(2015, 11, 3, 23, 30, tzinfo=UTC)  # 00:30 next day in CET
    events = readings_to_events([SensorReading(ts, "a", 1)])
    assert segment_cases(events, SegmentationPolicy(timezone=cet)).traces[0].case_id == "2015-11-04"
    assert segment_cases(events).traces[0].case_id == "2015-11-03"


def test_custom_boundary():
    policy = SegmentationPolicy(boundary=time(4, 0))
    events = readings_to_events([SensorReading(datetime(2015, 11, 4, 3, 0, tzinfo=UTC), "a", 1),
                                 SensorReading(datetime(2015, 11, 4, 5, 0, tzinfo=UTC), "a", 0)])
    assert [t.case_id for t in segment_cases(events, policy).traces] == ["2015-11-03", "2015-11-04"]


@given(sensor_streams())
@settings(max_examples=60, deadline=None)
def test_grouping_matches_date_oracle(readings):
    events = readings_to_events(readings)
    log = segment_cases(events)
    groups = defaultdict(list)
    for e in events:
        groups[e[TIMESTAMP].date().isoformat()].append(e)
    assert [t.case_id for t in log.traces] == sorted(groups)
    for t in log.traces:
        assert list(t.events) == groups[t.case_id]
    # conservation and stability
    assert [e for t in log.traces for e in t.events] == events


def test_missing_timestamp_rejected():
    from evabs.xes import Event

    with pytest.raises(IngestionError):
        segment_cases([Event({CONCEPT_NAME: "a"})])


def test_parse_helpers():
    assert parse_timezone("+01:00").utcoffset(None) == timedelta(hours=1)
    assert parse_timezone("UTC").utcoffset(None) == timedelta(0)
    assert parse_timezone("Europe/Amsterdam") is not None
    assert parse_boundary("04:30") == time(4, 30)
    with pytest.raises(IngestionError):
        parse_boundary("25:00")


def test_readings_csv(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("timestamp,sensor_id,state,label\n"
                 "2015-11-03T08:45:23,MC,1,TakingMedicine\n"
                 "2015-11-03T08:46:00,MC,0,TakingMedicine\n")
    rs = read_readings_csv(p)
    assert [r.state for r in rs] == [1, 0] and rs[0].label == "TakingMedicine"
    log = segment_cases(readings_to_events(rs))
    assert log.n_events == 2 and LABEL in log.global_event_attributes


def test_bad_state_names_row(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("timestamp,sensor_id,state\n2015-11-03T08:45:23,MC,1\n2015-11-03T08:46:00,MC,2\n")
    with pytest.raises(IngestionError, match="row 2"):
        read_readings_csv(p)


def test_interval_and_activity_files(tmp_path):
    s = tmp_path / "s.csv"
    s.write_text("start,end,sensor_id\n2015-11-03T08:00:00,2015-11-03T08:05:00,a\n"
                 "2015-11-03T09:00:00,2015-11-03T09:01:00,b\n")
    a = tmp_path / "a.csv"
    a.write_text("start,end,label\n2015-11-03T07:59:00,2015-11-03T08:10:00,breakfast\n")
    events = readings_to_events(read_intervals_csv(s))
    labeled = label_events(events, read_activities_csv(a))
    assert [e[LABEL] for e in labeled] == ["breakfast", "breakfast", "Other", "Other"]

"""Binary sensor readings to a sensor-level event log.

Each change point of a sensor becomes one event (0->1 is a ``start``, 1->0 a
``complete``), and events are grouped into one case per local calendar day.
"""
from __future__ import annotations

import bisect
import csv
import heapq
import re
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta, timezone, tzinfo
from itertools import groupby
from typing import Iterable, Optional, Sequence
from zoneinfo import ZoneInfo

from .xes import (
    CONCEPT_NAME,
    LABEL,
    LIFECYCLE,
    TIMESTAMP,
    Event,
    EventLog,
    Trace,
    parse_timestamp,
    standard_extensions,
)


class IngestionError(ValueError):
    pass


@dataclass(frozen=True)
class SensorReading:
    timestamp: datetime
    sensor_id: str
    state: int
    label: Optional[str] = None

    def __post_init__(self):
        if self.state not in (0, 1):
            raise IngestionError(f"sensor state must be 0 or 1, got {self.state!r}")
        if self.timestamp.tzinfo is None:
            raise IngestionError("reading timestamps must be timezone-aware")


@dataclass(frozen=True)
class SegmentationPolicy:
    boundary: time = time(0, 0)
    timezone: Optional[tzinfo] = None  # None: use each timestamp's own offset

    def __post_init__(self):
        if not isinstance(self.boundary, time):
            raise IngestionError("boundary must be a time of day")

    def local(self, ts: datetime) -> datetime:
        return ts.astimezone(self.timezone) if self.timezone is not None else ts

    def case_date(self, ts: datetime) -> date:
        """Local date of the day-window [boundary, boundary + 24h) containing ``ts``."""
        local = self.local(ts)
        shift = timedelta(
            hours=self.boundary.hour, minutes=self.boundary.minute, seconds=self.boundary.second
        )
        return (local.replace(tzinfo=None) - shift).date()


def parse_timezone(text: Optional[str]) -> Optional[tzinfo]:
    """``+01:00`` / ``-0500`` / ``UTC`` / IANA names such as ``Europe/Amsterdam``."""
    if text is None or text == "":
        return None
    if text.upper() in ("UTC", "Z"):
        return timezone.utc
    m = re.fullmatch(r"([+-])(\d{2}):?(\d{2})", text)
    if m:
        sign = -1 if m.group(1) == "-" else 1
        return timezone(sign * timedelta(hours=int(m.group(2)), minutes=int(m.group(3))))
    try:
        return ZoneInfo(text)
    except Exception:
        raise IngestionError(f"unknown timezone {text!r}") from None


def parse_boundary(text: str) -> time:
    try:
        return time.fromisoformat(text)
    except ValueError:
        raise IngestionError(f"invalid boundary time of day {text!r}") from None


def _sensor_events(readings: Sequence[SensorReading]) -> list:
    events = []
    previous = None
    last_ts = None
    for r in readings:
        if last_ts is not None and r.timestamp <= last_ts:
            if r.timestamp == last_ts:
                raise IngestionError(
                    f"duplicate reading for sensor {r.sensor_id!r} at {r.timestamp.isoformat()}"
                )
            raise IngestionError(f"readings of sensor {r.sensor_id!r} are not increasing in time")
        last_ts = r.timestamp
        if previous is None or r.state != previous:
            attrs = {
                CONCEPT_NAME: r.sensor_id,
                TIMESTAMP: r.timestamp,
                LIFECYCLE: "start" if r.state == 1 else "complete",
            }
            if r.label is not None:
                attrs[LABEL] = r.label
            events.append(Event(attrs))
        previous = r.state
    return events


def readings_to_events(readings: Iterable[SensorReading]) -> list:
    """Turn readings into change-point events ordered by (timestamp, sensor_id).

    Readings may be given in any order across sensors, but per sensor they are
    sorted by time before change detection.
    """
    by_sensor: dict = {}
    for r in readings:
        by_sensor.setdefault(r.sensor_id, []).append(r)
    streams = []
    for sensor in sorted(by_sensor):
        rs = sorted(by_sensor[sensor], key=lambda r: r.timestamp)
        streams.append([((e[TIMESTAMP], sensor), e) for e in _sensor_events(rs)])
    return [e for _, e in heapq.merge(*streams, key=lambda item: item[0])]


def segment_cases(events: Sequence[Event], policy: SegmentationPolicy = SegmentationPolicy()) -> EventLog:
    """One trace per local day; ``case_id`` is the ISO date of that day."""
    keyed = []
    for i, e in enumerate(events):
        ts = e.get(TIMESTAMP)
        if not isinstance(ts, datetime):
            raise IngestionError(f"event {i} has no time:timestamp")
        keyed.append((policy.case_date(ts), e))
    traces = [
        Trace(day.isoformat(), [e for _, e in group])
        for day, group in groupby(keyed, key=lambda item: item[0])
    ]
    if len({t.case_id for t in traces}) != len(traces):
        raise IngestionError("events are not sorted by timestamp")
    keys = {CONCEPT_NAME, TIMESTAMP, LIFECYCLE}
    if events and all(LABEL in e for e in events):
        keys.add(LABEL)
    return EventLog(
        traces=traces,
        global_event_attributes=keys,
        global_trace_attributes={CONCEPT_NAME} if traces else set(),
        classifiers={"Activity": (CONCEPT_NAME,)},
        extensions=standard_extensions("concept", "time", "lifecycle"),
    )


# ---------------------------------------------------------------- CSV input


def read_readings_csv(path, default_tz: Optional[tzinfo] = None) -> list:
    """Read ``timestamp,sensor_id,state[,label]`` rows.

    Naive timestamps are localized to ``default_tz`` (UTC when None). Errors
    name the offending data row (1-based, header excluded).
    """
    readings = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"timestamp", "sensor_id", "state"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise IngestionError(f"CSV header must contain {sorted(required)}")
        has_label = "label" in reader.fieldnames
        for row_no, row in enumerate(reader, start=1):
            try:
                ts = parse_timestamp(row["timestamp"], default_tz)
            except ValueError as exc:
                raise IngestionError(f"row {row_no}: {exc}") from None
            state = (row["state"] or "").strip()
            if state not in ("0", "1"):
                raise IngestionError(f"row {row_no}: state must be 0 or 1, got {row['state']!r}")
            sensor = (row["sensor_id"] or "").strip()
            if not sensor:
                raise IngestionError(f"row {row_no}: empty sensor_id")
            label = (row.get("label") or "").strip() if has_label else ""
            readings.append(SensorReading(ts, sensor, int(state), label or None))
    return readings


def read_intervals_csv(path, default_tz: Optional[tzinfo] = None) -> list:
    """Read activation intervals ``start,end,sensor_id`` into 1/0 readings.

    This is the layout of interval-annotated smart-home datasets such as the
    Van Kasteren sensor file.
    """
    readings = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"start", "end", "sensor_id"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise IngestionError(f"CSV header must contain {sorted(required)}")
        for row_no, row in enumerate(reader, start=1):
            try:
                start = parse_timestamp(row["start"], default_tz)
                end = parse_timestamp(row["end"], default_tz)
            except ValueError as exc:
                raise IngestionError(f"row {row_no}: {exc}") from None
            if end <= start:
                raise IngestionError(f"row {row_no}: interval end must be after start")
            sensor = row["sensor_id"].strip()
            readings.append(SensorReading(start, sensor, 1))
            readings.append(SensorReading(end, sensor, 0))
    return readings


def read_activities_csv(path, default_tz: Optional[tzinfo] = None) -> list:
    """Read ``start,end,label`` activity annotations as (start, end, label) tuples."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"start", "end", "label"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise IngestionError(f"CSV header must contain {sorted(required)}")
        for row_no, row in enumerate(reader, start=1):
            try:
                start = parse_timestamp(row["start"], default_tz)
                end = parse_timestamp(row["end"], default_tz)
            except ValueError as exc:
                raise IngestionError(f"row {row_no}: {exc}") from None
            out.append((start, end, row["label"].strip()))
    out.sort(key=lambda a: (a[0], a[1]))
    return out


def label_events(events: Sequence[Event], activities: Sequence[tuple], unlabeled: str = "Other") -> list:
    """Attach the label of the activity interval (inclusive) covering each event.

    When intervals overlap the one that started last wins; events outside
    every interval get ``unlabeled``.
    """
    starts = [a[0] for a in activities]
    out = []
    for e in events:
        ts = e[TIMESTAMP]
        label = unlabeled
        i = bisect.bisect_right(starts, ts) - 1
        while i >= 0:
            start, end, name = activities[i]
            if start <= ts <= end:
                label = name
                break
            i -= 1
        out.append(e.replace({LABEL: label}))
    return out

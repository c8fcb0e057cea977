"""In-memory XES event logs and a reader/writer for the XES XML subset we use.

Supported attribute value types are ``string``, ``date``, ``int``, ``float``
and ``boolean``. Nested attributes, lists and ``id`` values are rejected.
"""
from __future__ import annotations

import re
import shlex
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterable, Mapping, Optional, Sequence, Union
from xml.etree import ElementTree as ET

AttributeValue = Union[str, datetime, int, float, bool]

CONCEPT_NAME = "concept:name"
TIMESTAMP = "time:timestamp"
LIFECYCLE = "lifecycle:transition"
RESOURCE = "org:resource"
ROLE = "org:role"
GROUP = "org:group"
LABEL = "label"

STANDARD_EXTENSIONS = {
    "concept": ("Concept", "http://www.xes-standard.org/concept.xesext"),
    "time": ("Time", "http://www.xes-standard.org/time.xesext"),
    "lifecycle": ("Lifecycle", "http://www.xes-standard.org/lifecycle.xesext"),
    "org": ("Organizational", "http://www.xes-standard.org/org.xesext"),
}


class XesError(Exception):
    pass


class XesParseError(XesError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class XesAttributeError(XesError):
    pass


class XesValidationError(XesError):
    pass


# ---------------------------------------------------------------- timestamps

_TS_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[T ](\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,9}))?"
    r"(Z|[+-]\d{2}:?\d{2})?$"
)


def parse_timestamp(text: str, default_tz: Optional[timezone] = None) -> datetime:
    """Parse an ISO-8601 timestamp. Naive values get ``default_tz`` (UTC if None)."""
    m = _TS_RE.match(text.strip())
    if not m:
        raise ValueError(f"not an ISO-8601 timestamp: {text!r}")
    year, month, day, hh, mm, ss, frac, tz = m.groups()
    micro = int((frac or "0")[:6].ljust(6, "0"))
    if tz is None:
        tzinfo = default_tz or timezone.utc
    elif tz == "Z":
        tzinfo = timezone.utc
    else:
        sign = -1 if tz[0] == "-" else 1
        digits = tz[1:].replace(":", "")
        tzinfo = timezone(sign * timedelta(hours=int(digits[:2]), minutes=int(digits[2:])))
    return datetime(int(year), int(month), int(day), int(hh), int(mm), int(ss), micro, tzinfo=tzinfo)


def format_timestamp(ts: datetime) -> str:
    """ISO-8601 with milliseconds and an explicit offset, e.g. 2015-11-03T08:45:23.000+01:00."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.isoformat(timespec="milliseconds")


def _type_tag(value: AttributeValue) -> str:
    # bool before int: bool is an int subclass
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, datetime):
        return "date"
    if isinstance(value, str):
        return "string"
    raise XesValidationError(f"unsupported attribute value type: {type(value).__name__}")


def _format_value(value: AttributeValue) -> str:
    tag = _type_tag(value)
    if tag == "boolean":
        return "true" if value else "false"
    if tag == "float":
        return repr(float(value))
    if tag == "date":
        return format_timestamp(value)
    return str(value)


def _parse_value(tag: str, text: str) -> AttributeValue:
    if tag == "string":
        return text
    if tag == "date":
        return parse_timestamp(text)
    if tag == "int":
        return int(text)
    if tag == "float":
        return float(text)
    if tag == "boolean":
        low = text.strip().lower()
        if low not in ("true", "false"):
            raise ValueError(f"not a boolean: {text!r}")
        return low == "true"
    raise ValueError(f"unsupported attribute type {tag!r}")


_VALUE_TAGS = ("string", "date", "int", "float", "boolean")
_REJECTED_TAGS = ("list", "id", "container")

# ---------------------------------------------------------------- data model


@dataclass(frozen=True)
class Event:
    """One event; ``attributes`` keeps insertion order. Treat as immutable."""

    attributes: Mapping[str, AttributeValue] = field(default_factory=dict)

    def __post_init__(self):
        attrs = dict(self.attributes)
        for key, value in attrs.items():
            if not key:
                raise XesValidationError("attribute key must be non-empty")
            _type_tag(value)
        object.__setattr__(self, "attributes", attrs)

    def get(self, key: str, default=None):
        return self.attributes.get(key, default)

    def __getitem__(self, key: str) -> AttributeValue:
        return self.attributes[key]

    def __contains__(self, key: str) -> bool:
        return key in self.attributes

    def with_attributes(self, **updates: AttributeValue) -> "Event":
        return self.replace(updates)

    def replace(self, updates: Mapping[str, AttributeValue]) -> "Event":
        attrs = dict(self.attributes)
        attrs.update(updates)
        return Event(attrs)

    def without(self, key: str) -> "Event":
        return Event({k: v for k, v in self.attributes.items() if k != key})

    @property
    def timestamp(self) -> Optional[datetime]:
        return self.attributes.get(TIMESTAMP)


def get_attribute(event: Event, key: str) -> Optional[AttributeValue]:
    """Value of ``key`` on ``event``, or None when absent."""
    return event.attributes.get(key)


def make_event(**kwargs: AttributeValue) -> Event:
    """Convenience constructor mapping ``concept_name=...`` style names onto XES keys."""
    keymap = {
        "concept_name": CONCEPT_NAME,
        "timestamp": TIMESTAMP,
        "lifecycle": LIFECYCLE,
        "resource": RESOURCE,
        "role": ROLE,
        "group": GROUP,
        "label": LABEL,
    }
    return Event({keymap.get(k, k): v for k, v in kwargs.items()})


@dataclass(frozen=True)
class Trace:
    case_id: str = ""
    events: Sequence[Event] = ()
    attributes: Mapping[str, AttributeValue] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        attrs = dict(self.attributes)
        if CONCEPT_NAME in attrs:
            raise XesValidationError("trace concept:name is carried by case_id")
        for key, value in attrs.items():
            if not key:
                raise XesValidationError("attribute key must be non-empty")
            _type_tag(value)
        object.__setattr__(self, "attributes", attrs)
        stamps = [e.get(TIMESTAMP) for e in self.events]
        if stamps and all(isinstance(s, datetime) for s in stamps):
            for i in range(1, len(stamps)):
                if stamps[i] < stamps[i - 1]:
                    raise XesValidationError(
                        f"trace {self.case_id!r}: event {i} is earlier than event {i - 1}"
                    )

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def with_events(self, events: Iterable[Event]) -> "Trace":
        return Trace(self.case_id, tuple(events), self.attributes)


@dataclass(frozen=True)
class Extension:
    name: str
    prefix: str
    uri: str


@dataclass(frozen=True)
class EventLog:
    traces: Sequence[Trace] = ()
    global_event_attributes: frozenset = frozenset()
    global_trace_attributes: frozenset = frozenset()
    classifiers: Mapping[str, tuple] = field(default_factory=dict)
    extensions: frozenset = frozenset()
    attributes: Mapping[str, AttributeValue] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        object.__setattr__(self, "global_event_attributes", frozenset(self.global_event_attributes))
        object.__setattr__(self, "global_trace_attributes", frozenset(self.global_trace_attributes))
        object.__setattr__(self, "extensions", frozenset(self.extensions))
        object.__setattr__(
            self, "classifiers", {name: tuple(keys) for name, keys in self.classifiers.items()}
        )
        object.__setattr__(self, "attributes", dict(self.attributes))
        for ti, trace in enumerate(self.traces):
            for key in self.global_trace_attributes:
                present = bool(trace.case_id) if key == CONCEPT_NAME else key in trace.attributes
                if not present:
                    raise XesValidationError(f"trace {ti} lacks global trace attribute {key!r}")
            for ei, event in enumerate(trace.events):
                missing = self.global_event_attributes - event.attributes.keys()
                if missing:
                    raise XesValidationError(
                        f"trace {ti} event {ei} lacks global event attribute(s) {sorted(missing)}"
                    )

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    @property
    def n_events(self) -> int:
        return sum(len(t) for t in self.traces)

    def events(self):
        for trace in self.traces:
            yield from trace.events

    def with_traces(self, traces: Iterable[Trace], global_event_attributes=None) -> "EventLog":
        return EventLog(
            traces=tuple(traces),
            global_event_attributes=(
                self.global_event_attributes
                if global_event_attributes is None
                else global_event_attributes
            ),
            global_trace_attributes=self.global_trace_attributes,
            classifiers=self.classifiers,
            extensions=self.extensions,
            attributes=self.attributes,
        )


def standard_extensions(*prefixes: str) -> frozenset:
    return frozenset(Extension(STANDARD_EXTENSIONS[p][0], p, STANDARD_EXTENSIONS[p][1]) for p in prefixes)


# ---------------------------------------------------------------- parsing


def _read_attributes(parent, where: str) -> dict:
    attrs = {}
    for child in parent:
        tag = child.tag
        if tag in ("event", "trace", "global", "classifier", "extension"):
            continue
        if tag in _REJECTED_TAGS:
            raise XesAttributeError(f"{where}: unsupported attribute type <{tag}>")
        if tag not in _VALUE_TAGS:
            raise XesAttributeError(f"{where}: unknown element <{tag}>")
        key = child.get("key")
        value = child.get("value")
        if not key or value is None:
            raise XesAttributeError(f"{where}: attribute element <{tag}> needs key and value")
        if len(child):
            raise XesAttributeError(f"{where}: nested attributes are not supported (key {key!r})")
        if key in attrs:
            raise XesAttributeError(f"{where}: duplicate attribute key {key!r}")
        try:
            attrs[key] = _parse_value(tag, value)
        except ValueError as exc:
            raise XesAttributeError(f"{where}: attribute {key!r}: {exc}") from None
    return attrs


def parse_xes(xml_text: str) -> EventLog:
    """Parse an XES document into an :class:`EventLog`."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line, col = exc.position
        raise XesParseError(f"malformed XML: {exc}", line, col) from None
    if root.tag != "log":
        raise XesParseError(f"root element must be <log>, got <{root.tag}>")

    extensions = set()
    global_event, global_trace = set(), set()
    classifiers = {}
    traces = []
    for child in root:
        if child.tag == "extension":
            extensions.add(Extension(child.get("name", ""), child.get("prefix", ""), child.get("uri", "")))
        elif child.tag == "global":
            scope = child.get("scope", "event")
            keys = {g.get("key") for g in child if g.get("key")}
            (global_trace if scope == "trace" else global_event).update(keys)
        elif child.tag == "classifier":
            classifiers[child.get("name", "")] = tuple(shlex.split(child.get("keys", "")))
        elif child.tag == "trace":
            ti = len(traces)
            tattrs = _read_attributes(child, f"trace {ti}")
            case_id = tattrs.pop(CONCEPT_NAME, "")
            events = [
                Event(_read_attributes(ev, f"trace {ti} event {ei}"))
                for ei, ev in enumerate(child.findall("event"))
            ]
            traces.append(Trace(str(case_id), events, tattrs))
    log_attrs = _read_attributes(root, "log")
    return EventLog(
        traces=traces,
        global_event_attributes=global_event,
        global_trace_attributes=global_trace,
        classifiers=classifiers,
        extensions=extensions,
        attributes=log_attrs,
    )


def read_xes(path) -> EventLog:
    with open(path, encoding="utf-8") as fh:
        return parse_xes(fh.read())


# ---------------------------------------------------------------- writing

_GLOBAL_DEFAULTS = {
    "string": "__INVALID__",
    "date": "1970-01-01T00:00:00.000+00:00",
    "int": "0",
    "float": "0.0",
    "boolean": "false",
}


def _attr_element(parent, key: str, value: AttributeValue):
    el = ET.SubElement(parent, _type_tag(value))
    el.set("key", key)
    el.set("value", _format_value(value))
    return el


def _global_type(log: EventLog, key: str, scope: str) -> str:
    for trace in log.traces:
        if scope == "trace":
            if key == CONCEPT_NAME:
                return "string"
            if key in trace.attributes:
                return _type_tag(trace.attributes[key])
        else:
            for event in trace.events:
                if key in event.attributes:
                    return _type_tag(event.attributes[key])
    return "string"


def _quote_key(key: str) -> str:
    return f"'{key}'" if any(c.isspace() for c in key) else key


def write_xes(log: EventLog) -> str:
    """Serialize ``log`` deterministically. ``parse_xes`` inverts this."""
    root = ET.Element("log")
    root.set("xes.version", "1.0")
    for ext in sorted(log.extensions, key=lambda e: (e.prefix, e.name, e.uri)):
        el = ET.SubElement(root, "extension")
        el.set("name", ext.name)
        el.set("prefix", ext.prefix)
        el.set("uri", ext.uri)
    for scope, keys in (("trace", log.global_trace_attributes), ("event", log.global_event_attributes)):
        if not keys:
            continue
        g = ET.SubElement(root, "global")
        g.set("scope", scope)
        for key in sorted(keys):
            tag = _global_type(log, key, scope)
            el = ET.SubElement(g, tag)
            el.set("key", key)
            el.set("value", _GLOBAL_DEFAULTS[tag])
    for name, keys in log.classifiers.items():
        el = ET.SubElement(root, "classifier")
        el.set("name", name)
        el.set("keys", " ".join(_quote_key(k) for k in keys))
    for key, value in log.attributes.items():
        _attr_element(root, key, value)
    for trace in log.traces:
        t_el = ET.SubElement(root, "trace")
        if trace.case_id:
            _attr_element(t_el, CONCEPT_NAME, trace.case_id)
        for key, value in trace.attributes.items():
            _attr_element(t_el, key, value)
        for event in trace.events:
            e_el = ET.SubElement(t_el, "event")
            for key, value in event.attributes.items():
                _attr_element(e_el, key, value)
    ET.indent(root, space="  ")
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def save_xes(log: EventLog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_xes(log))

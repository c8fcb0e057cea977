from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import settings

from evabs.xes import CONCEPT_NAME, LABEL, LIFECYCLE, TIMESTAMP, Event, Trace

settings.register_profile("default", deadline=None)
settings.load_profile("default")

CET = timezone(timedelta(hours=1))


def _ts(hms: str) -> datetime:
    h, m, s = (int(x) for x in hms.split(":"))
    # seconds fields of 60 and above carry into the minute
    return datetime(2015, 11, 3, h, m, tzinfo=CET) + timedelta(seconds=s)


MEDICATION_ROWS = [
    ("08:45:23", "Medicine cabinet", "Taking medicine"),
    ("08:46:11", "Dishes & cups cabinet", "Taking medicine"),
    ("08:46:45", "Water", "Taking medicine"),
    ("08:47:59", "Dishes & cups cabinet", "Eating"),
    ("08:47:89", "Dishwasher", "Eating"),
    ("17:10:58", "Dishes & cups cabinet", "Taking medicine"),
    ("17:10:69", "Medicine cabinet", "Taking medicine"),
    ("17:11:18", "Water", "Taking medicine"),
]

COLLAPSED_ROWS = [
    ("08:45:23", "Taking medicine", "start"),
    ("08:46:45", "Taking medicine", "complete"),
    ("08:47:59", "Eating", "start"),
    ("08:47:89", "Eating", "complete"),
    ("17:10:58", "Taking medicine", "start"),
    ("17:11:18", "Taking medicine", "complete"),
]


def medication_trace() -> Trace:
    """Eight labeled sensor events of one morning and evening."""
    return Trace("1", [Event({TIMESTAMP: _ts(t), CONCEPT_NAME: name, LABEL: lab}) for t, name, lab in MEDICATION_ROWS])


def collapsed_medication_trace() -> Trace:
    return Trace("1", [Event({CONCEPT_NAME: name, TIMESTAMP: _ts(t), LIFECYCLE: lc}) for t, name, lc in COLLAPSED_ROWS])


@pytest.fixture
def medication():
    return medication_trace()


@pytest.fixture
def collapsed_medication():
    return collapsed_medication_trace()


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the lines are repeated in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(name: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

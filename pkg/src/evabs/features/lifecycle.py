"""Pairing of consecutive lifecycle steps of the same activity."""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass
from datetime import datetime
from typing import Optional

from ..xes import CONCEPT_NAME, LIFECYCLE, TIMESTAMP, Trace

# For each lifecycle value, the values that may directly precede it, tried in
# order. Standard transactional model: schedule < start < suspend/resume < complete.
PREDECESSORS = {
    "start": ("schedule",),
    "suspend": ("resume", "start"),
    "resume": ("suspend",),
    "complete": ("resume", "start"),
}


@dataclass(frozen=True)
class LifecyclePair:
    concept_name: str
    from_value: str
    to_value: str
    duration: float  # seconds
    event_index: int  # index of the later event in the trace


def pair_lifecycles(trace: Trace, diagnostics: Optional[Counter] = None) -> list:
    """FIFO pairing: the k-th ``complete`` of A closes the k-th open ``start`` of A.

    Events without a lifecycle value or timestamp, and steps with no open
    predecessor, produce no pair; they are tallied in ``diagnostics``.
    """
    queues: dict = {}
    pairs = []
    for i, event in enumerate(trace.events):
        value = event.get(LIFECYCLE)
        ts = event.get(TIMESTAMP)
        if value is None or not isinstance(ts, datetime):
            if diagnostics is not None:
                diagnostics["no_lifecycle"] += 1
            continue
        value = str(value).lower()
        name = str(event.get(CONCEPT_NAME))
        per_concept = queues.setdefault(name, {})
        matched = False
        for prev in PREDECESSORS.get(value, ()):
            q = per_concept.get(prev)
            if q:
                start_ts = q.popleft()
                pairs.append(LifecyclePair(name, prev, value, (ts - start_ts).total_seconds(), i))
                matched = True
                break
        if not matched and diagnostics is not None and value in PREDECESSORS:
            diagnostics["unmatched"] += 1
        per_concept.setdefault(value, deque()).append(ts)
    return pairs

"""Labeled Petri nets, token-game semantics, and a hierarchical playout simulator
that generates annotated sensor-level logs."""
from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterable, Mapping, Optional

import numpy as np

from .xes import CONCEPT_NAME, LABEL, TIMESTAMP, Event, EventLog, Trace, standard_extensions


class PetriNetError(ValueError):
    pass


class SimulationError(RuntimeError):
    pass


class Marking:
    """Immutable multiset of tokens over places."""

    __slots__ = ("_counts", "_hash")

    def __init__(self, tokens: Iterable | Mapping = ()):
        counts = Counter(tokens) if not isinstance(tokens, Mapping) else Counter(dict(tokens))
        for place, c in counts.items():
            if c < 0:
                raise PetriNetError(f"negative token count for place {place!r}")
        self._counts = {p: int(c) for p, c in counts.items() if c > 0}
        self._hash = None

    def __getitem__(self, place) -> int:
        return self._counts.get(place, 0)

    def places(self) -> frozenset:
        return frozenset(self._counts)

    def items(self):
        return self._counts.items()

    def __len__(self) -> int:
        return sum(self._counts.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Marking):
            return NotImplemented
        return self._counts == other._counts

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._counts.items()))
        return self._hash

    def __repr__(self) -> str:
        body = ", ".join(f"{p}" if c == 1 else f"{p}^{c}" for p, c in sorted(self._counts.items(), key=str))
        return f"Marking({{{body}}})"


@dataclass(frozen=True)
class LabeledPetriNet:
    """Places, transitions, flow arcs, and a labeling; a ``None`` label is a silent step (tau)."""

    places: frozenset
    transitions: frozenset
    arcs: frozenset  # (source, target) pairs, place->transition or transition->place
    labels: Mapping  # transition -> label or None
    initial_marking: Marking = field(default_factory=Marking)
    final_markings: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "places", frozenset(self.places))
        object.__setattr__(self, "transitions", frozenset(self.transitions))
        object.__setattr__(self, "arcs", frozenset(self.arcs))
        object.__setattr__(self, "labels", dict(self.labels))
        object.__setattr__(self, "final_markings", tuple(self.final_markings))
        if self.places & self.transitions:
            raise PetriNetError(f"places and transitions overlap: {sorted(self.places & self.transitions)}")
        for src, dst in self.arcs:
            ok = (src in self.places and dst in self.transitions) or (src in self.transitions and dst in self.places)
            if not ok:
                raise PetriNetError(f"arc {src!r} -> {dst!r} must join a place and a transition of the net")
        if set(self.labels) != set(self.transitions):
            raise PetriNetError("labeling must be defined on exactly the transitions")
        for m in (self.initial_marking, *self.final_markings):
            if not m.places() <= self.places:
                raise PetriNetError(f"marking {m} uses unknown places")
        pre: dict = {t: [] for t in self.transitions}
        post: dict = {t: [] for t in self.transitions}
        for src, dst in self.arcs:
            if src in self.transitions:
                post[src].append(dst)
            else:
                pre[dst].append(src)
        object.__setattr__(self, "_pre", {t: tuple(sorted(v)) for t, v in pre.items()})
        object.__setattr__(self, "_post", {t: tuple(sorted(v)) for t, v in post.items()})
        object.__setattr__(self, "_order", tuple(sorted(self.transitions)))

    def preset(self, t) -> tuple:
        return self._pre[t]

    def postset(self, t) -> tuple:
        return self._post[t]

    @property
    def ordered_transitions(self) -> tuple:
        return self._order

    def label_set(self) -> set:
        return {lab for lab in self.labels.values() if lab is not None}

    def is_final(self, marking: Marking) -> bool:
        return marking in self.final_markings


def enabled(net: LabeledPetriNet, marking: Marking) -> list:
    """Transitions whose every input place holds a token, in sorted order."""
    return [t for t in net.ordered_transitions if all(marking[p] > 0 for p in net.preset(t))]


def fire(net: LabeledPetriNet, marking: Marking, t) -> Marking:
    if t not in net.transitions:
        raise PetriNetError(f"unknown transition {t!r}")
    if not all(marking[p] > 0 for p in net.preset(t)):
        raise PetriNetError(f"transition {t!r} is not enabled in {marking}")
    counts = Counter(dict(marking.items()))
    counts.subtract(net.preset(t))
    counts.update(net.postset(t))
    return Marking(counts)


def can_reach_final(net: LabeledPetriNet, max_states: int = 10_000, token_bound: int = 16) -> bool:
    """Breadth-first search for a final marking, bounded in states and tokens per place."""
    start = net.initial_marking
    seen = {start}
    queue = deque([start])
    while queue:
        m = queue.popleft()
        if net.is_final(m):
            return True
        for t in enabled(net, m):
            nxt = fire(net, m, t)
            if nxt in seen or any(c > token_bound for _, c in nxt.items()):
                continue
            if len(seen) >= max_states:
                return False
            seen.add(nxt)
            queue.append(nxt)
    return False


def build_net(
    arcs: Iterable, labels: Mapping, initial: Iterable, finals: Iterable, places: Iterable = ()
) -> LabeledPetriNet:
    """Convenience constructor: places are inferred from arcs that do not start or end at a transition."""
    arcs = list(arcs)
    transitions = set(labels)
    inferred = set(places)
    for src, dst in arcs:
        inferred |= {x for x in (src, dst) if x not in transitions}
    inferred |= set(initial)
    for f in finals:
        inferred |= set(f)
    return LabeledPetriNet(
        frozenset(inferred), frozenset(transitions), frozenset(arcs), labels,
        Marking(initial), tuple(Marking(f) for f in finals),
    )


@dataclass(frozen=True)
class HierarchicalModel:
    top_level: LabeledPetriNet
    sub_models: Mapping  # high-level label -> LabeledPetriNet over sensor-level labels

    def __post_init__(self):
        object.__setattr__(self, "sub_models", dict(self.sub_models))
        missing = self.top_level.label_set() - set(self.sub_models)
        if missing:
            raise PetriNetError(f"no sub-model for top-level labels {sorted(missing)}")
        if not self.top_level.final_markings:
            raise PetriNetError("top-level net has no final marking")
        for label, net in self.sub_models.items():
            if not can_reach_final(net):
                raise PetriNetError(f"sub-model {label!r} cannot reach a final marking")


def motivating_example() -> HierarchicalModel:
    """Two alternating high-level activities, each defined by a sensor-level net.

    TakingMedicine: medicine cabinet (MC) and dishes/cups cabinet (DCC) in
    parallel, then water (W); a silent loop may repeat the whole block.
    Eating: cups/dishes cabinet (CD) and DCC loop in one branch while the
    dishwasher (D) fires once in a parallel branch.
    """
    top = build_net(
        arcs=[("p1", "t_tm"), ("t_tm", "p2"), ("p2", "t_eat"), ("t_eat", "p1")],
        labels={"t_tm": "TakingMedicine", "t_eat": "Eating"},
        initial=["p1"],
        finals=[["p2"]],
    )
    taking_medicine = build_net(
        arcs=[
            ("p1", "tau_split"), ("tau_split", "p2"), ("tau_split", "p3"),
            ("p2", "t_mc"), ("t_mc", "p4"),
            ("p3", "t_dcc"), ("t_dcc", "p5"),
            ("p4", "t_w"), ("p5", "t_w"), ("t_w", "p6"),
            ("p6", "tau_loop"), ("tau_loop", "p2"), ("tau_loop", "p5"),
        ],
        labels={"tau_split": None, "t_mc": "MC", "t_dcc": "DCC", "t_w": "W", "tau_loop": None},
        initial=["p1"],
        finals=[["p6"]],
    )
    eating = build_net(
        arcs=[
            ("p1", "tau_split"), ("tau_split", "p2"), ("tau_split", "p3"),
            ("p2", "t_cd"), ("t_cd", "p2"),
            ("p2", "t_dcc"), ("t_dcc", "p2"),
            ("p3", "t_d"),
        ],
        labels={"tau_split": None, "t_cd": "CD", "t_dcc": "DCC", "t_d": "D"},
        initial=["p1"],
        finals=[["p2"]],
    )
    return HierarchicalModel(top, {"TakingMedicine": taking_medicine, "Eating": eating})


@dataclass(frozen=True)
class StopPolicy:
    """``final_marking_stop_probability`` is the chance of stopping each time a
    final marking is reached, at both the top level and inside sub-models."""

    max_steps: int = 1000
    final_marking_stop_probability: float = 0.5

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 <= self.final_marking_stop_probability <= 1.0:
            raise ValueError("final_marking_stop_probability must lie in [0, 1]")


MIN_INCREMENT_S = 30.0
MAX_INCREMENT_S = 300.0
FIRST_HOUR, LAST_HOUR = 7.0, 21.0
MAX_ATTEMPTS = 100
EPOCH = datetime(2015, 11, 3, tzinfo=timezone.utc)


class _StepLimit(Exception):
    pass


def _playout(net: LabeledPetriNet, rng, stop_p: float, budget: list, name: str):
    """Random playout from the initial marking until stopping at a final marking.

    Yields (transition, label) for every fired transition; ``budget[0]`` counts
    remaining steps and is shared with the caller.
    """
    m = net.initial_marking
    while True:
        if net.is_final(m):
            ts = enabled(net, m)
            if not ts or rng.random() < stop_p:
                return
        else:
            ts = enabled(net, m)
            if not ts:
                raise SimulationError(f"sub-model {name!r} deadlocked in {m} before reaching a final marking")
        if budget[0] <= 0:
            raise _StepLimit
        budget[0] -= 1
        t = ts[int(rng.integers(len(ts)))]
        m = fire(net, m, t)
        yield t, net.labels[t]


def _simulate_trace(model: HierarchicalModel, rng, policy: StopPolicy, day: int) -> list:
    budget = [policy.max_steps]
    p = policy.final_marking_stop_probability
    start = EPOCH + timedelta(days=day, seconds=float(rng.uniform(FIRST_HOUR * 3600, LAST_HOUR * 3600)))
    now = start.replace(microsecond=(start.microsecond // 1000) * 1000)
    events = []
    for _, high in _playout(model.top_level, rng, p, budget, "top level"):
        if high is None:
            continue
        for _, low in _playout(model.sub_models[high], rng, p, budget, high):
            if low is None:
                continue
            if events:
                ms = int(round(rng.uniform(MIN_INCREMENT_S, MAX_INCREMENT_S) * 1000))
                now = now + timedelta(milliseconds=ms)
            events.append(Event({CONCEPT_NAME: low, TIMESTAMP: now, LABEL: high}))
    return events


def simulate(
    model: HierarchicalModel, n_traces: int, seed: int = 0, stop_policy: StopPolicy = StopPolicy()
) -> EventLog:
    """Annotated sensor-level log; trace ``i`` is drawn from its own generator seeded by ``(seed, i, attempt)``."""
    if n_traces < 1:
        raise ValueError("n_traces must be >= 1")
    traces = []
    for i in range(n_traces):
        for attempt in range(MAX_ATTEMPTS):
            rng = np.random.default_rng([seed, i, attempt])
            try:
                events = _simulate_trace(model, rng, stop_policy, i)
            except _StepLimit:
                continue
            if events:
                break
        else:
            raise SimulationError(f"trace {i}: no playout finished within {stop_policy.max_steps} steps "
                                  f"after {MAX_ATTEMPTS} attempts")
        case_day = events[0][TIMESTAMP].date().isoformat()
        traces.append(Trace(f"{i:04d}-{case_day}", events))
    return EventLog(
        traces=traces,
        global_event_attributes={CONCEPT_NAME, TIMESTAMP, LABEL},
        classifiers={"Activity": (CONCEPT_NAME,)},
        extensions=standard_extensions("concept", "time"),
    )

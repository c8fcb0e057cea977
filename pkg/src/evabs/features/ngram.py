"""Categorical label distributions conditioned on attribute n-grams."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from ..xes import CONCEPT_NAME, GROUP, LABEL, RESOURCE, ROLE, EventLog, Trace

NGRAM_KEYS = (CONCEPT_NAME, RESOURCE, ROLE, GROUP)
BOUNDARY = "\x02<bos>"  # left padding before the first event of a trace
MISSING = "\x02<missing>"
ALPHA = 0.01


@dataclass(frozen=True)
class NGramModel:
    attribute_key: str
    n: int
    labels: tuple
    table: dict  # n-gram tuple -> np.ndarray of probabilities aligned with labels

    def distribution(self, history: Sequence[str]) -> np.ndarray:
        history = tuple(history)
        if len(history) != self.n:
            raise ValueError(f"history must have length {self.n}, got {len(history)}")
        dist = self.table.get(history)
        if dist is None:
            return np.full(len(self.labels), 1.0 / len(self.labels))
        return dist

    def to_dict(self) -> dict:
        rows = sorted(self.table.items())
        return {
            "attribute_key": self.attribute_key,
            "n": self.n,
            "labels": list(self.labels),
            "table": [[list(k), [float(p) for p in v]] for k, v in rows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NGramModel":
        table = {tuple(k): np.asarray(v, dtype=float) for k, v in d["table"]}
        return cls(d["attribute_key"], int(d["n"]), tuple(d["labels"]), table)


def attribute_tokens(trace: Trace, attribute_key: str) -> list:
    out = []
    for event in trace.events:
        value = event.get(attribute_key)
        out.append(MISSING if value is None else str(value))
    return out


def histories(tokens: Sequence[str], n: int) -> list:
    """The trailing n-gram at every position, left-padded with BOUNDARY."""
    padded = [BOUNDARY] * (n - 1) + list(tokens)
    return [tuple(padded[i : i + n]) for i in range(len(tokens))]


def fit_ngram(
    annotated: EventLog,
    attribute_key: str,
    n: int,
    labels: Optional[Iterable[str]] = None,
    alpha: float = ALPHA,
) -> NGramModel:
    """Estimate P(label of the n-th event | n-gram) by smoothed counting.

    ``labels`` fixes the label alphabet (sorted labels of the log by default).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if annotated.n_events == 0:
        raise ValueError("cannot fit an n-gram model on an empty log")
    if labels is None:
        labels = sorted({str(e[LABEL]) for e in annotated.events() if LABEL in e})
    labels = tuple(labels)
    index = {lab: i for i, lab in enumerate(labels)}
    counts = defaultdict(lambda: np.zeros(len(labels)))
    for ti, trace in enumerate(annotated.traces):
        for ei, (hist, event) in enumerate(zip(histories(attribute_tokens(trace, attribute_key), n), trace.events)):
            label = event.get(LABEL)
            if label is None:
                raise ValueError(f"trace {ti} event {ei} has no label")
            if label not in index:
                raise ValueError(f"label {label!r} is outside the alphabet")
            counts[hist][index[label]] += 1
    denom_extra = alpha * len(labels)
    table = {h: (c + alpha) / (c.sum() + denom_extra) for h, c in counts.items()}
    return NGramModel(attribute_key, n, labels, table)


def ngram_feature(model: NGramModel, history: Sequence[str], label: str) -> float:
    """Smoothed probability of ``label`` given ``history``; uniform for unseen n-grams."""
    try:
        j = model.labels.index(label)
    except ValueError:
        raise ValueError(f"label {label!r} is not in the model's alphabet") from None
    return float(model.distribution(history)[j])

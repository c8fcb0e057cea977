"""Damerau-Levenshtein similarity and leave-one-trace-out cross-validation."""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import crf
from .abstraction import AbstractionError, annotate, label_runs, train_abstractor
from .features import FeatureConfig
from .xes import LABEL, EventLog, Trace


def damerau_levenshtein(a: Sequence, b: Sequence) -> int:
    """Optimal-string-alignment distance: insert, delete, substitute and
    adjacent transposition, with no substring edited more than once."""
    a, b = list(a), list(b)
    n, m = len(a), len(b)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            best = min(d[i - 1, j] + 1, d[i, j - 1] + 1, d[i - 1, j - 1] + cost)
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                best = min(best, d[i - 2, j - 2] + 1)
            d[i, j] = best
    return int(d[n, m])


def dls(a: Sequence, b: Sequence) -> float:
    """1 - distance / max length; two empty sequences are identical (1.0)."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - damerau_levenshtein(a, b) / longest


def ground_truth_sequence(trace: Trace) -> list:
    """One label per maximal run of equal consecutive labels."""
    return [label for label, _, _ in label_runs(trace)]


def event_labels(trace: Trace) -> list:
    out = []
    for i, e in enumerate(trace.events):
        if LABEL not in e:
            raise AbstractionError(f"trace {trace.case_id!r} event {i} has no label attribute")
        out.append(e[LABEL])
    return out


def run_length(labels: Sequence) -> list:
    out = []
    for lab in labels:
        if not out or out[-1] != lab:
            out.append(lab)
    return out


@dataclass
class FoldReport:
    held_out_case_id: str
    dls: float
    predicted_sequence: list
    ground_truth_sequence: list
    event_dls: float  # per-event label sequences, without run-length encoding
    n_events: int

    def __post_init__(self):
        if not 0.0 <= self.dls <= 1.0:
            raise ValueError(f"dls {self.dls} outside [0, 1]")


@dataclass
class EvaluationReport:
    folds: list
    labels: list = field(default_factory=list)
    confusion: dict = field(default_factory=dict)  # (gold, predicted) -> count

    @property
    def mean_dls(self) -> float:
        return float(np.mean([f.dls for f in self.folds])) if self.folds else float("nan")

    @property
    def mean_event_dls(self) -> float:
        return float(np.mean([f.event_dls for f in self.folds])) if self.folds else float("nan")

    @property
    def event_accuracy(self) -> float:
        total = sum(self.confusion.values())
        hits = sum(c for (g, p), c in self.confusion.items() if g == p)
        return hits / total if total else float("nan")

    def to_dict(self) -> dict:
        return {
            "mean_dls": self.mean_dls,
            "mean_event_dls": self.mean_event_dls,
            "event_accuracy": self.event_accuracy,
            "labels": list(self.labels),
            "confusion": [
                {"gold": g, "predicted": p, "count": c} for (g, p), c in sorted(self.confusion.items())
            ],
            "folds": [
                {
                    "case_id": f.held_out_case_id,
                    "dls": f.dls,
                    "event_dls": f.event_dls,
                    "n_events": f.n_events,
                    "predicted_length": len(f.predicted_sequence),
                    "ground_truth_length": len(f.ground_truth_sequence),
                    "predicted": list(f.predicted_sequence),
                    "ground_truth": list(f.ground_truth_sequence),
                }
                for f in self.folds
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    def summary(self) -> str:
        width = max([len("case"), *(len(str(f.held_out_case_id)) for f in self.folds)])
        lines = [f"{'case':<{width}}  {'dls':>7}  {'pred':>5}  {'gold':>5}  {'events':>6}"]
        for f in self.folds:
            lines.append(
                f"{str(f.held_out_case_id):<{width}}  {f.dls:7.4f}  {len(f.predicted_sequence):5d}  "
                f"{len(f.ground_truth_sequence):5d}  {f.n_events:6d}"
            )
        lines.append(f"mean DLS {self.mean_dls:.4f} over {len(self.folds)} folds")
        lines.append(f"per-event DLS {self.mean_event_dls:.4f}, event accuracy {self.event_accuracy:.4f}")
        return "\n".join(lines)


def fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def _default_fit(train_log: EventLog, feature_config: FeatureConfig, train_config: crf.TrainConfig):
    return train_abstractor(train_log, feature_config, train_config)


def _default_predict(model, trace: Trace) -> list:
    return event_labels(annotate(model, EventLog([trace])).traces[0])


def hide_labels(trace: Trace) -> Trace:
    return trace.with_events(e.without(LABEL) for e in trace.events)


def loto_cv(
    annotated: EventLog,
    feature_config: FeatureConfig = FeatureConfig(),
    train_config: crf.TrainConfig = crf.TrainConfig(),
    fit: Optional[Callable] = None,
    predict: Optional[Callable] = None,
    threads: Optional[int] = 1,
) -> EvaluationReport:
    """Leave each trace out once, train on the rest, and score the held-out trace.

    ``fit(train_log, feature_config, train_config) -> model`` and
    ``predict(model, unlabeled_trace) -> labels`` can be swapped out, e.g. for
    an oracle in tests. Fold ``i`` trains with seeds derived from
    ``(seed, i)``, so results do not depend on scheduling.
    """
    traces = list(annotated.traces)
    if len(traces) < 2:
        raise AbstractionError(f"leave-one-trace-out needs at least 2 traces, got {len(traces)}")
    gold = [event_labels(t) for t in traces]
    fit = fit or _default_fit
    predict = predict or _default_predict

    def run(i: int):
        fc = replace(feature_config, seed=fold_seed(feature_config.seed, i))
        tc = replace(train_config, seed=fold_seed(train_config.seed, i))
        model = fit(annotated.with_traces(traces[:i] + traces[i + 1:]), fc, tc)
        predicted = list(predict(model, hide_labels(traces[i])))
        if len(predicted) != len(gold[i]):
            raise AbstractionError(f"fold {i}: predicted {len(predicted)} labels for {len(gold[i])} events")
        p_seq, g_seq = run_length(predicted), run_length(gold[i])
        report = FoldReport(traces[i].case_id, dls(p_seq, g_seq), p_seq, g_seq, dls(predicted, gold[i]), len(gold[i]))
        return report, predicted

    workers = threads or os.cpu_count() or 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(len(traces))))
    else:
        results = [run(i) for i in range(len(traces))]

    confusion: dict = {}
    for (_, predicted), g in zip(results, gold):
        for gl, pl in zip(g, predicted):
            confusion[(gl, pl)] = confusion.get((gl, pl), 0) + 1
    labels = sorted({lab for g in gold for lab in g} | {p for _, pr in results for p in pr})
    return EvaluationReport([r for r, _ in results], labels, confusion)

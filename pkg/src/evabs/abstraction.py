"""Supervised event abstraction: train on annotated traces, label new traces,
and collapse label runs into start/complete activity events."""
from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from typing import Sequence

import numpy as np

from . import crf
from .features import (
    FeatureConfig,
    FeatureConfigError,
    FittedFeatureModels,
    GaussianMixture,
    NGramModel,
    VonMisesMixture,
    build_registry,
    extract_features,
    fit_feature_models,
)
from .features.extract import CircularTimeSpec, spec_from_dict, spec_to_dict
from .xes import (
    CONCEPT_NAME,
    LABEL,
    LIFECYCLE,
    TIMESTAMP,
    Event,
    EventLog,
    Trace,
    standard_extensions,
)

FORMAT_VERSION = 1


class AbstractionError(ValueError):
    pass


@dataclass
class AbstractorModel:
    labels: tuple
    registry: list
    feature_models: FittedFeatureModels
    crf_model: crf.CrfModel
    feature_config: FeatureConfig
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if len(self.registry) != self.crf_model.n_features:
            raise AbstractionError(
                f"registry has {len(self.registry)} features but the CRF expects {self.crf_model.n_features}"
            )
        if tuple(self.labels) != self.crf_model.labels:
            raise AbstractionError("label alphabet differs from the CRF's")

    def features(self, trace: Trace) -> np.ndarray:
        return extract_features(trace, self.registry, self.feature_models)

    def predict(self, trace: Trace) -> list:
        return crf.viterbi(self.crf_model, self.features(trace))


def _labels_of(annotated: EventLog) -> tuple:
    labels = set()
    for ti, trace in enumerate(annotated.traces):
        for ei, event in enumerate(trace.events):
            if LABEL not in event:
                raise AbstractionError(f"trace {ti} event {ei} has no label attribute")
            labels.add(str(event[LABEL]))
    return tuple(sorted(labels))


def training_set(model_registry, models, annotated: EventLog) -> list:
    return [
        (extract_features(t, model_registry, models), [str(e[LABEL]) for e in t.events])
        for t in annotated.traces
        if len(t)
    ]


def train_abstractor(
    annotated: EventLog,
    feature_config: FeatureConfig = FeatureConfig(),
    train_config: crf.TrainConfig = crf.TrainConfig(),
) -> AbstractorModel:
    """Fit feature models on ``annotated``, extract features, and train the CRF."""
    labels = _labels_of(annotated)
    if len(labels) < 2:
        raise AbstractionError(f"need at least 2 distinct labels, found {len(labels)}")
    if feature_config.is_empty:
        raise AbstractionError("feature configuration selects no feature families")
    registry = build_registry(feature_config, labels, annotated)
    if not registry:
        raise AbstractionError("feature configuration produced no features")
    if any(isinstance(s, CircularTimeSpec) for s in registry):
        for ti, trace in enumerate(annotated.traces):
            for ei, event in enumerate(trace.events):
                if not isinstance(event.get(TIMESTAMP), datetime):
                    raise AbstractionError(f"trace {ti} event {ei}: time features need time:timestamp")
    models = fit_feature_models(
        annotated, registry, labels, feature_config.max_components, seed=feature_config.seed
    )
    data = training_set(registry, models, annotated)
    model = crf.train(data, train_config, labels)
    return AbstractorModel(labels, registry, models, model, feature_config)


def annotate(model: AbstractorModel, unannotated: EventLog) -> EventLog:
    """Copy of ``unannotated`` where every event's ``label`` is the Viterbi prediction."""
    traces = []
    for ti, trace in enumerate(unannotated.traces):
        try:
            predicted = model.predict(trace)
        except (FeatureConfigError, crf.CrfError) as exc:
            raise AbstractionError(f"trace {ti} ({trace.case_id!r}): {exc}") from None
        traces.append(trace.with_events(e.replace({LABEL: lab}) for e, lab in zip(trace.events, predicted)))
    globals_ = set(unannotated.global_event_attributes)
    if traces and all(len(t) for t in traces):
        globals_.add(LABEL)
    return unannotated.with_traces(traces, global_event_attributes=globals_)


def label_runs(trace: Trace) -> list:
    """[(label, first_index, last_index)] for each maximal run of equal labels."""
    runs = []
    for i, event in enumerate(trace.events):
        if LABEL not in event:
            raise AbstractionError(f"trace {trace.case_id!r} event {i} has no label attribute")
        label = event[LABEL]
        if runs and runs[-1][0] == label:
            runs[-1][2] = i
        else:
            runs.append([label, i, i])
    return [tuple(r) for r in runs]


def collapse(labeled_trace: Trace) -> Trace:
    """Replace each run of equal labels by a ``start`` and a ``complete`` event.

    The start carries the run's first timestamp and the complete its last one.
    Output is chronological; at equal timestamps starts precede completes and
    otherwise run order is kept, so a time-ordered trace yields
    start, complete, start, complete, ...
    """
    events = labeled_trace.events
    keyed = []
    for r, (label, first, last) in enumerate(label_runs(labeled_trace)):
        stamps = []
        for idx in (first, last):
            ts = events[idx].get(TIMESTAMP)
            if not isinstance(ts, datetime):
                raise AbstractionError(f"trace {labeled_trace.case_id!r} event {idx} has no timestamp")
            stamps.append(ts)
        start, end = stamps
        keyed.append(((start, 0, r), Event({CONCEPT_NAME: str(label), TIMESTAMP: start, LIFECYCLE: "start"})))
        keyed.append(((end, 1, r), Event({CONCEPT_NAME: str(label), TIMESTAMP: end, LIFECYCLE: "complete"})))
    keyed.sort(key=lambda item: item[0])
    return Trace(labeled_trace.case_id, [e for _, e in keyed], labeled_trace.attributes)


def collapse_log(labeled: EventLog) -> EventLog:
    return EventLog(
        traces=[collapse(t) for t in labeled.traces],
        global_event_attributes={CONCEPT_NAME, TIMESTAMP, LIFECYCLE} if labeled.n_events else set(),
        global_trace_attributes=labeled.global_trace_attributes,
        classifiers={"Activity": (CONCEPT_NAME, LIFECYCLE)},
        extensions=standard_extensions("concept", "time", "lifecycle"),
        attributes=labeled.attributes,
    )


def abstract_log(model: AbstractorModel, unannotated: EventLog) -> EventLog:
    return collapse_log(annotate(model, unannotated))


# ---------------------------------------------------------------- persistence


def model_to_dict(model: AbstractorModel) -> dict:
    fm = model.feature_models
    cfg = model.feature_config
    return {
        "format_version": model.format_version,
        "labels": list(model.labels),
        "feature_config": {
            "ngrams": [list(x) for x in cfg.ngrams],
            "periods": list(cfg.periods),
            "lifecycle": cfg.lifecycle,
            "max_components": cfg.max_components,
            "seed": cfg.seed,
        },
        "registry": [spec_to_dict(s) for s in model.registry],
        "ngram_models": [fm.ngrams[k].to_dict() for k in sorted(fm.ngrams)],
        "time_models": [
            {"period": p, "label": lab, "mixture": fm.circular[(p, lab)].to_dict()}
            for p, lab in sorted(fm.circular)
        ],
        "duration_models": [
            {"label": lab, "from": f, "mixture": None if fm.lifecycle[(lab, f)] is None else fm.lifecycle[(lab, f)].to_dict()}
            for lab, f in sorted(fm.lifecycle)
        ],
        "crf": {
            "labels": list(model.crf_model.labels),
            "n_features": model.crf_model.n_features,
            "weights": [float(w) for w in model.crf_model.weights],
        },
    }


def model_from_dict(d: dict) -> AbstractorModel:
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise AbstractionError(f"unsupported model format_version {version!r} (expected {FORMAT_VERSION})")
    try:
        fm = FittedFeatureModels()
        for m in d["ngram_models"]:
            ng = NGramModel.from_dict(m)
            fm.ngrams[(ng.attribute_key, ng.n)] = ng
        for m in d["time_models"]:
            fm.circular[(m["period"], m["label"])] = VonMisesMixture.from_dict(m["mixture"])
        for m in d["duration_models"]:
            mix = m["mixture"]
            fm.lifecycle[(m["label"], m["from"])] = None if mix is None else GaussianMixture.from_dict(mix)
        c = d["crf"]
        crf_model = crf.CrfModel(tuple(c["labels"]), int(c["n_features"]), np.asarray(c["weights"], dtype=float))
        fc = d["feature_config"]
        config = FeatureConfig(
            ngrams=tuple(tuple(x) for x in fc["ngrams"]),
            periods=tuple(fc["periods"]),
            lifecycle=bool(fc["lifecycle"]),
            max_components=int(fc["max_components"]),
            seed=int(fc["seed"]),
        )
        registry = [spec_from_dict(s) for s in d["registry"]]
        return AbstractorModel(tuple(d["labels"]), registry, fm, crf_model, config, version)
    except (KeyError, TypeError) as exc:
        raise AbstractionError(f"malformed model document: {exc}") from None


def dumps_model(model: AbstractorModel) -> str:
    # json writes floats with repr(), the shortest text that round-trips exactly
    return json.dumps(model_to_dict(model), indent=1, sort_keys=False) + "\n"


def loads_model(text: str) -> AbstractorModel:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AbstractionError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(d)


def save_model(model: AbstractorModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> AbstractorModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())

"""Feature registry, fitting of all feature models, and per-event feature vectors."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional, Sequence, Union

import numpy as np

from ..xes import CONCEPT_NAME, LABEL, TIMESTAMP, EventLog, Trace
from .circular import PERIODS, VonMisesMixture, fit_vmmm, timestamp_to_angle
from .gaussian import GaussianMixture, fit_gmm
from .lifecycle import pair_lifecycles
from .ngram import NGRAM_KEYS, NGramModel, attribute_tokens, fit_ngram, histories


class FeatureConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NGramSpec:
    attribute_key: str
    n: int
    label: str

    def __post_init__(self):
        if self.attribute_key not in NGRAM_KEYS:
            raise FeatureConfigError(f"n-gram attribute must be one of {NGRAM_KEYS}")
        if self.n < 1:
            raise FeatureConfigError("n-gram size must be >= 1")


@dataclass(frozen=True)
class CircularTimeSpec:
    period: str
    label: str

    def __post_init__(self):
        if self.period not in PERIODS:
            raise FeatureConfigError(f"period must be one of {PERIODS}")


@dataclass(frozen=True)
class LifecycleDurationSpec:
    label: str
    lifecycle_value: str  # the earlier lifecycle step the duration is measured from


FeatureSpec = Union[NGramSpec, CircularTimeSpec, LifecycleDurationSpec]


@dataclass(frozen=True)
class FeatureConfig:
    """Which feature families to instantiate; each family gets one spec per label."""

    ngrams: tuple = ((CONCEPT_NAME, 2),)
    periods: tuple = ("day",)
    lifecycle: bool = False
    max_components: int = 8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ngrams", tuple((str(k), int(n)) for k, n in self.ngrams))
        object.__setattr__(self, "periods", tuple(self.periods))
        for key, n in self.ngrams:
            NGramSpec(key, n, "")
        for p in self.periods:
            CircularTimeSpec(p, "")
        if self.max_components < 1:
            raise FeatureConfigError("max_components must be >= 1")

    @property
    def is_empty(self) -> bool:
        return not (self.ngrams or self.periods or self.lifecycle)


@dataclass
class FittedFeatureModels:
    ngrams: dict = field(default_factory=dict)  # (attribute_key, n) -> NGramModel
    circular: dict = field(default_factory=dict)  # (period, label) -> VonMisesMixture
    lifecycle: dict = field(default_factory=dict)  # (label, from_value) -> GaussianMixture | None


def training_durations(annotated: EventLog) -> dict:
    """(label, from_value) -> durations of pairs closed by events with that label."""
    out: dict = {}
    for trace in annotated.traces:
        for pair in pair_lifecycles(trace):
            label = trace.events[pair.event_index].get(LABEL)
            out.setdefault((str(label), pair.from_value), []).append(pair.duration)
    return out


def build_registry(config: FeatureConfig, labels: Sequence[str], annotated: Optional[EventLog] = None) -> list:
    """Ordered feature specs for ``config``.

    Lifecycle specs need the training log to know which lifecycle steps occur.
    """
    registry: list = []
    for key, n in config.ngrams:
        registry += [NGramSpec(key, n, lab) for lab in labels]
    for period in config.periods:
        registry += [CircularTimeSpec(period, lab) for lab in labels]
    if config.lifecycle:
        if annotated is None:
            raise FeatureConfigError("lifecycle features need the training log")
        froms = sorted({f for _, f in training_durations(annotated)})
        registry += [LifecycleDurationSpec(lab, f) for lab in labels for f in froms]
    return registry


def _event_angles(trace: Trace, period: str, where: str) -> np.ndarray:
    out = []
    for i, event in enumerate(trace.events):
        ts = event.get(TIMESTAMP)
        if not isinstance(ts, datetime):
            raise FeatureConfigError(f"{where} event {i}: time features need time:timestamp")
        out.append(timestamp_to_angle(ts, period))
    return np.asarray(out)


def fit_feature_models(
    annotated: EventLog, registry: Sequence[FeatureSpec], labels: Sequence[str], max_components: int = 8, seed: int = 0
) -> FittedFeatureModels:
    models = FittedFeatureModels()
    labels = tuple(labels)
    needed_ngrams = sorted({(s.attribute_key, s.n) for s in registry if isinstance(s, NGramSpec)})
    for key, n in needed_ngrams:
        models.ngrams[(key, n)] = fit_ngram(annotated, key, n, labels)

    circ = [s for s in registry if isinstance(s, CircularTimeSpec)]
    if circ:
        by_label: dict = {}
        for period in sorted({s.period for s in circ}):
            for ti, trace in enumerate(annotated.traces):
                angles = _event_angles(trace, period, f"trace {ti}")
                for event, a in zip(trace.events, angles):
                    by_label.setdefault((period, str(event.get(LABEL))), []).append(a)
        for i, spec in enumerate(circ):
            angles = by_label.get((spec.period, spec.label))
            if not angles:
                raise FeatureConfigError(f"no training events for label {spec.label!r}")
            models.circular[(spec.period, spec.label)] = fit_vmmm(angles, max_components, seed=seed + 1009 * i)

    life = [s for s in registry if isinstance(s, LifecycleDurationSpec)]
    if life:
        durations = training_durations(annotated)
        for i, spec in enumerate(life):
            d = durations.get((spec.label, spec.lifecycle_value))
            models.lifecycle[(spec.label, spec.lifecycle_value)] = (
                fit_gmm(d, max_components, seed=seed + 7919 * (i + 1)) if d else None
            )
    return models


def _check(registry, models: FittedFeatureModels) -> None:
    for spec in registry:
        if isinstance(spec, NGramSpec):
            m = models.ngrams.get((spec.attribute_key, spec.n))
            if m is None or spec.label not in m.labels:
                raise FeatureConfigError(f"no fitted n-gram model for {spec}")
        elif isinstance(spec, CircularTimeSpec):
            if (spec.period, spec.label) not in models.circular:
                raise FeatureConfigError(f"no fitted time model for {spec}")
        elif isinstance(spec, LifecycleDurationSpec):
            if (spec.label, spec.lifecycle_value) not in models.lifecycle:
                raise FeatureConfigError(f"no fitted duration model for {spec}")
        else:
            raise FeatureConfigError(f"unknown feature spec {spec!r}")


def extract_features(trace: Trace, registry: Sequence[FeatureSpec], models: FittedFeatureModels) -> np.ndarray:
    """Feature matrix of shape (len(trace), len(registry)); row t is event t's vector."""
    _check(registry, models)
    T = len(trace.events)
    X = np.zeros((T, len(registry)))
    if T == 0 or not registry:
        return X
    hist_cache: dict = {}
    angle_cache: dict = {}
    closing = None
    for k, spec in enumerate(registry):
        if isinstance(spec, NGramSpec):
            key = (spec.attribute_key, spec.n)
            model: NGramModel = models.ngrams[key]
            if key not in hist_cache:
                hs = histories(attribute_tokens(trace, spec.attribute_key), spec.n)
                hist_cache[key] = np.stack([model.distribution(h) for h in hs])
            X[:, k] = hist_cache[key][:, model.labels.index(spec.label)]
        elif isinstance(spec, CircularTimeSpec):
            if spec.period not in angle_cache:
                angle_cache[spec.period] = _event_angles(trace, spec.period, f"trace {trace.case_id!r}")
            vm: VonMisesMixture = models.circular[(spec.period, spec.label)]
            X[:, k] = vm.pdf(angle_cache[spec.period])
        else:
            if closing is None:
                closing = {p.event_index: p for p in pair_lifecycles(trace)}
            gm: Optional[GaussianMixture] = models.lifecycle[(spec.label, spec.lifecycle_value)]
            if gm is None:
                continue
            for t, pair in closing.items():
                if pair.from_value == spec.lifecycle_value:
                    X[t, k] = gm.pdf(pair.duration)[0]
    if not np.all(np.isfinite(X)):
        raise FeatureConfigError(f"non-finite feature value in trace {trace.case_id!r}")
    return X


def spec_to_dict(spec: FeatureSpec) -> dict:
    if isinstance(spec, NGramSpec):
        return {"family": "ngram", "attribute_key": spec.attribute_key, "n": spec.n, "label": spec.label}
    if isinstance(spec, CircularTimeSpec):
        return {"family": "time", "period": spec.period, "label": spec.label}
    return {"family": "lifecycle", "label": spec.label, "lifecycle_value": spec.lifecycle_value}


def spec_from_dict(d: dict) -> FeatureSpec:
    family = d.get("family")
    if family == "ngram":
        return NGramSpec(d["attribute_key"], int(d["n"]), d["label"])
    if family == "time":
        return CircularTimeSpec(d["period"], d["label"])
    if family == "lifecycle":
        return LifecycleDurationSpec(d["label"], d["lifecycle_value"])
    raise FeatureConfigError(f"unknown feature family {family!r}")

from collections import Counter
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evabs.features import (
    BOUNDARY,
    STD_FLOOR,
    CircularTimeSpec,
    FeatureConfig,
    FeatureConfigError,
    FittedFeatureModels,
    GaussianMixture,
    LifecycleDurationSpec,
    NGramSpec,
    build_registry,
    extract_features,
    fit_feature_models,
    fit_gmm,
    fit_ngram,
    ngram_feature,
    pair_lifecycles,
)
from evabs.features.gaussian import em_gmm
from evabs.features.ngram import MISSING, histories
from evabs.xes import CONCEPT_NAME, LABEL, LIFECYCLE, TIMESTAMP, Event, EventLog, Trace

import oracles

T0 = datetime(2015, 11, 3, 8, 0, tzinfo=timezone.utc)


def ev(name, label=None, minutes=0.0, lifecycle=None, **extra):
    attrs = {CONCEPT_NAME: name, TIMESTAMP: T0 + timedelta(minutes=minutes)}
    if lifecycle:
        attrs[LIFECYCLE] = lifecycle
    if label is not None:
        attrs[LABEL] = label
    attrs.update(extra)
    return Event(attrs)


def log_of(*traces):
    return EventLog([Trace(str(i), t) for i, t in enumerate(traces)])


# ---------------------------------------------------------------- n-grams


def test_unanimous_unigram():
    log = log_of([ev("MC", "TakingMedicine", i) for i in range(3)] + [ev("D", "Eating", 5)])
    m = fit_ngram(log, CONCEPT_NAME, 1)
    assert ngram_feature(m, ("MC",), "TakingMedicine") == pytest.approx(3.01 / 3.02)


def test_smoothed_counts_by_hand():
    log = log_of([ev("DCC", "TakingMedicine", 0), ev("DCC", "TakingMedicine", 1),
                  ev("DCC", "TakingMedicine", 2), ev("DCC", "Eating", 3)])
    m = fit_ngram(log, CONCEPT_NAME, 1)
    assert ngram_feature(m, ("DCC",), "TakingMedicine") == pytest.approx(3.01 / 4.02)
    assert ngram_feature(m, ("DCC",), "Eating") == pytest.approx(1.01 / 4.02)


def test_unseen_history_is_uniform():
    log = log_of([ev("a", "x", 0), ev("b", "y", 1)])
    m = fit_ngram(log, CONCEPT_NAME, 2)
    assert ngram_feature(m, ("zz", "zz"), "x") == 0.5


def test_boundary_padding_and_missing_token():
    assert histories(["a", "b", "c"], 3) == [(BOUNDARY, BOUNDARY, "a"), (BOUNDARY, "a", "b"), ("a", "b", "c")]
    log = log_of([ev("a", "x", 0), ev("b", "y", 1)])
    m = fit_ngram(log, "org:resource", 1)
    assert set(m.table) == {(MISSING,)}


def test_ngram_label_outside_alphabet():
    m = fit_ngram(log_of([ev("a", "x", 0), ev("b", "y", 1)]), CONCEPT_NAME, 1)
    with pytest.raises(ValueError):
        ngram_feature(m, ("a",), "nope")


def test_ngram_empty_log():
    with pytest.raises(ValueError):
        fit_ngram(EventLog(), CONCEPT_NAME, 1)


def test_ngram_table_is_exactly_observed_windows():
    log = log_of([ev("a", "x", 0), ev("b", "y", 1), ev("a", "x", 2)], [ev("b", "y", 0)])
    m = fit_ngram(log, CONCEPT_NAME, 2)
    assert set(m.table) == {(BOUNDARY, "a"), ("a", "b"), ("b", "a"), (BOUNDARY, "b")}


@given(
    st.lists(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("XYZ")), min_size=1, max_size=6),
             min_size=1, max_size=4),
    st.integers(1, 3),
    st.lists(st.sampled_from("abcd"), min_size=3, max_size=3),
)
@settings(max_examples=80, deadline=None)
def test_ngram_distributions_normalized(traces, n, query):
    log = log_of(*[[ev(a, lab, i) for i, (a, lab) in enumerate(t)] for t in traces])
    m = fit_ngram(log, CONCEPT_NAME, n)
    for dist in m.table.values():
        assert dist.sum() == pytest.approx(1.0, abs=1e-9)
    h = tuple(query[:n])
    assert sum(ngram_feature(m, h, lab) for lab in m.labels) == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------- lifecycles


def test_fifo_pairing_example():
    trace = Trace("1", [ev("A", minutes=0, lifecycle="start"), ev("A", minutes=5, lifecycle="start"),
                        ev("A", minutes=7, lifecycle="complete"), ev("A", minutes=9, lifecycle="complete")])
    pairs = pair_lifecycles(trace)
    assert [(p.duration, p.event_index) for p in pairs] == [(420.0, 2), (240.0, 3)]


def test_single_pair():
    trace = Trace("1", [ev("A", minutes=0, lifecycle="start"), ev("A", minutes=3, lifecycle="complete")])
    assert [p.duration for p in pair_lifecycles(trace)] == [180.0]


def test_unmatched_steps_are_counted():
    diag = Counter()
    trace = Trace("1", [ev("A", minutes=0, lifecycle="complete"), ev("B", minutes=1)])
    assert pair_lifecycles(trace, diag) == []
    assert diag == Counter(unmatched=1, no_lifecycle=1)


@given(st.lists(st.tuples(st.sampled_from("AB"), st.sampled_from(["start", "complete"])), max_size=14))
@settings(max_examples=100, deadline=None)
def test_pairing_matches_queue_oracle(steps):
    events = [ev(name, minutes=i, lifecycle=value) for i, (name, value) in enumerate(steps)]
    pairs = pair_lifecycles(Trace("1", events))
    expected = oracles.fifo_pairs([(n, v, i * 60.0) for i, (n, v) in enumerate(steps)])
    assert [(p.concept_name, p.duration, p.event_index) for p in pairs] == expected
    assert len(pairs) <= len(events)
    assert all(p.duration >= 0 for p in pairs)


# ---------------------------------------------------------------- Gaussian mixtures


def test_equal_durations():
    m = fit_gmm([42.0] * 10)
    assert m.n_components == 1
    assert m.means[0] == 42.0 and m.stds[0] == STD_FLOOR


def test_two_separated_duration_groups():
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.normal(10, 10 / 30, 100), rng.normal(600, 600 / 30, 100)])
    m = fit_gmm(x, max_components=4)
    assert m.n_components == 2
    lo, hi = sorted(m.means)
    assert lo == pytest.approx(10, rel=0.05) and hi == pytest.approx(600, rel=0.05)


@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
@settings(max_examples=30, deadline=None)
def test_gmm_em_monotone(seed, k):
    rng = np.random.default_rng(seed)
    x = np.abs(np.concatenate([rng.normal(30, 5, 30), rng.normal(200, 50, 30)]))
    h = np.asarray(em_gmm(x, k, rng).history)
    assert np.all(np.diff(h) >= -1e-9)


def test_gmm_input_errors():
    with pytest.raises(ValueError):
        fit_gmm([])
    with pytest.raises(ValueError):
        fit_gmm([-1.0, 2.0])


def test_gmm_weights_sum_to_one():
    with pytest.raises(ValueError):
        GaussianMixture((0.5, 0.6), (0, 1), (1, 1))


# ---------------------------------------------------------------- extraction


def toy_log():
    return log_of(
        [ev("MC", "TM", 0), ev("DCC", "TM", 3), ev("W", "TM", 6), ev("D", "Eat", 200), ev("DCC", "Eat", 203)],
        [ev("DCC", "TM", 10), ev("MC", "TM", 12), ev("W", "TM", 15), ev("CD", "Eat", 300)],
    )


def test_empty_registry_gives_empty_vectors():
    X = extract_features(toy_log().traces[0], [], FittedFeatureModels())
    assert X.shape == (5, 0)


def test_unanimous_ngram_feature_near_one():
    log = toy_log()
    reg = build_registry(FeatureConfig(ngrams=((CONCEPT_NAME, 1),), periods=()), ["Eat", "TM"])
    models = fit_feature_models(log, reg, ["Eat", "TM"])
    X = extract_features(log.traces[0], reg, models)
    # "W" occurs twice, both times under TM
    assert X[2, reg.index(NGramSpec(CONCEPT_NAME, 1, "TM"))] == pytest.approx(2.01 / 2.02)


def test_registry_layout_and_shapes():
    log = toy_log()
    labels = ["Eat", "TM"]
    cfg = FeatureConfig(ngrams=((CONCEPT_NAME, 2), (CONCEPT_NAME, 1)), periods=("day", "week"), max_components=2)
    reg = build_registry(cfg, labels)
    assert reg[:2] == [NGramSpec(CONCEPT_NAME, 2, "Eat"), NGramSpec(CONCEPT_NAME, 2, "TM")]
    assert reg[4:6] == [CircularTimeSpec("day", "Eat"), CircularTimeSpec("day", "TM")]
    models = fit_feature_models(log, reg, labels, max_components=2)
    for t in log.traces:
        X = extract_features(t, reg, models)
        assert X.shape == (len(t), len(reg))
        assert np.all(np.isfinite(X)) and np.all(X >= 0)
        assert np.all(X[:, :4] <= 1)


def test_lifecycle_feature_only_where_a_pair_closes():
    trace = [ev("A", "x", 0, "start"), ev("B", "y", 1, "start"), ev("A", "x", 2, "complete"),
             ev("B", "y", 4, "complete")]
    log = log_of(trace, trace)
    labels = ["x", "y"]
    reg = build_registry(FeatureConfig(ngrams=(), periods=(), lifecycle=True), labels, log)
    assert reg == [LifecycleDurationSpec("x", "start"), LifecycleDurationSpec("y", "start")]
    models = fit_feature_models(log, reg, labels)
    X = extract_features(log.traces[0], reg, models)
    assert np.all(X[:2] == 0)
    assert X[2, 0] == pytest.approx(models.lifecycle[("x", "start")].pdf(120.0)[0])
    assert X[3, 1] == pytest.approx(models.lifecycle[("y", "start")].pdf(180.0)[0])


def test_missing_model_is_a_configuration_error():
    reg = [NGramSpec(CONCEPT_NAME, 1, "TM")]
    with pytest.raises(FeatureConfigError):
        extract_features(toy_log().traces[0], reg, FittedFeatureModels())


def test_time_features_need_timestamps():
    log = EventLog([Trace("1", [Event({CONCEPT_NAME: "a", LABEL: "x"}), Event({CONCEPT_NAME: "b", LABEL: "y"})])])
    reg = build_registry(FeatureConfig(ngrams=(), periods=("day",)), ["x", "y"])
    with pytest.raises(FeatureConfigError):
        fit_feature_models(log, reg, ["x", "y"])


def test_feature_config_validation():
    with pytest.raises(FeatureConfigError):
        FeatureConfig(ngrams=(("nope", 1),))
    with pytest.raises(FeatureConfigError):
        FeatureConfig(periods=("year",))
    with pytest.raises(FeatureConfigError):
        FeatureConfig(ngrams=((CONCEPT_NAME, 0),))
    assert FeatureConfig(ngrams=(), periods=()).is_empty

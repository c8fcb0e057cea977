import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evabs import crf
from evabs.crf import CrfModel, TrainConfig

import oracles


def random_instance(rng, T=None, L=None, K=None, scale=1.0):
    T = T or int(rng.integers(1, 7))
    L = L or int(rng.integers(1, 5))
    K = K if K is not None else int(rng.integers(0, 4))
    labels = [f"y{i}" for i in range(L)]
    model = CrfModel(tuple(labels), K, rng.normal(scale=scale, size=CrfModel.size(K, L)))
    X = rng.normal(size=(T, K))
    return model, X


def test_weight_vector_length():
    m = CrfModel.zeros(["a", "b", "c"], 4)
    assert m.weights.size == 4 * 3 + 4 * 3
    with pytest.raises(crf.CrfError):
        CrfModel(("a", "b"), 2, np.zeros(5))


def test_zero_weights_give_zero_potentials():
    m = CrfModel.zeros(["a", "b"], 3)
    pot = crf.log_potentials(np.ones((4, 3)), m)
    assert pot.shape == (4, 2, 2)
    assert np.all(pot == 0)


def test_single_position_uses_start_row():
    rng = np.random.default_rng(0)
    L = 3
    w = np.concatenate([np.zeros(0), rng.normal(size=(L + 1) * L)])
    m = CrfModel(("a", "b", "c"), 0, w)
    pot = crf.log_potentials(np.zeros((1, 0)), m)
    for i in range(L):
        np.testing.assert_array_equal(pot[0, i], m.transition_weights[-1])


def test_dimension_mismatch():
    m = CrfModel.zeros(["a", "b"], 3)
    with pytest.raises(crf.CrfError):
        crf.log_potentials(np.ones((4, 2)), m)


@pytest.mark.parametrize("T,L", [(1, 1), (3, 2), (5, 4)])
def test_uniform_model(T, L):
    m = CrfModel.zeros([str(i) for i in range(L)], 2)
    fb = crf.forward_backward(crf.log_potentials(np.ones((T, 2)), m))
    assert fb.log_z == pytest.approx(T * math.log(L), abs=1e-12)
    np.testing.assert_allclose(fb.node_marginals, 1.0 / L, atol=1e-12)


def test_single_position_marginals_are_softmax_of_start_row():
    rng = np.random.default_rng(1)
    m, X = random_instance(rng, T=1, L=4, K=2)
    pot = crf.log_potentials(X, m)
    p = np.exp(pot[0, 0] - pot[0, 0].max())
    np.testing.assert_allclose(crf.forward_backward(pot).node_marginals[0], p / p.sum(), atol=1e-12)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_forward_backward_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    m, X = random_instance(rng, scale=2.0)
    W, trans, start = m.observation_weights, m.transition_weights[:-1], m.transition_weights[-1]
    fb = crf.forward_backward(crf.log_potentials(X, m))
    assert fb.log_z == pytest.approx(oracles.brute_log_z(X, W, trans, start), abs=1e-8)
    assert fb.log_z_backward == pytest.approx(fb.log_z, abs=1e-9)
    node, edge = oracles.brute_marginals(X, W, trans, start)
    np.testing.assert_allclose(fb.node_marginals, node, atol=1e-8)
    np.testing.assert_allclose(fb.edge_marginals, edge, atol=1e-8)
    np.testing.assert_allclose(fb.node_marginals.sum(axis=1), 1.0, atol=1e-9)
    if len(X) > 1:
        np.testing.assert_allclose(fb.edge_marginals.sum(axis=(1, 2)), 1.0, atol=1e-9)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_potentials_reproduce_path_scores(seed):
    rng = np.random.default_rng(seed)
    m, X = random_instance(rng)
    W, trans, start = m.observation_weights, m.transition_weights[:-1], m.transition_weights[-1]
    pot = crf.log_potentials(X, m)
    for y in [tuple(rng.integers(m.n_labels, size=len(X))) for _ in range(5)]:
        assert crf.sequence_score(pot, y) == pytest.approx(oracles.path_score(X, W, trans, start, y), abs=1e-10)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=60, deadline=None)
def test_viterbi_is_exhaustive_argmax(seed):
    rng = np.random.default_rng(seed)
    m, X = random_instance(rng, scale=2.0)
    W, trans, start = m.observation_weights, m.transition_weights[:-1], m.transition_weights[-1]
    pot = crf.log_potentials(X, m)
    path = crf.viterbi_indices(pot)
    assert crf.sequence_score(pot, path) == pytest.approx(oracles.brute_viterbi_score(X, W, trans, start), abs=1e-9)


def test_probabilities_sum_to_one():
    rng = np.random.default_rng(7)
    m, X = random_instance(rng, T=5, L=3, K=2)
    W, trans, start = m.observation_weights, m.transition_weights[:-1], m.transition_weights[-1]
    log_z = crf.forward_backward(crf.log_potentials(X, m)).log_z
    _, scores = oracles.enumerate_paths(X, W, trans, start)
    assert np.exp(scores - log_z).sum() == pytest.approx(1.0, abs=1e-12)


def test_viterbi_zero_weights_picks_label_zero():
    m = CrfModel.zeros(["a", "b", "c"], 2)
    assert crf.viterbi(m, np.ones((5, 2))) == ["a"] * 5


def test_viterbi_follows_dominant_transitions():
    labels = ("A", "B")
    K, L = 1, 2
    w = np.zeros(CrfModel.size(K, L))
    W = np.array([[0.5, -0.5]])  # feature 1 mildly favours A
    trans = np.array([[-5.0, 5.0], [5.0, -5.0], [0.0, 0.0]])  # A->B and B->A dominate
    w[: K * L] = W.ravel()
    w[K * L:] = trans.ravel()
    m = CrfModel(labels, K, w)
    X = np.array([[1.0], [-1.0], [1.0], [1.0], [-1.0]])
    path = crf.viterbi(m, X)
    assert path == ["A", "B", "A", "B", "A"]
    pot = crf.log_potentials(X, m)
    best = oracles.brute_viterbi_score(X, W, trans[:2], trans[2])
    assert crf.sequence_score(pot, m.label_indices(path)) == pytest.approx(best)


def random_dataset(rng, n, K, L):
    data = []
    labels = [f"y{i}" for i in range(L)]
    for _ in range(n):
        T = int(rng.integers(1, 6))
        data.append((rng.normal(size=(T, K)), [labels[i] for i in rng.integers(L, size=T)]))
    return labels, data


def test_nll_matches_enumeration_and_zero_model():
    rng = np.random.default_rng(3)
    K, L = 2, 3
    labels, data = random_dataset(rng, 4, K, L)
    m0 = CrfModel.zeros(labels, K)
    value, grad = crf.nll_and_gradient(m0, data)
    assert value == pytest.approx(sum(len(y) for _, y in data) * math.log(L))
    m = CrfModel(tuple(labels), K, rng.normal(size=CrfModel.size(K, L)))
    idx = [(X, [labels.index(v) for v in y]) for X, y in data]
    value, _ = crf.nll_and_gradient(m, data)
    assert value == pytest.approx(oracles.brute_nll(m.weights, idx, K, L), abs=1e-9)


def central_difference(f, w, h=1e-5):
    g = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (f(w + e) - f(w - e)) / (2 * h)
    return g


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    K, L = int(rng.integers(1, 4)), int(rng.integers(2, 4))
    labels, data = random_dataset(rng, 3, K, L)
    w = rng.normal(size=CrfModel.size(K, L))

    def f(v):
        return crf.nll_and_gradient(CrfModel(tuple(labels), K, v), data)[0]

    _, grad = crf.nll_and_gradient(CrfModel(tuple(labels), K, w), data)
    fd = central_difference(f, w)
    assert np.linalg.norm(grad - fd) <= 1e-4 * max(np.linalg.norm(fd), 1e-8)


def test_duplicating_data_doubles_objective_and_gradient():
    rng = np.random.default_rng(5)
    labels, data = random_dataset(rng, 3, 2, 3)
    m = CrfModel(tuple(labels), 2, rng.normal(size=CrfModel.size(2, 3)))
    v1, g1 = crf.nll_and_gradient(m, data)
    v2, g2 = crf.nll_and_gradient(m, data + data)
    assert v2 == pytest.approx(2 * v1, rel=1e-13)
    np.testing.assert_allclose(g2, 2 * g1, rtol=1e-12, atol=1e-13)


def test_empty_dataset_rejected():
    with pytest.raises(crf.CrfError):
        crf.nll_and_gradient(CrfModel.zeros(["a", "b"], 1), [])
    with pytest.raises(crf.CrfError):
        crf.train([], TrainConfig())


def test_unknown_gold_label_rejected():
    m = CrfModel.zeros(["a", "b"], 1)
    with pytest.raises(crf.CrfError):
        crf.nll_and_gradient(m, [(np.ones((2, 1)), ["a", "z"])])


def separable_dataset(rng, L=3, n=8):
    labels = [f"c{i}" for i in range(L)]
    data = []
    for _ in range(n):
        y = rng.integers(L, size=int(rng.integers(2, 8)))
        data.append((np.eye(L)[y], [labels[i] for i in y]))
    return labels, data


def test_huge_penalty_zeroes_every_weight():
    rng = np.random.default_rng(0)
    labels, data = separable_dataset(rng)
    m = crf.train(data, TrainConfig(l1_strength=1e6), labels)
    assert np.all(m.weights == 0.0)
    assert m.info.nonzero_weights == 0
    fb = crf.forward_backward(crf.log_potentials(data[0][0], m))
    np.testing.assert_allclose(fb.node_marginals, 1.0 / len(labels))


def test_separable_data_is_fit_exactly():
    rng = np.random.default_rng(1)
    labels, data = separable_dataset(rng)
    m = crf.train(data, TrainConfig(l1_strength=0.01), labels)
    for X, y in data:
        assert crf.viterbi(m, X) == y
    zero_obj = crf.nll_and_gradient(CrfModel.zeros(labels, len(labels)), data)[0]
    assert m.info.objective <= zero_obj
    assert 0 < m.info.nonzero_weights < m.weights.size


def test_training_is_deterministic():
    rng = np.random.default_rng(2)
    labels, data = separable_dataset(rng)
    a = crf.train(data, TrainConfig(l1_strength=0.1), labels)
    b = crf.train(data, TrainConfig(l1_strength=0.1), labels)
    assert a.weights.tobytes() == b.weights.tobytes()


def test_more_penalty_means_fewer_weights():
    rng = np.random.default_rng(4)
    labels, data = separable_dataset(rng, n=12)
    counts = [crf.train(data, TrainConfig(l1_strength=c), labels).info.nonzero_weights for c in (0.01, 1.0, 10.0)]
    assert counts[0] >= counts[1] >= counts[2]


def test_train_config_validation():
    with pytest.raises(crf.CrfError):
        TrainConfig(l1_strength=-1)
    with pytest.raises(crf.CrfError):
        TrainConfig(tolerance=0)

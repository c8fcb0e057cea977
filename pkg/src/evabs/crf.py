"""Linear-chain conditional random field.

Feature functions are observation features conjoined with the current label,
plus label-transition indicators (previous label -> current label) including
a start symbol before the first position. With K observation features and L
labels the weight vector is laid out as::

    [ W (K x L, row-major) | transitions (L+1 x L, last row = start) ]

All inference runs in log space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .optim import OptimizationError, owlqn


class CrfError(ValueError):
    pass


def _lse(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m, axis=axis)


@dataclass(frozen=True)
class TrainInfo:
    objective: float
    nonzero_weights: int
    iterations: int
    converged: bool


@dataclass
class CrfModel:
    labels: tuple
    n_features: int
    weights: np.ndarray
    info: Optional[TrainInfo] = field(default=None, compare=False)

    def __post_init__(self):
        self.labels = tuple(self.labels)
        self.weights = np.asarray(self.weights, dtype=float)
        if len(set(self.labels)) != len(self.labels) or not self.labels:
            raise CrfError("label alphabet must be non-empty and unique")
        if self.weights.shape != (self.size(self.n_features, len(self.labels)),):
            raise CrfError(
                f"weight vector has length {self.weights.size}, expected "
                f"{self.size(self.n_features, len(self.labels))}"
            )

    @staticmethod
    def size(n_features: int, n_labels: int) -> int:
        return n_features * n_labels + (n_labels + 1) * n_labels

    @classmethod
    def zeros(cls, labels: Sequence[str], n_features: int) -> "CrfModel":
        return cls(tuple(labels), n_features, np.zeros(cls.size(n_features, len(labels))))

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def observation_weights(self) -> np.ndarray:
        """(K, L) view."""
        K, L = self.n_features, self.n_labels
        return self.weights[: K * L].reshape(K, L)

    @property
    def transition_weights(self) -> np.ndarray:
        """(L+1, L) view; row L holds start -> label weights."""
        K, L = self.n_features, self.n_labels
        return self.weights[K * L :].reshape(L + 1, L)

    def __eq__(self, other):
        if not isinstance(other, CrfModel):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.n_features == other.n_features
            and np.array_equal(self.weights, other.weights)
        )

    def label_indices(self, labels: Sequence) -> np.ndarray:
        index = {lab: i for i, lab in enumerate(self.labels)}
        try:
            return np.array([lab if isinstance(lab, (int, np.integer)) else index[lab] for lab in labels], dtype=int)
        except KeyError as exc:
            raise CrfError(f"label {exc.args[0]!r} is not in the alphabet") from None


def _features(features, model: CrfModel) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    if X.ndim == 1 and X.size == 0:
        X = X.reshape(0, model.n_features)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise CrfError(f"expected a (T, {model.n_features}) feature matrix, got shape {X.shape}")
    return X


# ---------------------------------------------------------------- per sequence


def log_potentials(features, model: CrfModel) -> np.ndarray:
    """(T, L, L) tensor; entry (t, i, j) scores label i at t-1 followed by j at t.

    At t = 0 the predecessor is the start symbol, so every row i is identical.
    """
    X = _features(features, model)
    emit = X @ model.observation_weights
    trans = model.transition_weights
    pot = emit[:, None, :] + trans[None, :-1, :]
    if len(X):
        pot[0] = emit[0][None, :] + trans[-1][None, :]
    return pot


@dataclass
class ForwardBackward:
    log_z: float
    log_z_backward: float
    node_marginals: np.ndarray  # (T, L)
    edge_marginals: np.ndarray  # (T-1, L, L): P(y_{t}=i, y_{t+1}=j)


def forward_backward(potentials: np.ndarray) -> ForwardBackward:
    pot = np.asarray(potentials, dtype=float)
    T, L, _ = pot.shape
    if T == 0:
        raise CrfError("forward-backward needs at least one position")
    alpha = np.empty((T, L))
    beta = np.zeros((T, L))
    alpha[0] = pot[0, 0]
    for t in range(1, T):
        alpha[t] = _lse(alpha[t - 1][:, None] + pot[t], axis=0)
    for t in range(T - 2, -1, -1):
        beta[t] = _lse(pot[t + 1] + beta[t + 1][None, :], axis=1)
    log_z = float(_lse(alpha[-1], axis=0))
    log_z_b = float(_lse(alpha[0] + beta[0], axis=0))
    node = np.exp(alpha + beta - log_z)
    edge = np.exp(alpha[:-1, :, None] + pot[1:] + beta[1:, None, :] - log_z)
    return ForwardBackward(log_z, log_z_b, node, edge)


def sequence_score(potentials: np.ndarray, y: Sequence[int]) -> float:
    """Unnormalized log score of label index sequence ``y``."""
    pot = np.asarray(potentials)
    if len(y) == 0:
        return 0.0
    score = pot[0, 0, y[0]]
    for t in range(1, len(y)):
        score += pot[t, y[t - 1], y[t]]
    return float(score)


def viterbi_indices(potentials: np.ndarray) -> list:
    pot = np.asarray(potentials, dtype=float)
    T = pot.shape[0]
    if T == 0:
        return []
    delta = pot[0, 0].copy()
    back = np.zeros(pot.shape[:2], dtype=int)
    for t in range(1, T):
        cand = delta[:, None] + pot[t]
        back[t] = np.argmax(cand, axis=0)  # first maximum = lowest label index
        delta = cand[back[t], np.arange(pot.shape[2])]
    path = [int(np.argmax(delta))]
    for t in range(T - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    return path[::-1]


def viterbi(model: CrfModel, features) -> list:
    """Most probable label sequence; ties resolve to the lowest label index."""
    return [model.labels[i] for i in viterbi_indices(log_potentials(features, model))]


# ---------------------------------------------------------------- batched training objective


class _Batch:
    """Dataset padded to (B, T_max) for vectorized recursions."""

    def __init__(self, model: CrfModel, dataset):
        if not dataset:
            raise CrfError("empty dataset")
        xs, ys = [], []
        for i, (X, y) in enumerate(dataset):
            X = _features(X, model)
            y = model.label_indices(y)
            if len(y) != len(X):
                raise CrfError(f"sequence {i}: {len(X)} feature rows but {len(y)} labels")
            if len(y):
                xs.append(X)
                ys.append(y)
        K, L = model.n_features, model.n_labels
        self.K, self.L = K, L
        self.B = len(xs)
        self.lengths = np.array([len(y) for y in ys], dtype=int)
        Tm = int(self.lengths.max()) if self.B else 0
        self.Tm = Tm
        self.X = np.zeros((self.B, Tm, K))
        self.Y = np.zeros((self.B, Tm), dtype=int)
        self.mask = np.zeros((self.B, Tm), dtype=bool)
        for b, (X, y) in enumerate(zip(xs, ys)):
            self.X[b, : len(y)] = X
            self.Y[b, : len(y)] = y
            self.mask[b, : len(y)] = True
        # empirical feature counts do not depend on the weights
        onehot = np.zeros((self.B, Tm, L))
        if self.B:
            onehot[np.arange(self.B)[:, None], np.arange(Tm)[None, :], self.Y] = 1.0
        onehot *= self.mask[..., None]
        self.onehot = onehot
        emp_obs = np.einsum("btk,btl->kl", self.X, onehot)
        emp_trans = np.zeros((L + 1, L))
        if self.B:
            np.add.at(emp_trans, (L, self.Y[:, 0]), 1.0)
            prev, cur = self.Y[:, :-1], self.Y[:, 1:]
            valid = self.mask[:, 1:]
            np.add.at(emp_trans, (prev[valid], cur[valid]), 1.0)
        self.empirical = np.concatenate([emp_obs.ravel(), emp_trans.ravel()])

    def objective(self, weights: np.ndarray):
        K, L, B, Tm = self.K, self.L, self.B, self.Tm
        if B == 0:
            return 0.0, np.zeros_like(weights)
        W = weights[: K * L].reshape(K, L)
        trans_all = weights[K * L :].reshape(L + 1, L)
        trans, start = trans_all[:L], trans_all[L]
        emit = self.X @ W  # (B, T, L)
        mask = self.mask
        alpha = np.empty((B, Tm, L))
        alpha[:, 0] = start[None, :] + emit[:, 0]
        for t in range(1, Tm):
            nxt = _lse(alpha[:, t - 1, :, None] + trans[None], axis=1) + emit[:, t]
            alpha[:, t] = np.where(mask[:, t, None], nxt, alpha[:, t - 1])
        beta = np.zeros((B, Tm, L))
        for t in range(Tm - 2, -1, -1):
            nxt = _lse(trans[None] + (emit[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
            beta[:, t] = np.where(mask[:, t + 1, None], nxt, 0.0)
        last = alpha[np.arange(B), self.lengths - 1]
        log_z = _lse(last, axis=1)  # (B,)
        node = np.exp(alpha + beta - log_z[:, None, None]) * mask[..., None]
        exp_obs = np.einsum("btk,btl->kl", self.X, node)
        exp_trans = np.zeros((L + 1, L))
        exp_trans[L] = node[:, 0].sum(axis=0)
        if Tm > 1:
            edge = np.exp(
                alpha[:, :-1, :, None]
                + trans[None, None]
                + (emit[:, 1:] + beta[:, 1:])[:, :, None, :]
                - log_z[:, None, None, None]
            )
            exp_trans[:L] = np.einsum("btij,bt->ij", edge, mask[:, 1:].astype(float))
        expected = np.concatenate([exp_obs.ravel(), exp_trans.ravel()])
        gold_obs = np.einsum("kl,kl->", W, np.einsum("btk,btl->kl", self.X, self.onehot))
        gold_trans = np.einsum("ij,ij->", trans_all, self.empirical[K * L :].reshape(L + 1, L))
        value = float(log_z.sum() - gold_obs - gold_trans)
        return value, expected - self.empirical


def nll_and_gradient(model: CrfModel, dataset) -> tuple:
    """Negative conditional log-likelihood summed over sequences, and its gradient.

    ``dataset`` holds ``(features, gold_labels)`` pairs; labels may be label
    values or indices. The L1 term is not included.
    """
    return _Batch(model, dataset).objective(model.weights)


# ---------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    l1_strength: float = 0.1
    max_iterations: int = 1000
    tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.l1_strength < 0:
            raise CrfError("l1_strength must be >= 0")
        if self.tolerance <= 0:
            raise CrfError("tolerance must be > 0")
        if self.max_iterations < 0:
            raise CrfError("max_iterations must be >= 0")


def train(dataset, config: TrainConfig = TrainConfig(), labels: Optional[Sequence[str]] = None) -> CrfModel:
    """Minimize NLL + l1_strength * ||weights||_1 from the zero vector with OWL-QN.

    The optimizer is deterministic, so ``config.seed`` has no effect on the
    result; it is kept so callers can record it.
    """
    if not dataset:
        raise CrfError("empty dataset")
    n_features = np.asarray(dataset[0][0]).shape[1] if np.ndim(dataset[0][0]) == 2 else 0
    if labels is None:
        labels = sorted({lab for _, y in dataset for lab in y})
    model = CrfModel.zeros(labels, n_features)
    batch = _Batch(model, dataset)
    try:
        res = owlqn(batch.objective, model.weights, config.l1_strength, config.max_iterations, config.tolerance)
    except OptimizationError as exc:
        raise CrfError(f"training failed: {exc}") from None
    weights = res.x
    info = TrainInfo(res.fun, int(np.count_nonzero(weights)), res.n_iter, res.converged)
    return CrfModel(model.labels, n_features, weights, info)

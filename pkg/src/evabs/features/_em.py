"""Machinery shared by the von Mises and Gaussian mixture fitters."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

MAX_ITER = 500
TOL = 1e-6
RESTARTS = 5


class MixtureFitError(ValueError):
    pass


def bic(log_likelihood: float, p: int, n: int) -> float:
    """Bayesian information criterion ``p ln n - 2 lnL``; lower is better."""
    return p * math.log(n) - 2.0 * log_likelihood


def n_params(k: int) -> int:
    # k-1 free weights, k locations, k scales
    return 3 * k - 1


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


def kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator, dist: Callable) -> np.ndarray:
    """k-means++ seeding: indices of ``k`` data points chosen with prob. ~ D^2."""
    n = len(x)
    idx = [int(rng.integers(n))]
    d2 = dist(x, x[idx[0]]) ** 2
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            nxt = int(rng.integers(n))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        idx.append(nxt)
        d2 = np.minimum(d2, dist(x, x[nxt]) ** 2)
    return np.asarray(idx)


def hard_responsibilities(x: np.ndarray, centers: np.ndarray, dist: Callable) -> np.ndarray:
    d = np.stack([dist(x, c) for c in centers], axis=1)
    resp = np.zeros_like(d)
    resp[np.arange(len(x)), np.argmin(d, axis=1)] = 1.0
    return resp


@dataclass
class EMRun:
    params: tuple
    log_likelihood: float
    history: List[float] = field(default_factory=list)
    converged: bool = False


def run_em(x, resp0, m_step, log_joint, max_iter=MAX_ITER, tol=TOL) -> EMRun:
    """Generic EM loop starting from an initial responsibility matrix.

    ``m_step(x, resp, previous)`` returns parameters; ``log_joint(x, params)``
    returns the (n, k) matrix of log(weight_j * density_j(x_i)).
    """
    params = m_step(x, resp0, None)
    history = []
    converged = False
    for _ in range(max_iter):
        lj = log_joint(x, params)
        row = logsumexp(lj, axis=1)
        ll = float(row.sum())
        if history and ll - history[-1] < tol:
            history.append(ll)
            converged = True
            break
        history.append(ll)
        resp = np.exp(lj - row[:, None])
        params = m_step(x, resp, params)
    else:
        ll = float(logsumexp(log_joint(x, params), axis=1).sum())
        history.append(ll)
    return EMRun(params, history[-1], history, converged)


@dataclass
class MixtureFit:
    """Outcome of BIC model selection over component counts."""

    model: object
    k: int
    log_likelihood: float
    bic: float
    history: List[float]
    candidates: dict  # k -> (log_likelihood, bic, history)


def select_by_bic(x, max_components, seed, fit_k, build, restarts=RESTARTS) -> MixtureFit:
    """Fit 1..min(max_components, n) components, keep the lowest-BIC model.

    ``fit_k(x, k, rng)`` returns an :class:`EMRun`; ``build(params)`` returns
    ``(model, effective_k)``. Ties go to the smaller k / earlier restart.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) == 0:
        raise MixtureFitError("need at least one observation")
    if max_components < 1:
        raise MixtureFitError("max_components must be >= 1")
    n = len(x)
    best = None
    candidates = {}
    for k in range(1, min(max_components, n) + 1):
        run = None
        for r in range(restarts if k > 1 else 1):
            rng = np.random.default_rng([seed, k, r])
            cand = fit_k(x, k, rng)
            if run is None or cand.log_likelihood > run.log_likelihood:
                run = cand
        model, k_eff = build(run.params)
        score = bic(run.log_likelihood, n_params(k_eff), n)
        candidates[k] = (run.log_likelihood, score, run.history)
        if best is None or score < best.bic:
            best = MixtureFit(model, k_eff, run.log_likelihood, score, run.history, candidates)
    best.candidates = candidates
    return best

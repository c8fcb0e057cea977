"""Gaussian mixtures over (non-circular) lifecycle durations."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._em import EMRun, MixtureFit, hard_responsibilities, kmeanspp_centers, logsumexp, run_em, select_by_bic

STD_FLOOR = 1e-3  # seconds


@dataclass(frozen=True)
class GaussianMixture:
    weights: tuple
    means: tuple
    stds: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not (len(w) == len(self.means) == len(self.stds)) or len(w) == 0:
            raise ValueError("component arrays must be non-empty and of equal length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        if any(s <= 0 for s in self.stds):
            raise ValueError("standard deviations must be positive")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        object.__setattr__(self, "stds", tuple(float(s) for s in self.stds))

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def logpdf(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        params = (np.asarray(self.weights), np.asarray(self.means), np.asarray(self.stds))
        return logsumexp(_g_log_joint(x, params), axis=1)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "means": list(self.means), "stds": list(self.stds)}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixture":
        return cls(tuple(d["weights"]), tuple(d["means"]), tuple(d["stds"]))


def _g_log_joint(x, params):
    weights, means, stds = params
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    z = (x[:, None] - means[None, :]) / stds[None, :]
    return logw[None, :] - 0.5 * z * z - np.log(stds)[None, :] - 0.5 * math.log(2 * math.pi)


def _g_m_step(x, resp, previous):
    nk = resp.sum(axis=0)
    weights = nk / len(x)
    safe = np.where(nk > 0, nk, 1.0)
    means = (resp.T @ x) / safe
    var = (resp * (x[:, None] - means[None, :]) ** 2).sum(axis=0) / safe
    stds = np.maximum(np.sqrt(var), STD_FLOOR)
    if previous is not None:
        dead = nk <= 0
        means = np.where(dead, previous[1], means)
        stds = np.where(dead, previous[2], stds)
    return weights, means, stds


def _abs_distance(a, b):
    return np.abs(np.asarray(a) - b)


def em_gmm(x, k: int, rng: np.random.Generator, max_iter=None, tol=None) -> EMRun:
    x = np.asarray(x, dtype=float)
    centers = x[kmeanspp_centers(x, k, rng, _abs_distance)]
    resp0 = hard_responsibilities(x, centers, _abs_distance)
    kwargs = {}
    if max_iter is not None:
        kwargs["max_iter"] = max_iter
    if tol is not None:
        kwargs["tol"] = tol
    return run_em(x, resp0, _g_m_step, _g_log_joint, **kwargs)


def _build_g(params):
    weights, means, stds = params
    keep = weights > 0
    w = weights[keep] / weights[keep].sum()
    return GaussianMixture(tuple(w), tuple(means[keep]), tuple(stds[keep])), int(keep.sum())


def fit_gmm_detailed(durations: Sequence[float], max_components: int = 8, seed: int = 0) -> MixtureFit:
    x = np.asarray(durations, dtype=float)
    if x.size and np.any(x < 0):
        raise ValueError("durations must be non-negative")
    return select_by_bic(x, max_components, seed, em_gmm, _build_g)


def fit_gmm(durations: Sequence[float], max_components: int = 8, seed: int = 0) -> GaussianMixture:
    """Gaussian mixture over durations (seconds), components chosen by BIC."""
    return fit_gmm_detailed(durations, max_components, seed).model

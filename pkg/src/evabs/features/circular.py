"""Circular time features: timestamp angles and von Mises mixtures."""
from __future__ import annotations

import calendar
import math
from dataclasses import dataclass
from datetime import datetime, tzinfo
from typing import Optional, Sequence

import numpy as np
from scipy.special import i0e, i1e

from ._em import EMRun, MixtureFit, hard_responsibilities, kmeanspp_centers, logsumexp, run_em, select_by_bic

TWO_PI = 2.0 * math.pi
KAPPA_MAX = 700.0
NEWTON_STEPS = 5
PERIODS = ("day", "week", "month")

# ---------------------------------------------------------------- Bessel I0/I1


def _log_i0_i1(x: np.ndarray):
    """(log I0(x), log I1(x)) via the exponentially scaled forms, so x = 700 cannot overflow."""
    with np.errstate(divide="ignore"):
        return np.log(i0e(x)) + x, np.log(i1e(x)) + x


def log_bessel_i(nu: int, x) -> np.ndarray:
    """log I_nu(x), the modified Bessel function of the first kind, for nu in {0, 1}."""
    if nu not in (0, 1):
        raise ValueError("only orders 0 and 1 are supported")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return _log_i0_i1(x)[nu]


def bessel_ratio(kappa) -> np.ndarray:
    """A(kappa) = I1(kappa) / I0(kappa), the mean resultant length of a von Mises."""
    l0, l1 = _log_i0_i1(np.atleast_1d(np.asarray(kappa, dtype=float)))
    return np.exp(l1 - l0)


def estimate_kappa(rbar):
    """Concentration MLE solving A(kappa) = rbar, capped at KAPPA_MAX.

    Closed-form Banerjee et al. start, then Newton steps. Accepts scalars or
    arrays; returns the same shape (a float for scalar input).
    """
    r = np.atleast_1d(np.asarray(rbar, dtype=float))
    # interior values go through Newton; endpoints are fixed afterwards
    rm = np.minimum(np.maximum(r, 1e-12), 1.0 - 1e-12)
    k = np.minimum(rm * (2.0 - rm * rm) / (1.0 - rm * rm), KAPPA_MAX)
    for _ in range(NEWTON_STEPS):
        l0, l1 = _log_i0_i1(k)
        a = np.exp(l1 - l0)
        deriv = 1.0 - a * a - a / k
        ok = deriv > 0
        step = np.where(ok, (a - rm) / np.where(ok, deriv, 1.0), 0.0)
        k = np.minimum(np.maximum(k - step, 1e-12), KAPPA_MAX)
        if (np.abs(step) <= 1e-12 * k).all():
            break
    kappa = np.where(r <= 1e-12, 0.0, np.where(r >= 1.0 - 1e-12, KAPPA_MAX, k))
    if np.ndim(rbar) == 0:
        return float(kappa[0])
    return kappa


# ---------------------------------------------------------------- angles


def timestamp_to_angle(ts: datetime, period: str, tz: Optional[tzinfo] = None) -> float:
    """Position of ``ts`` within its day/week/month as an angle in [0, 2pi).

    Uses local wall-clock time (``tz`` if given, else the timestamp's own
    offset). Weeks start Monday 00:00; months use their true length.
    """
    local = ts.astimezone(tz) if tz is not None else ts
    secs = local.hour * 3600 + local.minute * 60 + local.second + local.microsecond / 1e6
    if period == "day":
        frac = secs / 86400.0
    elif period == "week":
        frac = (local.weekday() * 86400 + secs) / (7 * 86400.0)
    elif period == "month":
        days = calendar.monthrange(local.year, local.month)[1]
        frac = ((local.day - 1) * 86400 + secs) / (days * 86400.0)
    else:
        raise ValueError(f"unknown period {period!r}; expected one of {PERIODS}")
    angle = TWO_PI * frac
    return angle if angle < TWO_PI else 0.0


def circular_distance(a, b) -> np.ndarray:
    d = np.abs(np.mod(np.asarray(a) - b, TWO_PI))
    return np.minimum(d, TWO_PI - d)


def circular_mean(angles) -> float:
    angles = np.asarray(angles, dtype=float)
    return float(np.mod(np.arctan2(np.sin(angles).sum(), np.cos(angles).sum()), TWO_PI))


# ---------------------------------------------------------------- mixture


@dataclass(frozen=True)
class VonMisesMixture:
    weights: tuple
    means: tuple
    kappas: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not (len(w) == len(self.means) == len(self.kappas)) or len(w) == 0:
            raise ValueError("component arrays must be non-empty and of equal length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to 1")
        if any(k < 0 for k in self.kappas):
            raise ValueError("concentrations must be non-negative")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))
        object.__setattr__(self, "means", tuple(float(m) % TWO_PI for m in self.means))
        object.__setattr__(self, "kappas", tuple(float(k) for k in self.kappas))

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def log_joint(self, angles) -> np.ndarray:
        return _vm_log_joint(
            np.atleast_1d(np.asarray(angles, dtype=float)),
            (np.asarray(self.weights), np.asarray(self.means), np.asarray(self.kappas)),
        )

    def logpdf(self, angles) -> np.ndarray:
        return logsumexp(self.log_joint(angles), axis=1)

    def pdf(self, angles) -> np.ndarray:
        return np.exp(self.logpdf(angles))

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "means": list(self.means), "kappas": list(self.kappas)}

    @classmethod
    def from_dict(cls, d: dict) -> "VonMisesMixture":
        return cls(tuple(d["weights"]), tuple(d["means"]), tuple(d["kappas"]))


def vmmm_density(model: VonMisesMixture, angle: float) -> float:
    """Mixture density sum_i w_i exp(k_i cos(a - m_i)) / (2 pi I0(k_i))."""
    return float(model.pdf(angle)[0])


def _vm_log_joint(x, params):
    weights, means, kappas = params
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    return (
        logw[None, :]
        + kappas[None, :] * np.cos(x[:, None] - means[None, :])
        - math.log(TWO_PI)
        - log_bessel_i(0, kappas)[None, :]
    )


def _vm_m_step(x, resp, previous):
    nk = resp.sum(axis=0)
    weights = nk / len(x)
    c = resp.T @ np.cos(x)
    s = resp.T @ np.sin(x)
    alive = nk > 0
    means = np.mod(np.arctan2(s, c), TWO_PI)
    rbar = np.minimum(np.hypot(c, s) / np.where(alive, nk, 1.0), 1.0)
    kappas = estimate_kappa(rbar)
    if previous is not None:
        means = np.where(alive, means, previous[1])
        kappas = np.where(alive, kappas, previous[2])
    return weights, means, kappas


def em_vmmm(angles, k: int, rng: np.random.Generator, max_iter=None, tol=None) -> EMRun:
    """One EM run with k-means++ seeding on circular distance."""
    x = np.mod(np.asarray(angles, dtype=float), TWO_PI)
    centers = x[kmeanspp_centers(x, k, rng, circular_distance)]
    resp0 = hard_responsibilities(x, centers, circular_distance)
    kwargs = {}
    if max_iter is not None:
        kwargs["max_iter"] = max_iter
    if tol is not None:
        kwargs["tol"] = tol
    return run_em(x, resp0, _vm_m_step, _vm_log_joint, **kwargs)


def _build_vm(params):
    weights, means, kappas = params
    keep = weights > 0
    w = weights[keep] / weights[keep].sum()
    return VonMisesMixture(tuple(w), tuple(means[keep]), tuple(kappas[keep])), int(keep.sum())


def fit_vmmm_detailed(angles: Sequence[float], max_components: int = 8, seed: int = 0) -> MixtureFit:
    return select_by_bic(np.mod(np.asarray(angles, dtype=float), TWO_PI), max_components, seed, em_vmmm, _build_vm)


def fit_vmmm(angles: Sequence[float], max_components: int = 8, seed: int = 0) -> VonMisesMixture:
    """Von Mises mixture with the BIC-selected number of components."""
    return fit_vmmm_detailed(angles, max_components, seed).model

"""Orthant-wise limited-memory quasi-Newton (OWL-QN) for L1-regularized objectives.

Minimizes ``f(x) + c * ||x||_1`` for smooth convex ``f`` (Andrew & Gao, 2007).
With ``c == 0`` this is plain L-BFGS with backtracking line search.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List

import numpy as np

log = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    pass


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float  # f(x) + c * ||x||_1
    n_iter: int
    converged: bool
    history: List[float] = field(default_factory=list)


def pseudo_gradient(x: np.ndarray, g: np.ndarray, c: float) -> np.ndarray:
    """Minimum-norm subgradient of f + c|x|_1."""
    if c == 0:
        return g.copy()
    pg = np.where(x > 0, g + c, np.where(x < 0, g - c, 0.0))
    at_zero = x == 0
    right = g + c  # derivative moving x_i up from 0
    left = g - c  # derivative moving x_i down from 0
    pg = np.where(at_zero & (right < 0), right, pg)
    pg = np.where(at_zero & (left > 0), left, pg)
    return pg


def _two_loop(v: np.ndarray, s_hist, y_hist) -> np.ndarray:
    q = v.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def owlqn(
    fun: Callable,
    x0: np.ndarray,
    l1: float = 0.0,
    max_iter: int = 1000,
    tol: float = 1e-6,
    memory: int = 10,
    max_backtracks: int = 60,
) -> OptimResult:
    """``fun(x) -> (value, gradient)`` of the smooth part. Stops when the relative
    decrease of the full objective falls below ``tol`` or after ``max_iter``."""
    if l1 < 0:
        raise ValueError("l1 strength must be non-negative")
    x = np.array(x0, dtype=float)
    fx, g = fun(x)
    F = fx + l1 * np.abs(x).sum()
    if not np.isfinite(F):
        raise OptimizationError("non-finite objective at iteration 0")
    s_hist: deque = deque(maxlen=memory)
    y_hist: deque = deque(maxlen=memory)
    history = [F]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        pg = pseudo_gradient(x, g, l1)
        pg_norm = np.linalg.norm(pg)
        if pg_norm <= 1e-10 * max(1.0, np.linalg.norm(x)):
            converged = True
            it -= 1
            break
        d = -_two_loop(pg, list(s_hist), list(y_hist))
        if l1 > 0:
            d = np.where(d * pg < 0, d, 0.0)
        if d @ pg >= 0:
            s_hist.clear()
            y_hist.clear()
            d = -pg
        orthant = np.sign(x)
        if l1 > 0:
            orthant = np.where(x == 0, np.sign(-pg), orthant)
        step = 1.0 / pg_norm if not s_hist else 1.0
        for _ in range(max_backtracks):
            xn = x + step * d
            if l1 > 0:
                xn = np.where(np.sign(xn) == orthant, xn, 0.0)
            fn, gn = fun(xn)
            Fn = fn + l1 * np.abs(xn).sum()
            if np.isfinite(Fn) and Fn <= F + 1e-4 * (pg @ (xn - x)):
                break
            step *= 0.5
        else:
            log.debug("line search failed at iteration %d; stopping", it)
            converged = True
            it -= 1
            break
        if not np.isfinite(Fn):
            raise OptimizationError(f"non-finite objective at iteration {it}")
        s = xn - x
        y = gn - g
        if s @ y > 1e-12:
            s_hist.append(s)
            y_hist.append(y)
        rel = (F - Fn) / max(abs(F), abs(Fn), 1.0)
        x, g, F = xn, gn, Fn
        history.append(F)
        if rel < tol:
            converged = True
            break
    return OptimResult(x, float(F), it, converged, history)

"""Exploratory analysis of step lengths and turning angles.

A two-component exponential mixture on the distances yields a critical
distance separating short from long steps. Turning angles are then
summarized on each side of the cutoff and tested for uniformity with
Kuiper's statistic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .circular import TWO_PI, CircularSummary, circular_summary, wrap
from .model import Trajectory

KUIPER_MIN_N = 8
DEGENERATE_WEIGHT = 1e-4


@dataclass(frozen=True)
class MixtureSettings:
    n_starts: int = 10
    max_iters: int = 5000
    tol: float = 1e-10
    seed: Optional[int] = 0


@dataclass
class MixtureFit:
    """Two-component exponential mixture, components ordered by decreasing rate.

    Attributes:
        weights: (2,) mixing weights.
        rates: (2,) exponential rates (inverse means).
        loglik: log-likelihood at the estimate.
        trace: log-likelihood after each EM iteration of the retained start.
        degenerate: a weight fell below ``DEGENERATE_WEIGHT``.
        jittered: zero distances were replaced before fitting.
    """

    weights: np.ndarray
    rates: np.ndarray
    loglik: float
    trace: list = field(default_factory=list)
    degenerate: bool = False
    jittered: int = 0

    @property
    def mean(self) -> float:
        return float(np.sum(self.weights / self.rates))


def _mixture_loglik_terms(d, w, r):
    return np.log(w)[None, :] + np.log(r)[None, :] - d[:, None] * r[None, :]


def _mixture_em(d, w, r, max_iters, tol):
    terms = _mixture_loglik_terms(d, w, r)
    ll = float(logsumexp(terms, axis=1).sum())
    trace = [ll]
    for _ in range(max_iters):
        resp = np.exp(terms - logsumexp(terms, axis=1, keepdims=True))
        mass = resp.sum(axis=0)
        w = np.maximum(mass / d.size, 1e-300)
        r = np.where(mass > 0, mass / np.maximum(resp.T @ d, 1e-300), r)
        terms = _mixture_loglik_terms(d, w, r)
        new = float(logsumexp(terms, axis=1).sum())
        trace.append(new)
        if abs(new - ll) <= tol * (1.0 + abs(ll)):
            break
        ll = new
    return w, r, trace


def fit_exp_mixture(distances, settings: Optional[MixtureSettings] = None) -> MixtureFit:
    """Maximum-likelihood two-component exponential mixture by EM with random restarts."""
    settings = settings or MixtureSettings()
    d = np.asarray(distances, dtype=float).ravel()
    if d.size < 10:
        raise ValueError("at least 10 distances are required")
    if np.any(~np.isfinite(d)) or np.any(d < 0):
        raise ValueError("distances must be finite and nonnegative")
    zeros = d == 0
    if zeros.all():
        raise ValueError("all distances are zero")
    if zeros.any():
        d = np.where(zeros, 0.5 * d[~zeros].min(), d)
    rng = np.random.default_rng(settings.seed)
    base = 1.0 / d.mean()
    best = None
    for _ in range(settings.n_starts):
        w0 = rng.dirichlet([1.0, 1.0])
        r0 = base * np.exp(rng.uniform(-2.0, 2.0, size=2))
        w, r, trace = _mixture_em(d, w0, r0, settings.max_iters, settings.tol)
        if best is None or trace[-1] > best[2][-1]:
            best = (w, r, trace)
    w, r, trace = best
    order = np.argsort(-r, kind="stable")
    w, r = w[order], r[order]
    return MixtureFit(w, r, trace[-1], trace, bool(w.min() < DEGENERATE_WEIGHT), int(zeros.sum()))


def critical_distance(fit: MixtureFit) -> float:
    """Weighted mean of the component means, w_1/r_1 + w_2/r_2."""
    return float(np.sum(np.asarray(fit.weights) / np.asarray(fit.rates)))


def kuiper_statistic(angles) -> tuple:
    """Kuiper's V_n for circular uniformity and its asymptotic p-value.

    The p-value is None when fewer than ``KUIPER_MIN_N`` angles are given.
    """
    a = np.asarray(angles, dtype=float).ravel()
    n = a.size
    if n == 0:
        raise ValueError("no angles")
    u = np.sort(np.mod(a, TWO_PI) / TWO_PI)
    i = np.arange(1, n + 1)
    v = float(np.max(i / n - u) + np.max(u - (i - 1) / n))
    if n < KUIPER_MIN_N:
        return v, None
    return v, kuiper_pvalue(v, n)


def kuiper_pvalue(v: float, n: int) -> float:
    sqn = math.sqrt(n)
    lam = (sqn + 0.155 + 0.24 / sqn) * v
    if lam < 0.4:
        return 1.0
    j = np.arange(1, 101)
    terms = 2.0 * (4.0 * j**2 * lam**2 - 1.0) * np.exp(-2.0 * j**2 * lam**2)
    return float(min(1.0, max(0.0, terms.sum())))


@dataclass
class SubsetDiagnostics:
    label: str
    count: int
    summary: Optional[CircularSummary]
    kuiper_v: Optional[float]
    kuiper_p: Optional[float]

    @property
    def empty(self) -> bool:
        return self.count == 0


def turning_angles(traj: Trajectory) -> np.ndarray:
    """y_t - y_{t-1} wrapped to [-pi, pi), t = 1..T."""
    return wrap(np.diff(traj.y))


def _subset(label, angles) -> SubsetDiagnostics:
    if angles.size == 0:
        return SubsetDiagnostics(label, 0, None, None, None)
    v, p = kuiper_statistic(angles)
    return SubsetDiagnostics(label, int(angles.size), circular_summary(angles), v, p)


def partition_diagnostics(traj: Trajectory, d_critical: float) -> tuple:
    """Turning-angle summaries for steps with d_t <= d_critical and d_t > d_critical."""
    turns = turning_angles(traj)
    long_step = traj.d[1:] > d_critical
    return _subset("short", turns[~long_step]), _subset("long", turns[long_step])


def interaction_trajectory(traj: Trajectory, d_critical: float) -> Trajectory:
    """Covariates for a single-state model whose coefficients change with step length.

    Targets are the original ones, then persistence and each original target
    again with weights multiplied by the long-step indicator 1{d_t > d_critical}.
    Fitting K = 1 with these targets gives the interaction model.
    """
    ind = (traj.d > d_critical).astype(float)
    prev = np.concatenate([[0.0], traj.y[:-1]])
    x = np.column_stack([traj.x, prev, traj.x])
    z = np.column_stack([traj.z, ind, traj.z * ind[:, None]])
    z[0, traj.p] = 0.0
    names = tuple(traj.target_names) + ("persistence_long",) + tuple(f"{n}_long" for n in traj.target_names)
    return Trajectory(traj.y, traj.d, x, z, names)


def distance_summary(d) -> dict:
    d = np.asarray(d, dtype=float)
    q1, med, q3 = np.quantile(d, [0.25, 0.5, 0.75])
    return {"n": int(d.size), "min": float(d.min()), "q1": float(q1), "median": float(med),
            "mean": float(d.mean()), "q3": float(q3), "max": float(d.max())}

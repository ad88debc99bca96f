"""Forward filtering, backward smoothing and the observed log-likelihood.

Time index runs t = 0..T. Row 0 holds the law of the unobserved initial state
S_0 (which emits nothing); rows 1..T are conditioned on the observed steps.
The forward pass is the scaled algorithm: each step is normalized and the logs
of the normalizers add up to the observed log-likelihood.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import NumericalError
from .hidden import build_expanded_chain, DwellDistribution, ExpandedChain
from .model import ModelSpec, Params, Trajectory, log_emissions


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    """State probabilities for t = 0..T and pairwise smoothed expectations.

    Attributes:
        predicted: (T+1, K) P(S_t = k | F_{t-1}); row 0 is pi0.
        filtered: (T+1, K) P(S_t = k | F_t); row 0 is pi0.
        smoothed: (T+1, K) P(S_t = k | F_T).
        pairwise: (T, K, K) E[S_{h,t-1} S_{k,t} | F_T] for t = 1..T.
        loglik: observed log-likelihood.
    """

    predicted: np.ndarray
    filtered: np.ndarray
    smoothed: np.ndarray
    pairwise: np.ndarray
    loglik: float


@nb.njit(cache=True)
def _forward(log_em, P, pi0):
    T, K = log_em.shape
    predicted = np.empty((T + 1, K))
    filtered = np.empty((T + 1, K))
    predicted[0] = pi0
    filtered[0] = pi0
    loglik = 0.0
    for t in range(1, T + 1):
        shift = log_em[t - 1].max()
        total = 0.0
        for k in range(K):
            acc = 0.0
            for h in range(K):
                acc += filtered[t - 1, h] * P[h, k]
            predicted[t, k] = acc
            w = acc * np.exp(log_em[t - 1, k] - shift)
            filtered[t, k] = w
            total += w
        if not total > 0.0 or not np.isfinite(total):
            return predicted, filtered, loglik, t
        for k in range(K):
            filtered[t, k] /= total
        loglik += np.log(total) + shift
    return predicted, filtered, loglik, 0


@nb.njit(cache=True)
def _backward(predicted, filtered, P):
    Tp1, K = filtered.shape
    T = Tp1 - 1
    smoothed = np.empty((Tp1, K))
    pairwise = np.zeros((T, K, K))
    ratio = np.empty(K)
    smoothed[T] = filtered[T]
    for t in range(T - 1, -1, -1):
        for k in range(K):
            den = predicted[t + 1, k]
            num = smoothed[t + 1, k]
            if den > 0.0:
                ratio[k] = num / den
            elif num > 1e-300:
                return smoothed, pairwise, t + 1
            else:
                ratio[k] = 0.0
        for h in range(K):
            acc = 0.0
            for k in range(K):
                v = filtered[t, h] * P[h, k] * ratio[k]
                pairwise[t, h, k] = v
                acc += v
            smoothed[t, h] = acc
    return smoothed, pairwise, 0


def forward_filter(log_em: np.ndarray, transition: np.ndarray, pi0: np.ndarray):
    """Scaled forward recursion.

    Args:
        log_em: (T, K) log emission densities for steps 1..T.
        transition: (K, K) row-stochastic matrix.
        pi0: (K,) law of S_0.

    Returns:
        (predicted, filtered, loglik) with (T+1, K) probability arrays.
    """
    log_em = np.ascontiguousarray(log_em, dtype=float)
    predicted, filtered, loglik, bad = _forward(
        log_em, np.ascontiguousarray(transition, dtype=float), np.ascontiguousarray(pi0, dtype=float)
    )
    if bad:
        raise NumericalError(f"every state has zero predictive density at step t={bad}")
    return predicted, filtered, float(loglik)


def backward_smooth(filtered, predicted, transition):
    return _smooth(filtered, predicted, transition)[0]


def pairwise_posteriors(filtered, smoothed, transition, predicted=None):
    """E[S_{h,t-1} S_{k,t} | F_T] for t = 1..T, shape (T, K, K)."""
    if predicted is None:
        predicted = np.vstack([filtered[:1], filtered[:-1] @ transition])
    P = np.asarray(transition, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(predicted[1:] > 0, smoothed[1:] / predicted[1:], 0.0)
    return filtered[:-1, :, None] * P[None, :, :] * ratio[:, None, :]


def _smooth(filtered, predicted, transition):
    smoothed, pairwise, bad = _backward(
        np.ascontiguousarray(predicted, dtype=float),
        np.ascontiguousarray(filtered, dtype=float),
        np.ascontiguousarray(transition, dtype=float),
    )
    if bad:
        raise NumericalError(f"zero predictive probability with positive smoothed mass at t={bad}")
    return smoothed, pairwise


def filter_smooth(log_em, transition, pi0) -> PosteriorSummary:
    predicted, filtered, loglik = forward_filter(log_em, transition, pi0)
    smoothed, pairwise = _smooth(filtered, predicted, transition)
    return PosteriorSummary(predicted, filtered, smoothed, pairwise, loglik)


def expanded_chain_for(params: Params, spec: ModelSpec) -> ExpandedChain:
    dwells = [DwellDistribution(n, q) for n, q in zip(params.dwell_n, params.dwell_q)]
    return build_expanded_chain(dwells, spec.m)


def hidden_chain(params: Params, spec: ModelSpec):
    """Transition matrix, initial law and (optional) expanded chain driving the recursions."""
    if spec.semi_markov:
        chain = expanded_chain_for(params, spec)
        return chain.transition, chain.lift(params.pi0), chain
    return params.transition, params.pi0, None


def posterior(params: Params, spec: ModelSpec, traj: Trajectory, expanded: bool = False) -> PosteriorSummary:
    """Full E-step quantities on the behavior states.

    For the semi-Markov kind the recursions run on the expanded chain; the
    result is projected back to behaviors unless ``expanded`` is set.
    """
    log_em = log_emissions(params, traj)
    P, pi0, chain = hidden_chain(params, spec)
    if chain is None:
        return filter_smooth(log_em, P, pi0)
    post = filter_smooth(log_em[:, chain.projector], P, pi0)
    if expanded:
        return post
    return project_posterior(post, chain)


def project_posterior(post: PosteriorSummary, chain: ExpandedChain) -> PosteriorSummary:
    K = int(chain.projector.max()) + 1
    onehot = np.zeros((chain.size, K))
    onehot[np.arange(chain.size), chain.projector] = 1.0
    pairwise = np.einsum("tab,ag,bk->tgk", post.pairwise, onehot, onehot)
    return PosteriorSummary(
        chain.project(post.predicted),
        chain.project(post.filtered),
        chain.project(post.smoothed),
        pairwise,
        post.loglik,
    )


def observed_loglik(params: Params, spec: ModelSpec, traj: Trajectory) -> float:
    """Observed-data log-likelihood via the one-step predictive decomposition."""
    log_em = log_emissions(params, traj)
    P, pi0, chain = hidden_chain(params, spec)
    if chain is not None:
        log_em = log_em[:, chain.projector]
    return forward_filter(log_em, P, pi0)[2]

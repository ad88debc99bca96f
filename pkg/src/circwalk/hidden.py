"""Hidden-process transition structures.

Markov chains are used directly. A two-state semi-Markov process with shifted
negative-binomial dwell times is approximated by a Markov chain on
(behavior, dwell index) pairs whose last dwell index per behavior absorbs the
tail of the dwell law.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.sparse.csgraph import connected_components

from .errors import NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DwellDistribution:
    """Shifted negative binomial on {1, 2, ...}: k - 1 ~ NegBin(n, q)."""

    n: float
    q: float

    def __post_init__(self):
        if not self.n > 0:
            raise ValueError("dwell size n must be positive")
        if not 0 < self.q < 1:
            raise ValueError("dwell probability q must lie in (0, 1)")


def dwell_pmf(dwell: DwellDistribution, k):
    k = np.asarray(k)
    if np.any(k < 1):
        raise ValueError("dwell times start at 1")
    out = stats.nbinom.pmf(k - 1, dwell.n, dwell.q)
    return float(out) if np.ndim(k) == 0 else out


def log_hazards(n: float, q: float, m: int) -> tuple:
    """log c(k) and log(1 - c(k)) for k = 1..m.

    c(k) = Q(k) / sum_{j >= k} Q(j). Survivor masses that vanish numerically
    saturate the hazard at 1.
    """
    j = np.arange(m)
    log_pmf = stats.nbinom.logpmf(j, n, q)
    log_surv = np.concatenate([[0.0], stats.nbinom.logsf(j[:-1], n, q)]) if m > 1 else np.zeros(1)
    log_surv_next = stats.nbinom.logsf(j, n, q)
    with np.errstate(invalid="ignore"):
        log_c = log_pmf - log_surv
        log_stay = log_surv_next - log_surv
    bad = ~np.isfinite(log_surv) | ~np.isfinite(log_c)
    if np.any(bad):
        log.warning("dwell survivor mass vanished for n=%g q=%g; hazard saturated at 1", n, q)
        log_c = np.where(bad, 0.0, log_c)
        log_stay = np.where(bad, -np.inf, log_stay)
    log_c = np.minimum(log_c, 0.0)
    return log_c, np.minimum(log_stay, 0.0)


def hazard(dwell: DwellDistribution, k):
    k = np.asarray(k)
    if np.any(k < 1):
        raise ValueError("dwell times start at 1")
    log_c, _ = log_hazards(dwell.n, dwell.q, int(np.max(k)))
    out = np.exp(log_c[k - 1])
    return float(out) if np.ndim(k) == 0 else out


@dataclass(frozen=True, eq=False)
class ExpandedChain:
    """Markov approximation of a two-state semi-Markov process.

    ``states[j]`` is the (behavior, dwell index) pair of expanded state j,
    both 0-based; ``projector[j]`` is its behavior.
    """

    states: tuple
    transition: np.ndarray
    projector: np.ndarray

    @property
    def size(self) -> int:
        return len(self.states)

    def offsets(self) -> np.ndarray:
        """Index of the (behavior, 0) state for each behavior."""
        return np.array([self.states.index((g, 0)) for g in range(int(self.projector.max()) + 1)])

    def project(self, probs: np.ndarray) -> np.ndarray:
        """Sum expanded-state probabilities (last axis) by behavior."""
        K = int(self.projector.max()) + 1
        out = np.zeros(probs.shape[:-1] + (K,))
        for g in range(K):
            out[..., g] = probs[..., self.projector == g].sum(axis=-1)
        return out

    def lift(self, behavior_probs: np.ndarray) -> np.ndarray:
        """Place behavior probabilities on dwell index 1."""
        out = np.zeros(self.size)
        out[self.offsets()] = behavior_probs
        return out


def build_expanded_chain(dwells, m) -> ExpandedChain:
    """Expanded chain for two behaviors.

    From (i, k) the chain moves to (other, 1) with probability c_i(k) and to
    (i, min(m_i, k+1)) otherwise.
    """
    dwells = list(dwells)
    m = [int(v) for v in m]
    if len(dwells) != 2 or len(m) != 2:
        raise ValueError("expanded chain is implemented for K = 2 behaviors")
    if any(v < 1 for v in m):
        raise ValueError("truncation m must be at least 1")
    states = tuple((g, k) for g in range(2) for k in range(m[g]))
    size = len(states)
    start = [0, m[0]]
    P = np.zeros((size, size))
    for g in range(2):
        c = np.exp(log_hazards(dwells[g].n, dwells[g].q, m[g])[0])
        other = start[1 - g]
        for k in range(m[g]):
            row = start[g] + k
            P[row, other] = c[k]
            P[row, start[g] + min(m[g] - 1, k + 1)] += 1.0 - c[k]
    projector = np.array([g for g, _ in states])
    P.setflags(write=False)
    projector.setflags(write=False)
    return ExpandedChain(states, P, projector)


def expanded_dwell_law(chain: ExpandedChain, behavior: int, kmax: int) -> np.ndarray:
    """P(dwell = k), k = 1..kmax, for a sojourn entered at (behavior, 1).

    Computed by propagating the within-behavior sub-chain, which enumerates
    every path that stays in the behavior.
    """
    idx = np.flatnonzero(chain.projector == behavior)
    sub = chain.transition[np.ix_(idx, idx)]
    leave = chain.transition[np.ix_(idx, np.flatnonzero(chain.projector != behavior))].sum(axis=1)
    mass = np.zeros(idx.size)
    mass[0] = 1.0
    out = np.empty(kmax)
    for k in range(kmax):
        out[k] = mass @ leave
        mass = mass @ sub
    return out


def stationary_distribution(transition) -> np.ndarray:
    """Stationary law of an irreducible row-stochastic matrix."""
    P = np.asarray(transition, dtype=float)
    K = P.shape[0]
    if K == 1:
        return np.ones(1)
    n_comp, labels = connected_components(P > 0, directed=True, connection="strong")
    if n_comp > 1:
        closed = []
        for c in range(n_comp):
            members = np.flatnonzero(labels == c)
            outside = np.flatnonzero(labels != c)
            if not np.any(P[np.ix_(members, outside)] > 0):
                closed.append((members + 1).tolist())
        raise NumericalError(f"transition matrix is reducible; closed classes {closed}")
    A = np.vstack([P.T - np.eye(K), np.ones(K)])
    b = np.zeros(K + 1)
    b[-1] = 1.0
    nu = np.linalg.lstsq(A, b, rcond=None)[0]
    nu = np.clip(nu, 0.0, None)
    nu /= nu.sum()
    # one power step polishes the least-squares solution
    nu = nu @ P
    return nu / nu.sum()


def two_state_stationary(q1: float, q2: float) -> np.ndarray:
    """Closed form for a 2-state chain with leave probabilities q1, q2."""
    s = q1 + q2
    return np.array([q2 / s, q1 / s])


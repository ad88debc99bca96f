"""Observed data, model configuration and parameters, plus per-state emissions."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Literal, Optional, Sequence

import numpy as np

from .circular import LOG_2PI, log_bessel_i0, wrap
from .errors import DataError

HiddenKind = Literal["markov", "semi-markov"]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Step directions ``y``, lengths ``d`` and target covariates for t = 0..T.

    Row t describes the displacement from the location at t to the location
    at t+1. ``x[t, i]`` is the bearing of target i seen from the start of step
    t and ``z[t, i]`` its weight. Only steps 1..T enter the likelihood; step 0
    supplies the initial heading.
    """

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray
    z: np.ndarray
    target_names: tuple = ()

    def __post_init__(self):
        y = wrap(np.asarray(self.y, dtype=float).ravel())
        d = np.asarray(self.d, dtype=float).ravel()
        n = y.size
        x = np.asarray(self.x, dtype=float).reshape(n, -1) if n else np.zeros((0, 0))
        z = np.asarray(self.z, dtype=float).reshape(n, -1) if n else np.zeros((0, 0))
        if d.size != n or x.shape != z.shape:
            raise DataError(
                f"inconsistent trajectory shapes: y {y.shape}, d {d.shape}, "
                f"x {x.shape}, z {z.shape}"
            )
        names = tuple(self.target_names) or tuple(f"target{i + 1}" for i in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataError(f"{len(names)} target names for {x.shape[1]} targets")
        for name, arr in (("y", y), ("d", d), ("x", x), ("z", z)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "target_names", names)

    @classmethod
    def from_arrays(cls, y, d, x=None, z=None, target_names=()):
        n = np.asarray(y).size
        if x is None:
            x = np.zeros((n, 0))
        if z is None:
            z = np.ones_like(np.asarray(x, dtype=float))
        return cls(y, d, x, z, tuple(target_names))

    @property
    def T(self) -> int:
        """Number of modeled steps (rows 1..T)."""
        return self.y.size - 1

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @cached_property
    def design(self) -> np.ndarray:
        """Unit vectors entering the consensus vector, shape (T, p+1, 2).

        Slot 0 is the previous heading; slot i is z_i times the bearing of
        target i.
        """
        prev = self.y[:-1]
        out = np.empty((self.T, self.p + 1, 2))
        out[:, 0, 0] = np.cos(prev)
        out[:, 0, 1] = np.sin(prev)
        out[:, 1:, 0] = self.z[1:] * np.cos(self.x[1:])
        out[:, 1:, 1] = self.z[1:] * np.sin(self.x[1:])
        out.setflags(write=False)
        return out

    @cached_property
    def heading(self) -> np.ndarray:
        """Unit vectors of the observed directions y_1..y_T, shape (T, 2)."""
        out = np.column_stack([np.cos(self.y[1:]), np.sin(self.y[1:])])
        out.setflags(write=False)
        return out

    @cached_property
    def canonical_stats(self) -> np.ndarray:
        """u_t = design_t . heading_t, i.e. cos(y_t - y_{t-1}), z cos(y_t - x_t)."""
        out = np.einsum("tjc,tc->tj", self.design, self.heading)
        out.setflags(write=False)
        return out

    def subset(self, stop: int) -> "Trajectory":
        """Rows 0..stop inclusive."""
        s = slice(0, stop + 1)
        return Trajectory(self.y[s], self.d[s], self.x[s], self.z[s], self.target_names)


@dataclass(frozen=True)
class ModelSpec:
    """Model configuration.

    ``m`` holds the dwell truncation per state for the semi-Markov kind;
    ``fixed_n`` pins the dwell size parameters (e.g. to 1, which reduces the
    model to a Markov chain).
    """

    K: int
    p: int = 0
    hidden: HiddenKind = "markov"
    m: tuple = (30, 30)
    fixed_n: Optional[tuple] = None
    distance_family: Literal["exponential"] = "exponential"

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))
        object.__setattr__(self, "m", tuple(int(v) for v in self.m))
        if self.fixed_n is not None:
            object.__setattr__(self, "fixed_n", tuple(float(v) for v in self.fixed_n))

    def problems(self) -> list:
        out = []
        if self.K < 1:
            out.append("K must be at least 1")
        if self.p < 0:
            out.append("p must be nonnegative")
        if self.hidden not in ("markov", "semi-markov"):
            out.append(f"unknown hidden process kind {self.hidden!r}")
        if self.hidden == "semi-markov":
            if self.K != 2:
                out.append("semi-Markov hidden process requires K = 2")
            if len(self.m) != self.K or any(int(v) < 1 for v in self.m):
                out.append("semi-Markov truncation needs one m >= 1 per state")
            if self.fixed_n is not None and (
                len(self.fixed_n) != self.K or any(v <= 0 for v in self.fixed_n)
            ):
                out.append("fixed_n needs one positive value per state")
        if self.distance_family != "exponential":
            out.append(f"unsupported distance family {self.distance_family!r}")
        return out

    @property
    def semi_markov(self) -> bool:
        return self.hidden == "semi-markov"

    @property
    def n_params(self) -> int:
        """Number of free parameters (used by AIC/BIC)."""
        if self.semi_markov:
            n_hidden = self.K if self.fixed_n is not None else 2 * self.K
        else:
            n_hidden = self.K * (self.K - 1)
        return n_hidden + self.K * (self.p + 1) + self.K


@dataclass(frozen=True, eq=False)
class Params:
    """Model parameters.

    Attributes:
        kappa: (K, p+1) consensus coefficients; column 0 is persistence.
        lam: (K,) exponential step-length means.
        pi0: (K,) initial state distribution (treated as known).
        transition: (K, K) row-stochastic matrix, Markov kind only.
        dwell_n, dwell_q: (K,) shifted negative-binomial size and probability,
            semi-Markov kind only.
    """

    kappa: np.ndarray
    lam: np.ndarray
    pi0: np.ndarray
    transition: Optional[np.ndarray] = None
    dwell_n: Optional[np.ndarray] = None
    dwell_q: Optional[np.ndarray] = None

    def __post_init__(self):
        kappa = np.atleast_2d(np.asarray(self.kappa, dtype=float))
        object.__setattr__(self, "kappa", kappa)
        for name in ("lam", "pi0", "dwell_n", "dwell_q"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, dtype=float).ravel())
        if self.transition is not None:
            object.__setattr__(self, "transition", np.atleast_2d(np.asarray(self.transition, dtype=float)))
        for name in ("kappa", "lam", "pi0", "transition", "dwell_n", "dwell_q"):
            val = getattr(self, name)
            if val is not None:
                val.setflags(write=False)

    @property
    def K(self) -> int:
        return self.kappa.shape[0]

    def replace(self, **changes) -> "Params":
        return replace(self, **changes)

    def permuted(self, perm: Sequence[int]) -> "Params":
        """Relabel states so that new state i is old state ``perm[i]``."""
        perm = np.asarray(perm, dtype=int)
        return Params(
            kappa=self.kappa[perm],
            lam=self.lam[perm],
            pi0=self.pi0[perm],
            transition=None if self.transition is None else self.transition[np.ix_(perm, perm)],
            dwell_n=None if self.dwell_n is None else self.dwell_n[perm],
            dwell_q=None if self.dwell_q is None else self.dwell_q[perm],
        )

    def to_dict(self) -> dict:
        out = {
            "kappa": self.kappa.tolist(),
            "lambda": self.lam.tolist(),
            "pi0": self.pi0.tolist(),
        }
        if self.transition is not None:
            out["transition"] = self.transition.tolist()
        if self.dwell_n is not None:
            out["dwell_n"] = self.dwell_n.tolist()
            out["dwell_q"] = self.dwell_q.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Params":
        return cls(
            kappa=data["kappa"],
            lam=data["lambda"],
            pi0=data["pi0"],
            transition=data.get("transition"),
            dwell_n=data.get("dwell_n"),
            dwell_q=data.get("dwell_q"),
        )


def markov_params(transition, kappa, lam, pi0=None) -> Params:
    transition = np.asarray(transition, dtype=float)
    K = transition.shape[0]
    if pi0 is None:
        pi0 = np.full(K, 1.0 / K)
    return Params(kappa=kappa, lam=lam, pi0=pi0, transition=transition)


def consensus_components(kappa_k: np.ndarray, traj: Trajectory) -> np.ndarray:
    """Consensus vectors V_t for one state, shape (T, 2)."""
    return np.einsum("j,tjc->tc", np.asarray(kappa_k, dtype=float), traj.design)


def log_direction_density(kappa_k, traj: Trajectory) -> np.ndarray:
    """log f_k(y_t | past) for t = 1..T in canonical form."""
    kappa_k = np.asarray(kappa_k, dtype=float)
    ell = np.hypot(*consensus_components(kappa_k, traj).T)
    return traj.canonical_stats @ kappa_k - LOG_2PI - log_bessel_i0(ell)


def log_distance_density(lam_k: float, d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    return -math.log(lam_k) - d / lam_k


def log_emissions(params: Params, traj: Trajectory) -> np.ndarray:
    """Joint log emission log f_k + log g_k, shape (T, K), rows t = 1..T."""
    out = np.empty((traj.T, params.K))
    for k in range(params.K):
        out[:, k] = log_direction_density(params.kappa[k], traj) + log_distance_density(
            params.lam[k], traj.d[1:]
        )
    return out


def step_log_emission(params: Params, spec: ModelSpec, traj: Trajectory, t: int, k: int) -> float:
    """Single-step log emission for state ``k`` (0-based) at step ``t`` >= 1."""
    if not 1 <= t <= traj.T:
        raise ValueError(f"step index must lie in 1..{traj.T}, got {t}")
    kappa_k = params.kappa[k]
    a = traj.design[t - 1]
    v = kappa_k @ a
    ell = math.hypot(v[0], v[1])
    log_f = float(traj.canonical_stats[t - 1] @ kappa_k) - LOG_2PI - log_bessel_i0(ell)
    return log_f + float(log_distance_density(params.lam[k], traj.d[t]))


def validate(spec: ModelSpec, params: Optional[Params] = None, traj: Optional[Trajectory] = None) -> list:
    """Return every invariant violation found; an empty list means valid."""
    out = list(spec.problems())
    if params is not None:
        K = spec.K
        if params.kappa.shape != (K, spec.p + 1):
            out.append(f"kappa has shape {params.kappa.shape}, expected {(K, spec.p + 1)}")
        if not np.all(np.isfinite(params.kappa)):
            out.append("kappa must be finite")
        if params.lam.shape != (K,):
            out.append(f"lambda has shape {params.lam.shape}, expected ({K},)")
        elif np.any(~(params.lam > 0)):
            out.append("lambda must be positive")
        if params.pi0.shape != (K,):
            out.append(f"pi0 has shape {params.pi0.shape}, expected ({K},)")
        elif np.any(params.pi0 < 0) or abs(params.pi0.sum() - 1.0) > 1e-12:
            out.append("pi0 must lie on the probability simplex")
        if spec.semi_markov:
            if params.dwell_n is None or params.dwell_q is None:
                out.append("semi-Markov model needs dwell_n and dwell_q")
            else:
                if params.dwell_n.shape != (K,) or np.any(~(params.dwell_n > 0)):
                    out.append("dwell n must be positive, one per state")
                if params.dwell_q.shape != (K,) or np.any(~((params.dwell_q > 0) & (params.dwell_q < 1))):
                    out.append("dwell q must lie in (0, 1), one per state")
        else:
            P = params.transition
            if P is None:
                out.append("Markov model needs a transition matrix")
            elif P.shape != (K, K):
                out.append(f"transition has shape {P.shape}, expected {(K, K)}")
            else:
                if np.any(P < 0):
                    out.append("transition entries must be nonnegative")
                for h, s in enumerate(P.sum(axis=1)):
                    if abs(s - 1.0) > 1e-12:
                        out.append(f"transition row {h + 1} sums to {s:.12g}, not 1")
    if traj is not None:
        if traj.T < 2:
            out.append(f"trajectory needs T >= 2 steps, has {traj.T}")
        if traj.p != spec.p:
            out.append(f"trajectory has {traj.p} targets, model expects {spec.p}")
        if np.any(~np.isfinite(traj.y)) or np.any(~np.isfinite(traj.x)) or np.any(~np.isfinite(traj.z)):
            out.append("trajectory contains non-finite values")
        if np.any(~(traj.d >= 0)):
            out.append("distances must be nonnegative")
    return out

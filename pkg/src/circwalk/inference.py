"""Post-fit inference: numerical Hessian, standard errors, Wald intervals, AIC/BIC."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special, stats

from .errors import NumericalError
from .filtering import PosteriorSummary, observed_loglik
from .model import ModelSpec, Params, Trajectory

# central first differences: eps^(1/3); central second differences: eps^(1/4)
FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)
FD2_STEP = np.finfo(float).eps ** 0.25


# ------------------------------------------------------ parameterizations


def to_unconstrained(params: Params, spec: ModelSpec) -> np.ndarray:
    """Map parameters to R^n: multinomial logits of transition rows against the
    diagonal, log means, log dwell sizes and logit dwell probabilities; kappa
    stays as is."""
    parts = []
    if spec.semi_markov:
        if spec.fixed_n is None:
            parts.append(np.log(params.dwell_n))
        parts.append(special.logit(params.dwell_q))
    else:
        P = params.transition
        for h in range(spec.K):
            others = [k for k in range(spec.K) if k != h]
            parts.append(np.log(P[h, others]) - math.log(P[h, h]))
    parts.append(params.kappa.ravel())
    parts.append(np.log(params.lam))
    return np.concatenate(parts) if parts else np.zeros(0)


def from_unconstrained(theta, template: Params, spec: ModelSpec) -> Params:
    theta = np.asarray(theta, dtype=float)
    K, J = spec.K, spec.p + 1
    i = 0
    changes = {}
    if spec.semi_markov:
        if spec.fixed_n is None:
            changes["dwell_n"] = np.exp(theta[i:i + K])
            i += K
        else:
            changes["dwell_n"] = np.array(spec.fixed_n)
        changes["dwell_q"] = special.expit(theta[i:i + K])
        i += K
    else:
        P = np.empty((K, K))
        for h in range(K):
            others = [k for k in range(K) if k != h]
            logits = np.zeros(K)
            logits[others] = theta[i:i + K - 1]
            i += K - 1
            P[h] = special.softmax(logits)
        changes["transition"] = P
    changes["kappa"] = theta[i:i + K * J].reshape(K, J)
    i += K * J
    changes["lam"] = np.exp(theta[i:i + K])
    return template.replace(**changes)


def natural_vector(params: Params, spec: ModelSpec) -> np.ndarray:
    parts = []
    if spec.semi_markov:
        if spec.fixed_n is None:
            parts.append(params.dwell_n)
        parts.append(params.dwell_q)
    elif spec.K > 1:
        parts.append(params.transition.ravel())
    parts.extend([params.kappa.ravel(), params.lam])
    return np.concatenate(parts)


def natural_names(spec: ModelSpec, target_names=None) -> list:
    """Reporting names, 1-based state labels (e.g. ``p[1,1]``, ``kappa0[2]``)."""
    K = spec.K
    targets = list(target_names) if target_names is not None else [str(i) for i in range(1, spec.p + 1)]
    names = []
    if spec.semi_markov:
        if spec.fixed_n is None:
            names += [f"n[{k + 1}]" for k in range(K)]
        names += [f"q[{k + 1}]" for k in range(K)]
    elif K > 1:
        names += [f"p[{h + 1},{k + 1}]" for h in range(K) for k in range(K)]
    for k in range(K):
        names.append(f"kappa0[{k + 1}]")
        names += [f"kappa_{t}[{k + 1}]" for t in targets]
    names += [f"lambda[{k + 1}]" for k in range(K)]
    return names


# ------------------------------------------------------------- Hessian


def numerical_hessian(f: Callable, x, step=None) -> np.ndarray:
    """Central finite-difference Hessian of a scalar function.

    Step for coordinate i is ``step * (1 + |x_i|)``, default step the fourth
    root of machine epsilon (balances truncation against roundoff for second
    differences).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    h = (FD2_STEP if step is None else step) * (1.0 + np.abs(x))
    f0 = f(x)
    H = np.empty((n, n))
    E = np.diag(h)
    for i in range(n):
        H[i, i] = (f(x + E[i]) - 2.0 * f0 + f(x - E[i])) / h[i] ** 2
        for j in range(i):
            val = (
                f(x + E[i] + E[j]) - f(x + E[i] - E[j]) - f(x - E[i] + E[j]) + f(x - E[i] - E[j])
            ) / (4.0 * h[i] * h[j])
            H[i, j] = H[j, i] = val
    return H


def numerical_jacobian(g: Callable, x, step=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = (FD_STEP if step is None else step) * (1.0 + np.abs(x))
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        cols.append((np.asarray(g(x + e)) - np.asarray(g(x - e))) / (2.0 * h[i]))
    return np.column_stack(cols)


def covariance_from_hessian(H: np.ndarray) -> tuple:
    """v = (-H)^{-1}; returns (v, positive_definite)."""
    info = -0.5 * (H + H.T)
    cond = np.linalg.cond(info)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(f"Hessian is singular (condition number {cond:.3e})")
    v = np.linalg.inv(info)
    v = 0.5 * (v + v.T)
    pd = bool(np.all(np.linalg.eigvalsh(info) > 0))
    return v, pd


def loglik_hessian(params: Params, spec: ModelSpec, traj: Trajectory, step=None) -> np.ndarray:
    """Hessian of the observed log-likelihood in the unconstrained coordinates."""
    theta = to_unconstrained(params, spec)
    return numerical_hessian(lambda th: observed_loglik(from_unconstrained(th, params, spec), spec, traj), theta, step)


# ------------------------------------------------------------- reports


def aic(loglik: float, n_params: int) -> float:
    return -2.0 * loglik + 2.0 * n_params


def bic(loglik: float, n_params: int, n_obs: int) -> float:
    return -2.0 * loglik + n_params * math.log(n_obs)


def wald_ci(estimate, se, level: float = 0.95):
    """estimate -/+ z * se with z the two-sided normal quantile."""
    se = np.asarray(se, dtype=float)
    if np.any(se < 0):
        raise ValueError("standard errors must be nonnegative")
    z = stats.norm.ppf(0.5 + level / 2.0)
    est = np.asarray(estimate, dtype=float)
    lo, hi = est - z * se, est + z * se
    if np.ndim(lo) == 0:
        return float(lo), float(hi)
    return lo, hi


@dataclass
class InferenceReport:
    names: list
    estimates: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    cov_unconstrained: np.ndarray
    loglik: float
    n_params: int
    n_obs: int
    positive_definite: bool
    notes: list = field(default_factory=list)

    @property
    def aic(self) -> float:
        return aic(self.loglik, self.n_params)

    @property
    def bic(self) -> float:
        return bic(self.loglik, self.n_params, self.n_obs)

    def wald_ci(self, level: float = 0.95):
        return wald_ci(self.estimates, np.nan_to_num(self.se, nan=np.inf), level)

    def get(self, name: str) -> tuple:
        i = self.names.index(name)
        return float(self.estimates[i]), float(self.se[i])

    def to_dict(self, level: float = 0.95) -> dict:
        lo, hi = self.wald_ci(level)
        return {
            "loglik": self.loglik,
            "aic": self.aic,
            "bic": self.bic,
            "n_params": self.n_params,
            "n_obs": self.n_obs,
            "positive_definite": self.positive_definite,
            "ci_level": level,
            "parameters": [
                {"name": n, "estimate": float(e), "se": float(s), "ci_low": float(a), "ci_high": float(b)}
                for n, e, s, a, b in zip(self.names, self.estimates, self.se, lo, hi)
            ],
            "notes": list(self.notes),
        }

    def to_text(self, level: float = 0.95) -> str:
        lo, hi = self.wald_ci(level)
        lines = [f"{'parameter':<22}{'estimate':>12}{'s.e.':>12}{'ci low':>12}{'ci high':>12}"]
        for n, e, s, a, b in zip(self.names, self.estimates, self.se, lo, hi):
            lines.append(f"{n:<22}{e:>12.4f}{s:>12.4f}{a:>12.4f}{b:>12.4f}")
        lines.append("")
        lines.append(f"log-likelihood {self.loglik:.4f}  AIC {self.aic:.4f}  BIC {self.bic:.4f}")
        lines.append(f"free parameters {self.n_params}  observations {self.n_obs}")
        if not self.positive_definite:
            lines.append("warning: negative Hessian is not positive definite")
        lines.extend(self.notes)
        return "\n".join(lines)


def infer(params: Params, spec: ModelSpec, traj: Trajectory, loglik: Optional[float] = None) -> InferenceReport:
    """Standard errors by inverting the negative numerical Hessian, then the delta
    method back to the natural scale."""
    if loglik is None:
        loglik = observed_loglik(params, spec, traj)
    theta = to_unconstrained(params, spec)
    H = loglik_hessian(params, spec, traj)
    v, pd = covariance_from_hessian(H)
    J = numerical_jacobian(lambda th: natural_vector(from_unconstrained(th, params, spec), spec), theta)
    cov = J @ v @ J.T
    diag = np.diag(cov)
    se = np.where(diag >= 0, np.sqrt(np.abs(diag)), np.nan)
    notes = [] if pd else ["covariance is not positive definite; some standard errors are undefined"]
    return InferenceReport(
        names=natural_names(spec, traj.target_names),
        estimates=natural_vector(params, spec),
        se=se,
        cov=cov,
        cov_unconstrained=v,
        loglik=float(loglik),
        n_params=spec.n_params,
        n_obs=traj.T,
        positive_definite=pd,
        notes=notes,
    )


def decode_states(post: PosteriorSummary) -> tuple:
    """Smoothed probabilities for t = 1..T and 1-based labels (ties go to the lower state)."""
    probs = post.smoothed[1:]
    return probs, np.argmax(probs, axis=1) + 1

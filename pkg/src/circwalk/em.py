"""EM estimation with multistart screening (short runs, then one long run)."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, special

from .circular import LOG_2PI
from .errors import AscentError, EmptyStateError, NumericalError
from .filtering import PosteriorSummary, expanded_chain_for, posterior, project_posterior
from .hidden import log_hazards, stationary_distribution
from .model import ModelSpec, Params, Trajectory, validate

log = logging.getLogger(__name__)

EMPTY_MASS = 1e-8


@dataclass(frozen=True)
class EmSettings:
    n_starts: int = 50
    short_run_max_iters: int = 50
    short_run_rel_tol: float = 1e-2
    long_run_max_iters: int = 10_000
    long_run_rel_tol: float = 1e-8
    epsilon_stationary: float = 1e-3
    kappa_bound: float = 100.0
    seed: Optional[int] = None
    ascent_tol: float = 1e-9

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")
        for name in ("short_run_rel_tol", "long_run_rel_tol", "epsilon_stationary", "kappa_bound", "ascent_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.short_run_max_iters < 1 or self.long_run_max_iters < 1:
            raise ValueError("iteration caps must be at least 1")


@dataclass
class StartRecord:
    """Outcome of one short EM run in the multistart search."""

    index: int
    loglik: float
    kept: bool
    reason: str
    n_iters: int = 0
    min_stationary: float = float("nan")
    max_abs_kappa: float = float("nan")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FitResult:
    params: Params
    spec: ModelSpec
    loglik: float
    n_iters: int
    converged: bool
    trace: list
    posterior: PosteriorSummary
    multistart_audit: list = field(default_factory=list)
    first_pass: Optional["FitResult"] = None
    notes: list = field(default_factory=list)


# ---------------------------------------------------------------- kappa block


def kappa_objective(kappa, traj: Trajectory, weights, hessian: bool = True):
    """Weighted consensus von Mises log-likelihood, its gradient and Hessian.

    Sum_t w_t [kappa . u_t - log(2 pi I0(|V_t(kappa)|))]. The function is
    concave in kappa.
    """
    kappa = np.asarray(kappa, dtype=float)
    w = np.asarray(weights, dtype=float)
    A = traj.design
    u = traj.canonical_stats
    V = np.einsum("j,tjc->tc", kappa, A)
    ell = np.hypot(V[:, 0], V[:, 1])
    i0e = special.i0e(ell)
    a = special.i1e(ell) / i0e
    value = float(w @ (u @ kappa) - w @ (np.log(i0e) + ell) - LOG_2PI * w.sum())
    small = ell < 1e-3
    safe = np.where(small, 1.0, ell)
    r = np.where(small, 0.5 - ell * ell / 16.0, a / safe)
    AV = np.einsum("tjc,tc->tj", A, V)
    grad = u.T @ w - (w * r) @ AV
    if not hessian:
        return value, grad
    # d2 log I0(|V|) / dV2 = r I + c2 V V^T, c2 = (A' - r) / |V|^2
    c2 = np.where(small, -0.125 + ell * ell / 24.0, (1.0 - 2.0 * r - a * a) / (safe * safe))
    H = -(np.einsum("t,tjc,tic->ji", w * r, A, A) + np.einsum("t,tj,ti->ji", w * c2, AV, AV))
    return value, grad, H


@dataclass
class KappaStep:
    kappa: np.ndarray
    converged: bool
    n_iters: int
    grad_norm: float
    flag: str = ""


def m_step_kappa(traj: Trajectory, weights, start, max_iters: int = 100, gtol: float = 1e-8) -> KappaStep:
    """Maximize the weighted directional log-likelihood by damped Newton.

    Every accepted step increases the objective, so the result never does
    worse than ``start``.
    """
    kappa = np.array(start, dtype=float)
    w = np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        return KappaStep(kappa, False, 0, float("nan"), "empty state")
    value, grad, H = kappa_objective(kappa, traj, w)
    for it in range(1, max_iters + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < gtol:
            return KappaStep(kappa, True, it - 1, gnorm)
        try:
            step = np.linalg.solve(-H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-H, grad, rcond=None)[0]
        decrement = float(grad @ step)
        if not decrement > 0:
            step, decrement = grad, gnorm * gnorm
        if decrement < 1e-13 * (1.0 + abs(value)):
            # roundoff regime: one last full step, kept only if not worse
            cand = kappa + step
            cand_value, cand_grad, cand_H = kappa_objective(cand, traj, w)
            if cand_value >= value:
                kappa, grad = cand, cand_grad
            return KappaStep(kappa, True, it, float(np.linalg.norm(grad)))
        t = 1.0
        for _ in range(60):
            cand = kappa + t * step
            cand_value = kappa_objective(cand, traj, w, hessian=False)[0]
            if cand_value >= value + 1e-4 * t * decrement:
                break
            t *= 0.5
        else:
            return KappaStep(kappa, False, it, gnorm, "stalled")
        kappa = cand
        value, grad, H = kappa_objective(kappa, traj, w)
    gnorm = float(np.linalg.norm(grad))
    return KappaStep(kappa, gnorm < gtol, max_iters, gnorm, "iteration cap")


# ------------------------------------------------------- closed-form blocks


def m_step_lambda(distances, weights, state: int = 0) -> float:
    """Weighted mean of step lengths (exponential mean MLE)."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        raise EmptyStateError(state)
    return float(w @ np.asarray(distances, dtype=float) / total)


def m_step_transitions(pairwise, smoothed=None) -> np.ndarray:
    """Expected transition counts divided by expected visits of the origin."""
    counts = np.asarray(pairwise, dtype=float).sum(axis=0)
    # row sums of the pairwise terms equal the smoothed visits of t = 0..T-1
    visits = counts.sum(axis=1) if smoothed is None else np.asarray(smoothed)[:-1].sum(axis=0)
    for h, v in enumerate(visits):
        if not v > EMPTY_MASS:
            raise EmptyStateError(h)
    return counts / visits[:, None]


# -------------------------------------------------------------- dwell block


def _dwell_counts(counts: np.ndarray, m: tuple, g: int):
    """Switch and stay expected counts for dwell indices 1..m_g of behavior g."""
    offsets = (0, m[0])
    o, other = offsets[g], offsets[1 - g]
    k = np.arange(m[g])
    switch = counts[o + k, other]
    stay = counts[o + k, o + np.minimum(m[g] - 1, k + 1)]
    return switch, stay


def dwell_objective(n: float, q: float, switch, stay) -> float:
    log_c, log_stay = log_hazards(n, q, len(switch))
    with np.errstate(invalid="ignore"):
        terms = switch * log_c + np.where(stay > 0, stay * log_stay, 0.0)
    val = float(terms.sum())
    return val if math.isfinite(val) else -math.inf


@dataclass
class DwellStep:
    n: np.ndarray
    q: np.ndarray
    improved: list
    objective_before: list
    objective_after: list


def m_step_dwell(pairwise_expanded, n, q, m, fixed_n=None) -> DwellStep:
    """Numerically maximize the expanded-chain transition block over (n, q).

    Works on log n and logit q. A behavior whose optimizer does not improve
    the objective keeps its incoming values.
    """
    counts = np.asarray(pairwise_expanded, dtype=float)
    if counts.ndim == 3:
        counts = counts.sum(axis=0)
    n = np.array(n, dtype=float)
    q = np.array(q, dtype=float)
    improved, before, after = [], [], []
    for g in range(2):
        switch, stay = _dwell_counts(counts, tuple(m), g)
        f0 = dwell_objective(n[g], q[g], switch, stay)
        if fixed_n is not None:
            n_g = float(fixed_n[g])
            f_start = dwell_objective(n_g, q[g], switch, stay)

            def neg(lq):
                return -dwell_objective(n_g, special.expit(lq), switch, stay)

            res = optimize.minimize_scalar(neg, bounds=(-30.0, 30.0), method="bounded", options={"xatol": 1e-11})
            cand = (n_g, float(special.expit(res.x)))
            f_cand = -float(res.fun)
            incoming, f_in = (n_g, q[g]), f_start
        else:

            def neg(theta):
                return -dwell_objective(math.exp(theta[0]), special.expit(theta[1]), switch, stay)

            x0 = np.array([math.log(n[g]), special.logit(q[g])])
            res = optimize.minimize(
                neg,
                x0,
                method="L-BFGS-B",
                jac="3-point",
                bounds=[(math.log(1e-3), math.log(1e3)), (-30.0, 30.0)],
                options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 500},
            )
            cand = (math.exp(res.x[0]), float(special.expit(res.x[1])))
            f_cand = -float(res.fun)
            incoming, f_in = (n[g], q[g]), f0
        if f_cand >= f_in and 0 < cand[1] < 1:
            n[g], q[g] = cand
            improved.append(True)
            after.append(f_cand)
        else:
            n[g], q[g] = incoming
            improved.append(False)
            after.append(f_in)
        before.append(f0)
    return DwellStep(n, q, improved, before, after)


# ------------------------------------------------------------- EM control


def canonicalize(params: Params) -> Params:
    """Label states by increasing persistence coefficient kappa_0."""
    perm = np.argsort(params.kappa[:, 0], kind="stable")
    if np.array_equal(perm, np.arange(params.K)):
        return params
    return params.permuted(perm)


def param_vector(params: Params) -> np.ndarray:
    parts = [params.kappa.ravel(), params.lam]
    if params.transition is not None:
        parts.append(params.transition.ravel())
    if params.dwell_n is not None:
        parts.extend([params.dwell_n, params.dwell_q])
    return np.concatenate(parts)


def relative_change(new: Params, old: Params) -> float:
    a, b = param_vector(new), param_vector(old)
    return float(np.max(np.abs(a - b) / (np.abs(b) + 1e-8)))


def e_step(params: Params, spec: ModelSpec, traj: Trajectory) -> PosteriorSummary:
    return posterior(params, spec, traj)


def m_step(params: Params, spec: ModelSpec, traj: Trajectory, post: PosteriorSummary, post_expanded=None) -> Params:
    """One M-step from the posterior of the current parameters."""
    weights = post.smoothed[1:]
    mass = weights.sum(axis=0)
    for k in range(spec.K):
        if not mass[k] > EMPTY_MASS:
            raise EmptyStateError(k)
    kappa = np.empty_like(params.kappa)
    lam = np.empty(spec.K)
    for k in range(spec.K):
        kappa[k] = m_step_kappa(traj, weights[:, k], params.kappa[k]).kappa
        lam[k] = m_step_lambda(traj.d[1:], weights[:, k], k)
    if spec.semi_markov:
        step = m_step_dwell(post_expanded.pairwise, params.dwell_n, params.dwell_q, spec.m, spec.fixed_n)
        return params.replace(kappa=kappa, lam=lam, dwell_n=step.n, dwell_q=step.q)
    return params.replace(kappa=kappa, lam=lam, transition=m_step_transitions(post.pairwise))


def _posteriors(params, spec, traj):
    if spec.semi_markov:
        expanded = posterior(params, spec, traj, expanded=True)
        chain = expanded_chain_for(params, spec)
        return project_posterior(expanded, chain), expanded
    return posterior(params, spec, traj), None


def em_run(start: Params, spec: ModelSpec, traj: Trajectory, max_iters: int, rel_tol: float,
           settings: Optional[EmSettings] = None) -> FitResult:
    """Iterate E and M steps until the largest relative parameter change < rel_tol."""
    settings = settings or EmSettings()
    params = canonicalize(start)
    post, post_x = _posteriors(params, spec, traj)
    trace = [post.loglik]
    converged = False
    n_iters = 0
    for n_iters in range(1, max_iters + 1):
        new = canonicalize(m_step(params, spec, traj, post, post_x))
        new_post, new_post_x = _posteriors(new, spec, traj)
        drop = trace[-1] - new_post.loglik
        if drop > max(settings.ascent_tol, 1e-13 * abs(trace[-1])):
            raise AscentError(
                f"log-likelihood decreased by {drop:.3e} at iteration {n_iters} "
                f"({trace[-1]:.12g} -> {new_post.loglik:.12g})"
            )
        change = relative_change(new, params)
        params, post, post_x = new, new_post, new_post_x
        trace.append(post.loglik)
        if change < rel_tol:
            converged = True
            break
    return FitResult(params, spec, post.loglik, n_iters, converged, trace, post)


def random_start(spec: ModelSpec, traj: Trajectory, rng: np.random.Generator, pi0=None) -> Params:
    K = spec.K
    mean_d = float(np.mean(traj.d[1:])) if traj.T > 0 else 1.0
    if not mean_d > 0:
        mean_d = 1.0
    kappa = rng.uniform(-2.0, 2.0, size=(K, spec.p + 1))
    lam = np.sort(rng.uniform(0.5, 2.0, size=K)) * mean_d
    pi0 = np.full(K, 1.0 / K) if pi0 is None else np.asarray(pi0, dtype=float)
    if spec.semi_markov:
        n = rng.uniform(0.5, 5.0, size=K) if spec.fixed_n is None else np.array(spec.fixed_n)
        q = rng.uniform(0.05, 0.8, size=K)
        return Params(kappa=kappa, lam=lam, pi0=pi0, dwell_n=n, dwell_q=q)
    transition = rng.dirichlet(np.ones(K), size=K)
    return Params(kappa=kappa, lam=lam, pi0=pi0, transition=transition)


def behavior_stationary(params: Params, spec: ModelSpec) -> np.ndarray:
    """Stationary law of the behavior process (projected for the expanded chain)."""
    if spec.semi_markov:
        chain = expanded_chain_for(params, spec)
        return chain.project(stationary_distribution(chain.transition))
    return stationary_distribution(params.transition)


def screen(params: Params, spec: ModelSpec, settings: EmSettings) -> tuple:
    """Apply the spurious-maximum thresholds. Returns (kept, reason, min_nu, max_kappa)."""
    max_kappa = float(np.max(np.abs(params.kappa)))
    try:
        nu = behavior_stationary(params, spec)
    except NumericalError as exc:
        return False, f"stationary law undefined ({exc})", float("nan"), max_kappa
    min_nu = float(nu.min())
    if not min_nu > settings.epsilon_stationary:
        return False, f"min stationary probability {min_nu:.3g} <= {settings.epsilon_stationary}", min_nu, max_kappa
    if not max_kappa < settings.kappa_bound:
        return False, f"max |kappa| {max_kappa:.3g} >= {settings.kappa_bound}", min_nu, max_kappa
    return True, "kept", min_nu, max_kappa


def multistart(spec: ModelSpec, traj: Trajectory, settings: EmSettings, rng: np.random.Generator, pi0=None):
    """Short EM runs from random starts, screened; returns (best FitResult, audit)."""
    audit = []
    best = None
    for i in range(settings.n_starts):
        start = random_start(spec, traj, rng, pi0)
        try:
            res = em_run(start, spec, traj, settings.short_run_max_iters, settings.short_run_rel_tol, settings)
        except (NumericalError, FloatingPointError) as exc:
            audit.append(StartRecord(i, float("nan"), False, f"failed: {exc}"))
            continue
        kept, reason, min_nu, max_k = screen(res.params, spec, settings)
        audit.append(StartRecord(i, res.loglik, kept, reason, res.n_iters, min_nu, max_k))
        if kept and (best is None or res.loglik > best.loglik):
            best = res
    return best, audit


def fit(spec: ModelSpec, traj: Trajectory, settings: Optional[EmSettings] = None) -> FitResult:
    """Global maximum-likelihood search.

    Pass 1 uses a uniform initial law: random starts, short runs, screening,
    then a long run from the best survivor. Pass 2 refits with the initial
    law set to the stationary law of the pass-1 estimate.
    """
    settings = settings or EmSettings()
    problems = validate(spec, traj=traj)
    if problems:
        raise ValueError("; ".join(problems))
    rng = np.random.default_rng(settings.seed)
    best, audit = multistart(spec, traj, settings, rng)
    if best is None:
        raise NumericalError(
            "all starts were screened out: " + "; ".join(f"#{r.index}: {r.reason}" for r in audit)
        )
    first = em_run(best.params, spec, traj, settings.long_run_max_iters, settings.long_run_rel_tol, settings)
    first.multistart_audit = audit
    nu = behavior_stationary(first.params, spec)
    second = em_run(
        first.params.replace(pi0=nu), spec, traj, settings.long_run_max_iters, settings.long_run_rel_tol, settings
    )
    second.multistart_audit = audit
    second.first_pass = first
    if not second.converged:
        second.notes.append(f"long run stopped at the iteration cap ({settings.long_run_max_iters})")
    return second

"""Monte Carlo harness: simulate, refit, and summarize bias, spread, SEs and coverage."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .em import EmSettings, fit
from .errors import CircwalkError
from .inference import infer, natural_names, natural_vector
from .model import ModelSpec, Params
from .simulate import ScenarioConfig, simulate_trajectory

log = logging.getLogger(__name__)


def align_to_truth(estimate: Params, truth: Params) -> Params:
    """Relabel estimated states to the closest truth states.

    Distance is the sum of absolute differences in kappa and log lambda,
    minimized over all state permutations.
    """
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(truth.K)):
        cand = estimate.permuted(perm)
        cost = np.abs(cand.kappa - truth.kappa).sum() + np.abs(np.log(cand.lam / truth.lam)).sum()
        if cost < best_cost:
            best, best_cost = cand, cost
    return best


@dataclass
class Replication:
    seed: int
    length: int
    estimates: np.ndarray
    se: np.ndarray
    loglik: float
    converged: bool


@dataclass
class StudySummary:
    names: list
    truth: np.ndarray
    replications: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def _stack(self, attr):
        return np.array([getattr(r, attr) for r in self.replications])

    @property
    def estimates(self) -> np.ndarray:
        return self._stack("estimates")

    @property
    def se(self) -> np.ndarray:
        return self._stack("se")

    @property
    def bias(self) -> np.ndarray:
        return self.estimates.mean(axis=0) - self.truth

    @property
    def sd(self) -> np.ndarray:
        return self.estimates.std(axis=0, ddof=1)

    @property
    def mean_se(self) -> np.ndarray:
        return np.nanmean(self.se, axis=0)

    def coverage(self, z: float = 1.959964) -> np.ndarray:
        est, se = self.estimates, self.se
        inside = np.abs(est - self.truth) <= z * se
        return np.where(np.isfinite(se), inside, False).mean(axis=0)

    @property
    def mean_length(self) -> float:
        return float(np.mean([r.length for r in self.replications]))

    def row(self, name: str) -> dict:
        i = self.names.index(name)
        return {
            "name": name,
            "truth": float(self.truth[i]),
            "bias": float(self.bias[i]),
            "sd": float(self.sd[i]),
            "mean_se": float(self.mean_se[i]),
            "coverage": float(self.coverage()[i]),
        }

    def to_text(self) -> str:
        lines = [f"{'parameter':<18}{'truth':>10}{'bias':>10}{'sd':>10}{'mean se':>10}{'coverage':>10}"]
        for name in self.names:
            r = self.row(name)
            lines.append(
                f"{name:<18}{r['truth']:>10.3f}{r['bias']:>10.3f}{r['sd']:>10.3f}{r['mean_se']:>10.3f}{r['coverage']:>10.3f}"
            )
        lines.append(f"replications {len(self.replications)}  failures {len(self.failures)}  mean length {self.mean_length:.1f}")
        return "\n".join(lines)


def replicate(seed: int, config: ScenarioConfig, spec: ModelSpec, settings: EmSettings) -> Replication:
    """One simulate-fit-infer cycle with estimates labeled like the truth."""
    rng = np.random.default_rng(seed)
    path = simulate_trajectory(config, spec, rng)
    res = fit(spec, path.trajectory, EmSettings(**{**settings.__dict__, "seed": seed}))
    aligned = align_to_truth(res.params, config.params)
    report = infer(aligned, spec, path.trajectory)
    return Replication(seed, path.length, report.estimates, report.se, res.loglik, res.converged)


def run_study(n_reps: int, config: Optional[ScenarioConfig] = None, spec: Optional[ModelSpec] = None,
              settings: Optional[EmSettings] = None, seed: int = 0) -> StudySummary:
    """Run ``n_reps`` replications with seeds drawn from ``seed``."""
    if n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    config = config or ScenarioConfig()
    spec = spec or ModelSpec(K=config.params.K, p=config.params.kappa.shape[1] - 1)
    settings = settings or EmSettings()
    seeds = np.random.SeedSequence(seed).generate_state(n_reps)
    summary = StudySummary(natural_names(spec, ("target",)), natural_vector(config.params, spec))
    for s in seeds:
        try:
            summary.replications.append(replicate(int(s), config, spec, settings))
        except CircwalkError as exc:
            log.warning("replication %d failed: %s", s, exc)
            summary.failures.append((int(s), str(exc)))
    return summary

"""Acceptance criteria 1-12, one test each, each printing a pass/fail line."""
import math
import time

import numpy as np
import pytest

from acceptance_log import record
from circwalk.circular import bessel_ratio_a, circular_summary, sample_von_mises
from circwalk.em import EmSettings, em_run, fit, kappa_objective, random_start
from circwalk.explore import MixtureFit, critical_distance, kuiper_statistic
from circwalk.filtering import observed_loglik, posterior
from circwalk.hidden import DwellDistribution, build_expanded_chain, expanded_dwell_law, two_state_stationary
from circwalk.inference import aic, bic
from circwalk.model import ModelSpec
from circwalk.simulate import ScenarioConfig, scenario_params, simulate_markov_trajectory, simulate_trajectory
from circwalk.study import run_study
from oracles import brute_force_loglik, brute_force_posteriors, nbinom_shifted_pmf, random_instance

SPEC = ModelSpec(K=2, p=1)


def test_criterion_01_exhaustive_likelihood():
    rng = np.random.default_rng(101)
    instances = [random_instance(rng, K=2, T=8, p=1) for _ in range(50)]
    refs = [brute_force_loglik(p, t) for p, t in instances]
    start = time.perf_counter()
    lls = [observed_loglik(p, SPEC, t) for p, t in instances]
    elapsed = time.perf_counter() - start
    err = max(abs(a - b) / abs(b) for a, b in zip(lls, refs))
    ok = err < 1e-10 and elapsed < 5
    record(1, ok, f"max relative error {err:.2e} (< 1e-10), forward filter time {elapsed:.3f}s (< 5s)")
    assert ok


def test_criterion_02_exhaustive_posteriors():
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(20):
        params, traj = random_instance(rng, K=2, T=8, p=1)
        post = posterior(params, SPEC, traj)
        smoothed, pairwise = brute_force_posteriors(params, traj)
        worst = max(worst, np.max(np.abs(post.smoothed - smoothed)), np.max(np.abs(post.pairwise - pairwise)))
    ok = worst < 1e-10
    record(2, ok, f"max abs posterior error {worst:.2e} (< 1e-10)")
    assert ok


def test_criterion_03_em_ascent():
    truth = scenario_params(1)
    traj, _ = simulate_markov_trajectory(truth, SPEC, 500, np.random.default_rng(103))
    rng = np.random.default_rng(203)
    worst = -np.inf
    for _ in range(20):
        res = em_run(random_start(SPEC, traj, rng), SPEC, traj, 2000, 1e-8, EmSettings(ascent_tol=1e3))
        worst = max(worst, float(np.max(-np.diff(res.trace))))
    ok = worst <= 1e-9
    record(3, ok, f"largest per-iteration loglik decrease over 20 starts {worst:.2e} (<= 1e-9)")
    assert ok


def test_criterion_04_gradient_check():
    rng = np.random.default_rng(104)
    worst = 0.0
    for _ in range(100):
        p = int(rng.integers(0, 4))
        _, traj = random_instance(rng, K=1, T=40, p=max(p, 1))
        w = rng.uniform(0, 1, traj.T)
        kappa = rng.uniform(-10, 10, traj.p + 1)
        _, g = kappa_objective(kappa, traj, w, hessian=False)
        fd = np.empty_like(g)
        for j in range(g.size):
            h = 1e-5 * (1 + abs(kappa[j]))
            e = np.zeros_like(kappa)
            e[j] = h
            fd[j] = (kappa_objective(kappa + e, traj, w, hessian=False)[0]
                     - kappa_objective(kappa - e, traj, w, hessian=False)[0]) / (2 * h)
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(g)))
    ok = worst < 1e-6
    record(4, ok, f"max relative gradient error over 100 instances {worst:.2e} (< 1e-6)")
    assert ok


@pytest.mark.slow
def test_criterion_05_monte_carlo_table():
    start = time.perf_counter()
    study = run_study(100, ScenarioConfig(), SPEC, EmSettings(), seed=105)
    per_rep = (time.perf_counter() - start) / 100
    p11, k01 = study.row("p[1,1]"), study.row("kappa0[1]")
    names = ["p[1,1]", "p[2,2]", "kappa0[1]", "kappa_target[1]", "lambda[1]",
             "kappa0[2]", "kappa_target[2]", "lambda[2]"]
    cov = {n: study.row(n)["coverage"] for n in names}
    checks = {
        "p11 |bias| <= 0.01": abs(p11["bias"]) <= 0.01,
        "p11 sd in [0.012, 0.032]": 0.012 <= p11["sd"] <= 0.032,
        "p11 mean se within 30% of sd": abs(p11["mean_se"] / p11["sd"] - 1) <= 0.3,
        "kappa0(1) |bias| <= 1": abs(k01["bias"]) <= 1.0,
        "kappa0(1) sd in [1, 2.5]": 1.0 <= k01["sd"] <= 2.5,
        "kappa0(1) mean se within 30% of sd": abs(k01["mean_se"] / k01["sd"] - 1) <= 0.3,
        "coverage in [0.88, 0.99]": all(0.88 <= c <= 0.99 for c in cov.values()),
        "no failed replications": not study.failures,
        "under a CPU-minute per replication": per_rep < 60,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    detail = (
        f"p11 bias {p11['bias']:+.4f} sd {p11['sd']:.4f} se {p11['mean_se']:.4f}; "
        f"kappa0(1) bias {k01['bias']:+.3f} sd {k01['sd']:.3f} se {k01['mean_se']:.3f}; "
        f"coverage {' '.join(f'{c:.2f}' for c in cov.values())}; {per_rep:.1f}s/rep"
        + (f"; failed: {', '.join(failed)}" if failed else "")
    )
    print()
    print(study.to_text())
    record(5, ok, detail)
    assert ok


def test_criterion_06_series_length():
    rng = np.random.default_rng(106)
    lengths = [simulate_trajectory(ScenarioConfig(), SPEC, rng).length for _ in range(100)]
    mean = float(np.mean(lengths))
    ok = 400 <= mean <= 700
    record(6, ok, f"mean series length {mean:.1f} over 100 runs (in [400, 700]); range {min(lengths)}-{max(lengths)}")
    assert ok


def test_criterion_07_stationary_arithmetic():
    nu1 = two_state_stationary(0.2564, 0.0149)[0]
    ok = abs(nu1 - 0.0549) <= 1e-4
    record(7, ok, f"state-1 stationary probability {nu1:.5f} (0.0549 +/- 1e-4)")
    assert ok


def test_criterion_08_information_criteria():
    a, b = aic(-804.06, 10), bic(-804.06, 10, 618)
    ok = abs(a - 1628.12) <= 0.01 and abs(b - 1672.38) <= 0.01
    record(8, ok, f"AIC {a:.3f} (1628.12), BIC {b:.3f} (1672.38)")
    assert ok


def test_criterion_09_semi_markov_reduction():
    traj, _ = simulate_markov_trajectory(scenario_params(1), SPEC, 500, np.random.default_rng(109))
    settings = EmSettings(n_starts=10, seed=9)
    markov = fit(SPEC, traj, settings)
    semi = fit(ModelSpec(K=2, p=1, hidden="semi-markov", fixed_n=(1.0, 1.0)), traj, settings)
    dll = abs(markov.loglik - semi.loglik)
    P = markov.params.transition
    dq = float(np.max(np.abs(semi.params.dwell_q - np.array([P[0, 1], P[1, 0]]))))
    ok = dll < 1e-4 and dq < 1e-3
    record(9, ok, f"|loglik difference| {dll:.2e} (< 1e-4), max |q - off-diagonal| {dq:.2e} (< 1e-3)")
    assert ok


def test_criterion_10_expanded_chain_dwell_law():
    worst = 0.0
    cases = [(2.9009, 0.6466), (0.1659, 0.0013), (1.0, 0.2564), (5.0, 0.3), (0.5, 0.05)]
    for n, q in cases:
        chain = build_expanded_chain([DwellDistribution(n, q), DwellDistribution(1.0, 0.5)], (60, 60))
        law = expanded_dwell_law(chain, 0, 30)
        ref = np.array([nbinom_shifted_pmf(k, n, q) for k in range(1, 31)])
        worst = max(worst, float(np.max(np.abs(law - ref))))
    ok = worst < 1e-10
    record(10, ok, f"max abs dwell-law error for k <= 30, m = 60: {worst:.2e} (< 1e-10)")
    assert ok


def test_criterion_11_sampler_calibration():
    rng = np.random.default_rng(111)
    errs = []
    for kappa in (0.0, 1.0, 5.0, 20.0):
        rbar = circular_summary(sample_von_mises(0.7, kappa, rng, size=100_000)).resultant_length
        errs.append(abs(rbar - bessel_ratio_a(kappa)))
    ok = max(errs) < 0.01
    record(11, ok, "resultant length errors " + ", ".join(f"{e:.4f}" for e in errs) + " (< 0.01)")
    assert ok


def test_criterion_12_explore_pipeline():
    d = critical_distance(MixtureFit(np.array([0.09, 0.91]), np.array([0.4602, 7.3119]), 0.0))
    a = sample_von_mises(0.4, 0.7, np.random.default_rng(112), size=117)
    v0 = kuiper_statistic(a)[0]
    rot = max(abs(kuiper_statistic(a + s)[0] - v0) for s in (0.5, 1.7, -3.0, 10.0))
    grid = (np.arange(100) + 0.5) * 2 * math.pi / 100
    p_null = kuiper_statistic(grid)[1]
    ok = abs(d - 0.3200) <= 1e-4 and rot < 1e-12 and p_null > 0.15
    record(12, ok, f"critical distance {d:.5f} (0.3200), rotation change {rot:.1e}, null p-value {p_null:.3f} (> 0.15)")
    assert ok

import math

import numpy as np
import pytest

from circwalk.errors import DataError
from circwalk.model import (
    ModelSpec,
    Params,
    Trajectory,
    log_emissions,
    markov_params,
    step_log_emission,
    validate,
)
from oracles import log_emission_oracle, random_instance


def test_spec_parameter_counts():
    assert ModelSpec(K=2, p=2).n_params == 10
    assert ModelSpec(K=2, p=2, hidden="semi-markov").n_params == 12
    assert ModelSpec(K=2, p=1, hidden="semi-markov", fixed_n=(1, 1)).n_params == 8
    assert ModelSpec(K=1, p=5).n_params == 7


@pytest.mark.parametrize(
    "kw",
    [dict(K=0), dict(K=2, p=-1), dict(K=2, hidden="hsmm"), dict(K=3, hidden="semi-markov"),
     dict(K=2, hidden="semi-markov", m=(0, 5)), dict(K=2, hidden="semi-markov", fixed_n=(1.0, -1.0))],
)
def test_spec_rejects_invalid(kw):
    with pytest.raises(ValueError):
        ModelSpec(**kw)


def test_trajectory_shapes_and_readonly():
    traj = Trajectory.from_arrays([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    assert traj.T == 2 and traj.p == 0
    with pytest.raises(ValueError):
        traj.y[0] = 1.0
    with pytest.raises(DataError):
        Trajectory([0.0, 1.0], [1.0], np.zeros((2, 0)), np.zeros((2, 0)))


def test_trajectory_default_target_names():
    traj = Trajectory.from_arrays([0, 1, 2], [1, 1, 1], x=np.zeros((3, 2)))
    assert traj.target_names == ("target1", "target2")


def test_canonical_stats():
    traj = Trajectory.from_arrays([0.0, 0.5, 1.5], [1, 1, 1], x=[[0.0], [0.2], [1.0]], z=[[1.0], [2.0], [0.5]])
    u = traj.canonical_stats
    assert u[0] == pytest.approx([math.cos(0.5), 2.0 * math.cos(0.3)])
    assert u[1] == pytest.approx([math.cos(1.0), 0.5 * math.cos(0.5)])


def test_log_emissions_match_oracle():
    rng = np.random.default_rng(3)
    params, traj = random_instance(rng, K=3, T=12, p=2)
    le = log_emissions(params, traj)
    for t in range(1, traj.T + 1):
        for k in range(3):
            ref = log_emission_oracle(params.kappa[k], params.lam[k], traj.y, traj.d, traj.x, traj.z, t)
            assert le[t - 1, k] == pytest.approx(ref, rel=1e-12)
            assert step_log_emission(params, ModelSpec(K=3, p=2), traj, t, k) == pytest.approx(ref, rel=1e-12)


def test_step_log_emission_range():
    params, traj = random_instance(np.random.default_rng(0))
    with pytest.raises(ValueError):
        step_log_emission(params, ModelSpec(K=2, p=1), traj, 0, 0)


def test_zero_kappa_gives_uniform_direction():
    traj = Trajectory.from_arrays([0.0, 1.0, -2.0], [0.5, 0.5, 0.5])
    params = markov_params([[1.0]], [[0.0]], [2.0])
    expected = -math.log(2 * math.pi) - math.log(2.0) - 0.25
    assert log_emissions(params, traj)[:, 0] == pytest.approx([expected, expected])


def test_params_roundtrip_and_permutation():
    params, _ = random_instance(np.random.default_rng(1), K=3)
    again = Params.from_dict(params.to_dict())
    assert np.array_equal(again.kappa, params.kappa) and np.array_equal(again.transition, params.transition)
    perm = [2, 0, 1]
    q = params.permuted(perm)
    assert q.transition[0, 1] == params.transition[2, 0]
    assert np.array_equal(q.kappa[1], params.kappa[0])


def test_validate_reports_violations():
    spec = ModelSpec(K=2, p=1)
    bad = markov_params([[0.5, 0.6], [0.5, 0.5]], [[1, 1], [1, 1]], [1.0, -1.0])
    problems = validate(spec, bad)
    assert any("lambda must be positive" in p for p in problems)
    assert any("row 1 sums" in p for p in problems)
    good, traj = random_instance(np.random.default_rng(2))
    assert validate(spec, good, traj) == []
    assert validate(ModelSpec(K=2, p=2), good, traj)

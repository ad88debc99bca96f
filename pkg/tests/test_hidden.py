import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circwalk.errors import NumericalError
from circwalk.hidden import (
    DwellDistribution,
    build_expanded_chain,
    dwell_pmf,
    expanded_dwell_law,
    hazard,
    stationary_distribution,
    two_state_stationary,
)
from oracles import nbinom_shifted_pmf


@pytest.mark.parametrize("n,q", [(1.0, 0.3), (2.5, 0.2), (0.4, 0.7), (11.0, 0.05)])
def test_dwell_pmf_matches_gamma_formula(n, q):
    k = np.arange(1, 40)
    ref = [nbinom_shifted_pmf(int(j), n, q) for j in k]
    assert dwell_pmf(DwellDistribution(n, q), k) == pytest.approx(ref, rel=1e-11)


def test_geometric_hazard_is_constant():
    assert hazard(DwellDistribution(1.0, 0.3), np.arange(1, 30)) == pytest.approx(np.full(29, 0.3))


def test_hazard_definition():
    dw = DwellDistribution(3.0, 0.4)
    for k in (1, 2, 5, 9):
        surv = sum(nbinom_shifted_pmf(j, 3.0, 0.4) for j in range(k, 400))
        assert hazard(dw, k) == pytest.approx(nbinom_shifted_pmf(k, 3.0, 0.4) / surv, rel=1e-10)


def test_dwell_validation():
    with pytest.raises(ValueError):
        DwellDistribution(0.0, 0.5)
    with pytest.raises(ValueError):
        DwellDistribution(1.0, 1.0)
    with pytest.raises(ValueError):
        dwell_pmf(DwellDistribution(1.0, 0.5), 0)


def test_expanded_chain_structure():
    chain = build_expanded_chain([DwellDistribution(2.0, 0.3), DwellDistribution(1.5, 0.6)], (10, 7))
    assert chain.size == 17
    assert np.allclose(chain.transition.sum(axis=1), 1.0, atol=1e-14)
    assert list(chain.offsets()) == [0, 10]
    lifted = chain.lift(np.array([0.25, 0.75]))
    assert lifted[0] == 0.25 and lifted[10] == 0.75 and lifted.sum() == 1.0
    assert chain.project(lifted) == pytest.approx([0.25, 0.75])
    with pytest.raises(ValueError):
        build_expanded_chain([DwellDistribution(1, 0.5)] * 3, (5, 5, 5))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 8.0), st.floats(0.05, 0.9))
def test_expanded_dwell_law_matches_pmf(n, q):
    chain = build_expanded_chain([DwellDistribution(n, q), DwellDistribution(1.0, 0.5)], (60, 5))
    law = expanded_dwell_law(chain, 0, 30)
    ref = np.array([nbinom_shifted_pmf(k, n, q) for k in range(1, 31)])
    assert np.max(np.abs(law - ref)) < 1e-10


def test_stationary_two_state_closed_form():
    P = np.array([[0.9, 0.1], [0.2, 0.8]])
    assert stationary_distribution(P) == pytest.approx([2 / 3, 1 / 3], abs=1e-14)
    assert two_state_stationary(0.1, 0.2) == pytest.approx([2 / 3, 1 / 3])


def test_stationary_solves_balance():
    rng = np.random.default_rng(0)
    for _ in range(20):
        P = rng.dirichlet(np.ones(5), size=5)
        nu = stationary_distribution(P)
        assert nu @ P == pytest.approx(nu, abs=1e-13)
        assert nu.sum() == pytest.approx(1.0)


def test_stationary_reducible_raises():
    with pytest.raises(NumericalError, match="closed classes"):
        stationary_distribution(np.eye(2))

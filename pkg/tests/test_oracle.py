import warnings
from fractions import Fraction

import numpy as np
import pytest

from bruteforce import absorption_by_value_iteration, count_law
from modelcollapse.config import from_mapping
from modelcollapse.diagnostics import barycenter_trajectory
from modelcollapse.errors import PreconditionError, ResourceLimitError
from modelcollapse.measure import ProbVector, TestFunction
from modelcollapse.oracle import (
    absorption_cdf,
    absorption_probs,
    absorption_times,
    build_chain,
    composition_count,
    compositions,
    exact_mean_trajectory,
    expected_absorption_time,
    fixation_law,
    moment_trajectory,
    stationary_distribution,
)

HALF = ProbVector([0.5, 0.5])


def test_compositions_enumerate_lattice():
    assert compositions(2, 2) == [(2, 0), (1, 1), (0, 2)]
    assert len(compositions(5, 3)) == composition_count(5, 3) == 21


def test_two_atom_transition_matrix():
    chain = build_chain(2, 2, 0.0, HALF)
    expected = np.array([[1.0, 0.0, 0.0], [0.25, 0.5, 0.25], [0.0, 0.0, 1.0]])
    assert np.allclose(chain.P, expected, atol=1e-15)
    assert chain.absorbing == (0, 2)


@pytest.mark.parametrize("N, K, a", [(3, 2, 0.0), (3, 3, 0.0), (4, 3, 0.35), (2, 4, 0.7)])
def test_rows_match_enumeration(N, K, a):
    mu0 = ProbVector.normalized(np.arange(1, K + 1))
    chain = build_chain(N, K, a, mu0)
    fa = Fraction(a).limit_denominator()
    fmu0 = [Fraction(x).limit_denominator() for x in mu0.weights]
    for i, s in enumerate(chain.states):
        law = count_law([Fraction(v, N) for v in s], fmu0, fa, N)
        row = np.zeros(len(chain.states))
        for t, p in law.items():
            row[chain.index[t]] = float(p)
        assert np.allclose(chain.P[i], row, atol=1e-12), s
    assert np.allclose(chain.P.sum(axis=1), 1.0, atol=1e-10)


def test_absorption_two_atoms():
    chain = build_chain(2, 2, 0.0, HALF)
    B = absorption_probs(chain)
    assert B.probs.tolist() == [[0.5, 0.5]]
    assert np.allclose(absorption_times(chain), [0.0, 2.0, 0.0], atol=1e-12)


def test_absorption_cdf_two_atoms():
    chain = build_chain(2, 2, 0.0, HALF)
    cdf = absorption_cdf(chain, HALF, 30)
    assert np.allclose(cdf, [1 - 2.0**-n for n in range(31)], atol=1e-12)


@pytest.mark.parametrize("N, K", [(2, 2), (6, 2), (10, 2), (4, 3), (7, 3)])
def test_absorption_matches_value_iteration(N, K):
    chain = build_chain(N, K, 0.0, ProbVector.uniform(K))
    states, fix, time = absorption_by_value_iteration(N, K)
    B = absorption_probs(chain)
    T = absorption_times(chain)
    for s, f, t in zip(states, fix, time):
        i = chain.index[s]
        assert np.allclose(B.by_atom(i), f, atol=1e-9)
        assert T[i] == pytest.approx(t, abs=1e-8)


@pytest.mark.parametrize("N, K", [(3, 2), (9, 2), (5, 3), (8, 3)])
def test_fixation_equals_initial_frequency(N, K):
    chain = build_chain(N, K, 0.0, ProbVector.uniform(K))
    B = absorption_probs(chain)
    for i in range(len(chain.states)):
        assert np.allclose(B.by_atom(i), chain.frequencies[i], atol=1e-12)


def test_off_lattice_start():
    chain = build_chain(5, 3, 0.0, ProbVector.uniform(3))
    start = ProbVector([0.25, 0.25, 0.5])
    assert chain.state_of(start) is None
    assert np.allclose(fixation_law(chain, start), start.weights, atol=1e-12)
    assert expected_absorption_time(chain, ProbVector([0.2, 0.4, 0.4])) == pytest.approx(
        absorption_times(chain)[chain.index[(1, 2, 2)]], abs=1e-12)


def test_stationary_two_atoms_with_excitation():
    chain = build_chain(2, 2, 0.5, HALF)
    st = stationary_distribution(chain)
    assert st.unique
    assert np.allclose(st.pi * 7, [2, 3, 2], atol=1e-12)
    assert np.allclose(st.barycenter, [0.5, 0.5], atol=1e-12)
    assert st.variance(TestFunction.indicator(0, 2)) == pytest.approx(1 / 7, abs=1e-12)


@pytest.mark.parametrize("a", [0.1, 0.5, 0.9])
def test_stationary_barycenter_is_mu0(a):
    mu0 = ProbVector([0.6, 0.3, 0.1])
    st = stationary_distribution(build_chain(5, 3, a, mu0))
    assert np.allclose(st.barycenter, mu0.weights, atol=1e-12)


def test_stationary_without_excitation_is_reducible():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        st = stationary_distribution(build_chain(3, 3, 0.0, ProbVector.uniform(3)))
    assert not st.unique
    assert len(st.extreme_points) == 3
    assert any("reducible" in str(x.message) for x in w)
    with pytest.raises(PreconditionError):
        st.variance(TestFunction.indicator(0, 3))


def test_absorption_needs_absorbing_states():
    with pytest.raises(PreconditionError):
        absorption_probs(build_chain(2, 2, 0.5, HALF))


def test_second_moments_two_atoms():
    chain = build_chain(2, 2, 0.0, HALF)
    m2 = moment_trajectory(chain, HALF, TestFunction.indicator(0, 2), 6, power=2)
    # m2_n = 1/2 - 2^{-(n+2)}
    assert np.allclose(m2, [0.5 - 2.0 ** -(n + 2) for n in range(7)], atol=1e-14)


@pytest.mark.parametrize("a", [0.1, 0.5, 0.9])
def test_chain_powers_match_closed_form_mean(a):
    cfg = from_mapping({"a": a, "N": 4, "horizon": 50, "mu0": [0.6, 0.3, 0.1], "mu_start": [0.0, 0.25, 0.75]})
    for k in range(3):
        f = TestFunction.indicator(k, 3)
        assert np.allclose(exact_mean_trajectory(cfg, f, 50), barycenter_trajectory(cfg, f, 50), atol=1e-12)


def test_size_guards():
    with pytest.raises(ResourceLimitError):
        build_chain(100, 6, 0.0, ProbVector.uniform(6))
    with pytest.raises(ResourceLimitError):
        build_chain(10, 3, 0.0, ProbVector.uniform(3), max_states=50)

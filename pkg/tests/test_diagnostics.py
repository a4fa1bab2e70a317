import warnings

import numpy as np
import pytest

from modelcollapse.config import from_mapping
from modelcollapse.diagnostics import (
    PartialResultWarning,
    barycenter_trajectory,
    fixation_histogram,
    jensen_gap,
    martingale_residual,
    second_moment_monotone,
)
from modelcollapse.dynamics import GenerationState
from modelcollapse.ensemble import run_ensemble
from modelcollapse.errors import InvalidArgumentError, PreconditionError
from modelcollapse.measure import ProbVector, TestFunction


def cfg_of(**kw):
    base = {"a": 0.0, "N": 2, "horizon": 20, "mu0": [0.5, 0.5], "master_seed": 17}
    base.update(kw)
    return from_mapping(base)


def state(mu, theta=None):
    mu = ProbVector(mu)
    return GenerationState(0, mu, ProbVector(theta) if theta is not None else mu)


F0 = TestFunction.indicator(0, 2)


# -- martingale residuals ------------------------------------------------------------

def test_residual_exactly_zero_from_dirac():
    rep = martingale_residual(state([1.0, 0.0]), cfg_of(), 1000, F0)
    assert rep.mean_residual == 0.0 and rep.standard_error == 0.0
    assert rep.passed


def test_residual_full_excitation():
    cfg = cfg_of(a=1.0, N=4, mu0=[0.3, 0.7])
    f = TestFunction([0.2, 0.9])
    rep = martingale_residual(state([1.0, 0.0]), cfg, 50_000, f)
    assert rep.contract_value == pytest.approx(0.3 * 0.2 + 0.7 * 0.9)
    assert rep.passed


def test_residual_two_atom_example():
    rep = martingale_residual(state([0.5, 0.5]), cfg_of(), 100_000, F0)
    assert rep.replicas == 100_000
    assert rep.standard_error == pytest.approx(np.sqrt(1 / 8) / np.sqrt(1e5), rel=0.02)
    assert rep.passed


def test_residual_rejects_few_replicas():
    with pytest.raises(InvalidArgumentError):
        martingale_residual(state([0.5, 0.5]), cfg_of(), 50, F0)
    with pytest.raises(InvalidArgumentError):
        martingale_residual(state([0.5, 0.5]), cfg_of(), 500, F0, coordinate="nu")


@pytest.mark.parametrize("a, b", [(0.3, 0.4), (0.0, 0.6), (0.0, 0.0)])
def test_residuals_pass_on_random_states(a, b):
    rng = np.random.default_rng(int(a * 10 + b * 100))
    cfg = cfg_of(a=a, b=b, N=6, mu0=[0.1, 0.2, 0.3, 0.4])
    for j in range(3):
        mu, theta = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
        s = state(mu, theta)
        for coord in ("mu", "theta"):
            f = TestFunction(rng.uniform(size=4))
            rep = martingale_residual(s, cfg, 20_000, f, coordinate=coord, stream_index=j)
            assert rep.passed, (coord, rep)


# -- barycenter trajectory -----------------------------------------------------------

def test_barycenter_full_excitation_is_constant_after_start():
    cfg = cfg_of(a=1.0, mu0=[0.3, 0.7], mu_start=[1.0, 0.0])
    assert barycenter_trajectory(cfg, F0, 4) == pytest.approx([1.0, 0.3, 0.3, 0.3, 0.3])


def test_barycenter_frozen_without_excitation():
    cfg = cfg_of(a=0.0, mu0=[0.3, 0.7])
    assert barycenter_trajectory(cfg, F0, 5) == [0.3] * 6


def test_barycenter_geometric_example():
    cfg = cfg_of(a=0.5, mu0=[1.0, 0.0], mu_start=[0.0, 1.0])
    got = barycenter_trajectory(cfg, F0, 10)
    assert got == pytest.approx([1 - 2.0**-n for n in range(11)], abs=1e-15)


def test_barycenter_with_parametric_channel_matches_recursion():
    cfg = cfg_of(a=0.2, b=0.5, mu0=[0.9, 0.1], theta0=[0.2, 0.8], mu_start=[0.5, 0.5])
    m, out = 0.5, [0.5]
    for _ in range(15):
        m = 0.2 * 0.9 + 0.8 * (0.5 * 0.2 + 0.5 * m)
        out.append(m)
    assert barycenter_trajectory(cfg, F0, 15) == pytest.approx(out, abs=1e-14)


def test_ensemble_mean_tracks_barycenter():
    cfg = cfg_of(a=0.3, b=0.4, N=5, horizon=15, mu0=[0.7, 0.3], theta0=[0.1, 0.9], mu_start=[0.0, 1.0])
    ens = run_ensemble(cfg, 20_000)
    exact = np.array(barycenter_trajectory(cfg, F0, 15))
    assert np.all(np.abs(ens.mean[:, 0] - exact) <= 4 * ens.mean_se[:, 0] + 1e-15)


# -- Jensen gap ------------------------------------------------------------------

@pytest.fixture(scope="module")
def two_atom_ensemble():
    return run_ensemble(cfg_of(horizon=20), 100_000)


def test_jensen_gap_identity_is_zero(two_atom_ensemble):
    for n in (1, 5, 20):
        gap = jensen_gap(two_atom_ensemble, n, 0, lambda x: x)
        assert abs(gap.gap) <= 4 * gap.standard_error + 1e-12


def test_jensen_gap_generation_zero_is_zero(two_atom_ensemble):
    gap = jensen_gap(two_atom_ensemble, 0, 0, np.square)
    assert gap.gap == 0.0


def test_jensen_gap_square_first_generation(two_atom_ensemble):
    gap = jensen_gap(two_atom_ensemble, 1, 0, np.square)
    assert abs(gap.gap - 1 / 8) <= 0.01
    for n in range(21):
        g = jensen_gap(two_atom_ensemble, n, 0, np.square)
        assert g.gap >= -4 * g.standard_error


def test_jensen_gap_generation_bounds(two_atom_ensemble):
    with pytest.raises(InvalidArgumentError):
        jensen_gap(two_atom_ensemble, 21, 0, np.square)


# -- second-moment monotonicity --------------------------------------------------------

def test_second_moment_monotone_two_atoms(two_atom_ensemble):
    assert second_moment_monotone(two_atom_ensemble, 0) == [0.0] * 20
    m2 = two_atom_ensemble.second_moment[:4, 0]
    se = two_atom_ensemble.second_moment_se[:4, 0]
    assert np.all(np.abs(m2 - [0.25, 0.375, 0.4375, 0.46875]) <= 4 * se + 1e-15)


def test_second_moment_constant_from_dirac():
    ens = run_ensemble(cfg_of(mu0=[1.0, 0.0], horizon=5), 50)
    assert second_moment_monotone(ens, 0) == [0.0] * 5
    assert np.all(ens.second_moment[:, 0] == 1.0)


def test_second_moment_needs_pure_resampling():
    with pytest.raises(PreconditionError):
        second_moment_monotone(run_ensemble(cfg_of(a=0.1, horizon=3), 10), 0)
    with pytest.raises(PreconditionError):
        second_moment_monotone(run_ensemble(cfg_of(b=0.5, horizon=3), 10), 0)


# -- fixation ------------------------------------------------------------------

def test_fixation_from_dirac():
    ens = run_ensemble(cfg_of(mu0=[0.0, 1.0], horizon=3), 20)
    assert fixation_histogram(ens).tolist() == [0.0, 1.0]


def test_fixation_two_atoms(two_atom_ensemble):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PartialResultWarning)
        freq = fixation_histogram(two_atom_ensemble)
    n = two_atom_ensemble.n_collapsed
    se = np.sqrt(0.25 / n)
    assert np.all(np.abs(freq - 0.5) <= 3 * se)
    assert freq.sum() == pytest.approx(1.0)


def test_fixation_three_atoms():
    cfg = from_mapping({"a": 0.0, "N": 5, "horizon": 400, "mu0": [0.2, 0.3, 0.5], "master_seed": 8})
    ens = run_ensemble(cfg, 20_000)
    freq = fixation_histogram(ens)
    se = np.sqrt(cfg.mu0.weights * (1 - cfg.mu0.weights) / ens.n_collapsed)
    assert np.all(np.abs(freq - cfg.mu0.weights) <= 3 * se)


def test_fixation_warns_on_uncollapsed_runs():
    ens = run_ensemble(cfg_of(N=2, horizon=2), 200)
    assert 0 < ens.n_collapsed < ens.n_runs
    with pytest.warns(PartialResultWarning, match="did not collapse"):
        fixation_histogram(ens)


def test_fixation_rejects_excited_runs():
    with pytest.raises(PreconditionError):
        fixation_histogram(run_ensemble(cfg_of(a=0.2, horizon=5), 20))


def test_excited_runs_never_collapse():
    ens = run_ensemble(cfg_of(a=0.05, N=2, horizon=200), 2000)
    assert ens.n_collapsed == 0

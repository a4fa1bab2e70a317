"""Executable checks of the limit theory.

Martingale residuals of one-step branching, the exact mean trajectory,
Jensen gaps of convex statistics, second-moment monotonicity in the pure
resampling regime, and fixation frequencies after collapse.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import ExperimentConfig
from .dynamics import GenerationState, RngStream, advance, effective_sampling_measure, inverse_cdf_table
from .ensemble import EnsembleStats
from .errors import InvalidArgumentError, PreconditionError
from .measure import TestFunction, integrate

SIGMA_THRESHOLD = 4.0
MIN_REPLICAS = 100


class PartialResultWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ResidualReport:
    mean_residual: float
    standard_error: float
    replicas: int
    f_index: int | None = None
    coordinate: str = "mu"
    contract_value: float = math.nan

    @property
    def passed(self) -> bool:
        return abs(self.mean_residual) <= SIGMA_THRESHOLD * self.standard_error


def branch_one_step(state: GenerationState, cfg: ExperimentConfig, replicas: int,
                    stream_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """``replicas`` independent one-step successors of ``state``: ``(mu_next, theta_next)``."""
    if replicas < MIN_REPLICAS:
        raise InvalidArgumentError(f"need at least {MIN_REPLICAS} replicas, got {replicas}")
    u = RngStream(cfg.master_seed, stream_index).uniforms((replicas, cfg.N, 2))
    mu = np.broadcast_to(state.mu.weights, (replicas, cfg.K))
    theta = np.broadcast_to(state.theta.weights, (replicas, cfg.K))
    mu_next, theta_next, _, _, _ = advance(
        mu, theta, u, cfg.a, cfg.b, cfg.c, inverse_cdf_table(cfg.mu0.weights)
    )
    return mu_next, theta_next


def residual_report(state: GenerationState, cfg: ExperimentConfig, branches: tuple[np.ndarray, np.ndarray],
                    f: TestFunction, coordinate: str = "mu", f_index: int | None = None) -> ResidualReport:
    if coordinate == "mu":
        target, values = effective_sampling_measure(state, cfg).weights, branches[0]
    elif coordinate == "theta":
        target, values = state.theta.weights, branches[1]
    else:
        raise InvalidArgumentError(f"coordinate must be 'mu' or 'theta', got {coordinate!r}")
    # same reduction for both sides, so an unchanged state gives exactly zero residual
    contract = float((target * f.values).sum())
    residuals = (values * f.values).sum(axis=1) - contract
    se = float(residuals.std(ddof=1) / math.sqrt(residuals.size))
    return ResidualReport(float(residuals.mean()), se, residuals.size, f_index, coordinate, contract)


def martingale_residual(state: GenerationState, cfg: ExperimentConfig, replicas: int, f: TestFunction,
                        coordinate: str = "mu", stream_index: int = 0,
                        f_index: int | None = None) -> ResidualReport:
    """Branch ``replicas`` independent one-step copies of ``state``.

    For ``coordinate="mu"`` the contract value is the integral of ``f``
    against the effective sampling measure; for ``"theta"`` it is
    ``theta_n(f)``.
    """
    if coordinate not in ("mu", "theta"):
        raise InvalidArgumentError(f"coordinate must be 'mu' or 'theta', got {coordinate!r}")
    branches = branch_one_step(state, cfg, replicas, stream_index)
    return residual_report(state, cfg, branches, f, coordinate, f_index)


def barycenter_trajectory(cfg: ExperimentConfig, f: TestFunction, horizon: int) -> list[float]:
    """Exact ``E[mu_n(f)]`` for ``n = 0..horizon`` in closed form.

    The mean obeys ``m_{n+1} = a mu0(f) + (1-a)(b theta0(f) + c m_n)``, so
    ``m_n = m* + r^n (m_0 - m*)`` with rate ``r = (1-a)c``.  With ``b = 0``
    this is ``mu0(f) + (1-a)^n (m_0 - mu0(f))``.
    """
    a, b, c = cfg.a, cfg.b, cfg.c
    m0 = integrate(cfg.mu_start, f)
    rate = (1.0 - a) * c
    if rate == 1.0:
        return [m0] * (horizon + 1)
    if b == 0:
        fixed = integrate(cfg.mu0, f)
    else:
        fixed = (a * integrate(cfg.mu0, f) + (1.0 - a) * b * integrate(cfg.theta0, f)) / (1.0 - rate)
    return [fixed + rate**n * (m0 - fixed) for n in range(horizon + 1)]


@dataclass(frozen=True)
class JensenGap:
    gap: float
    standard_error: float
    generation: int
    f_index: int


def jensen_gap(stats: EnsembleStats, generation: int, f_index: int,
               g: Callable[[np.ndarray], np.ndarray], n_boot: int = 400, seed: int = 0) -> JensenGap:
    """Estimate ``E[g(mu_n(f))] - g(E[mu_n(f)])`` with a bootstrap standard error.

    ``E[mu_n(f)]`` is the exact value from :func:`barycenter_trajectory`.
    """
    if not 0 <= generation <= stats.horizon:
        raise InvalidArgumentError(f"generation {generation} outside [0, {stats.horizon}]")
    f = TestFunction.indicator(f_index, stats.K)
    levels, probs = stats.value_distribution(generation, f_index)
    g_levels = np.asarray(g(levels), dtype=float)
    center = barycenter_trajectory(stats.config, f, generation)[generation]
    g_center = float(np.asarray(g(np.array([center])), dtype=float)[0])
    gap = float(probs @ g_levels) - g_center
    if generation == 0:
        return JensenGap(gap, 0.0, generation, f_index)
    rng = np.random.default_rng(seed)
    boot = rng.multinomial(stats.n_runs, probs, size=n_boot) / stats.n_runs
    se = float((boot @ g_levels).std(ddof=1))
    return JensenGap(gap, se, generation, f_index)


def second_moment_monotone(stats: EnsembleStats, f_index: int) -> list[float]:
    """Per-generation violations of ``E[mu_n(f)^2] <= E[mu_{n+1}(f)^2]``.

    Entry ``n`` is ``max(0, m2[n] - m2[n+1] - 4*se)``; all zeros is a pass.
    Only meaningful when ``mu_n(f)`` is itself a martingale (``a = b = 0``).
    """
    cfg = stats.config
    if cfg.a != 0 or cfg.b != 0:
        raise PreconditionError("second-moment monotonicity needs a = 0 and b = 0")
    m2 = stats.second_moment[:, f_index]
    se = stats.second_moment_se[:, f_index]
    out = []
    for n in range(stats.horizon):
        tol = SIGMA_THRESHOLD * math.hypot(se[n], se[n + 1])
        out.append(max(0.0, float(m2[n] - m2[n + 1] - tol)))
    return out


def fixation_histogram(stats: EnsembleStats) -> np.ndarray:
    """Fraction of collapsed trajectories absorbed at each atom."""
    if stats.config.a != 0:
        raise PreconditionError("fixation needs a = 0; with a > 0 nothing is ever absorbed")
    collapsed = stats.n_collapsed
    if collapsed == 0:
        raise PreconditionError("no trajectory collapsed within the horizon")
    if collapsed < stats.n_runs:
        warnings.warn(
            f"{stats.n_runs - collapsed} of {stats.n_runs} trajectories did not collapse by the horizon; "
            "frequencies are over collapsed runs only",
            PartialResultWarning,
            stacklevel=2,
        )
    return stats.fixation_counts / collapsed

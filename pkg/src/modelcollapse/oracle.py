"""Exact ground truth for the ``b = 0`` chain on small instances.

With no parametric channel the state is the empirical measure alone, and
after one generation it lives on the lattice of count compositions
``c_1 + ... + c_K = N``.  The next composition is
``Multinomial(N, a*mu0 + (1-a)*c/N)``.  This module builds that transition
matrix densely and solves for absorption probabilities, absorption times,
stationary distributions and moment trajectories.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg
from scipy.sparse.csgraph import connected_components
from scipy.special import gammaln, xlogy

from .config import ExperimentConfig
from .errors import InvalidArgumentError, NumericalError, PreconditionError, ResourceLimitError
from .measure import ProbVector, Support, TestFunction

MAX_COMPOSITIONS = 200_000
# Dense storage caps the practical size well below MAX_COMPOSITIONS.
MAX_DENSE_STATES = 6_000
ROW_SUM_TOL = 1e-10
RESIDUAL_TOL = 1e-9


def composition_count(N: int, K: int) -> int:
    return math.comb(N + K - 1, K - 1)


def compositions(N: int, K: int) -> list[tuple[int, ...]]:
    """All ``K``-part compositions of ``N``, first coordinate descending."""
    if K == 1:
        return [(N,)]
    out = []
    for first in range(N, -1, -1):
        out.extend((first, *rest) for rest in compositions(N - first, K - 1))
    return out


def multinomial_row(p: np.ndarray, counts: np.ndarray, N: int) -> np.ndarray:
    """``Multinomial(N, p)`` probabilities of each row of ``counts``."""
    logpmf = gammaln(N + 1) - gammaln(counts + 1).sum(axis=1) + xlogy(counts, p).sum(axis=1)
    return np.exp(logpmf)


@dataclass(frozen=True)
class OracleChain:
    N: int
    K: int
    a: float
    mu0: ProbVector
    states: tuple[tuple[int, ...], ...]
    P: np.ndarray
    absorbing: tuple[int, ...]

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def frequencies(self) -> np.ndarray:
        """``counts / N`` for every state, shape ``(S, K)``."""
        return np.asarray(self.states, dtype=float) / self.N

    @cached_property
    def transient(self) -> tuple[int, ...]:
        absorbing = set(self.absorbing)
        return tuple(i for i in range(len(self.states)) if i not in absorbing)

    def sampling_law(self, mu: ProbVector | np.ndarray) -> np.ndarray:
        w = mu.weights if isinstance(mu, ProbVector) else np.asarray(mu, dtype=float)
        return self.a * self.mu0.weights + (1.0 - self.a) * w

    def step_law(self, mu: ProbVector | np.ndarray) -> np.ndarray:
        """Law of the next composition when the current measure is ``mu``.

        ``mu`` need not lie on the lattice; for a lattice point this equals
        the corresponding row of ``P``.
        """
        return multinomial_row(self.sampling_law(mu), np.asarray(self.states, dtype=float), self.N)

    def state_of(self, mu: ProbVector | np.ndarray) -> int | None:
        """Index of the lattice state equal to ``mu``, or ``None`` if off-lattice."""
        w = mu.weights if isinstance(mu, ProbVector) else np.asarray(mu, dtype=float)
        counts = w * self.N
        rounded = np.rint(counts)
        if np.max(np.abs(counts - rounded)) > 1e-9:
            return None
        return self.index.get(tuple(int(x) for x in rounded))


def build_chain(N: int, s: Support | int, a: float, mu0: ProbVector,
                max_states: int = MAX_COMPOSITIONS, max_dense_states: int = MAX_DENSE_STATES) -> OracleChain:
    """Exact transition matrix of the ``b = 0`` count chain."""
    K = s.size if isinstance(s, Support) else int(s)
    if not _is_positive_int(N):
        raise InvalidArgumentError(f"N must be a positive integer, got {N!r}")
    if not 0.0 <= a <= 1.0:
        raise InvalidArgumentError(f"a must lie in [0, 1], got {a!r}")
    if mu0.size != K:
        raise InvalidArgumentError(f"mu0 has {mu0.size} atoms, support has {K}")
    n_states = composition_count(N, K)
    if n_states > max_states:
        raise ResourceLimitError(f"{n_states} compositions exceed the guard of {max_states}")
    if n_states > max_dense_states:
        raise ResourceLimitError(f"{n_states} states exceed the dense-matrix limit of {max_dense_states}")

    states = tuple(compositions(N, K))
    counts = np.asarray(states, dtype=float)
    base = a * mu0.weights
    P = np.empty((n_states, n_states))
    for i in range(n_states):
        P[i] = multinomial_row(base + (1.0 - a) * counts[i] / N, counts, N)
    rows = P.sum(axis=1)
    if np.max(np.abs(rows - 1.0)) > ROW_SUM_TOL:
        raise NumericalError(f"transition rows sum to within {np.max(np.abs(rows - 1.0)):.3e} of 1")
    absorbing = tuple(i for i in range(n_states) if P[i, i] == 1.0)
    return OracleChain(N, K, float(a), mu0, states, P, absorbing)


def _is_positive_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool) and x >= 1


def _solve(A: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    try:
        x = linalg.solve(A, b)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"{what}: singular system ({exc}); absorption may be unreachable") from None
    resid = float(np.max(np.abs(A @ x - b))) if x.size else 0.0
    if not np.isfinite(resid) or resid > RESIDUAL_TOL:
        raise NumericalError(f"{what}: residual {resid:.3e} exceeds {RESIDUAL_TOL:g}")
    return x


@dataclass(frozen=True)
class Absorption:
    """Absorption probabilities of each transient state into each absorbing state."""

    chain: OracleChain
    probs: np.ndarray  # (len(transient), len(absorbing))

    @property
    def transient(self) -> tuple[int, ...]:
        return self.chain.transient

    @property
    def absorbing(self) -> tuple[int, ...]:
        return self.chain.absorbing

    @cached_property
    def full(self) -> np.ndarray:
        """Absorption probabilities from every state, shape ``(S, len(absorbing))``."""
        out = np.zeros((len(self.chain.states), len(self.absorbing)))
        out[list(self.transient)] = self.probs
        for j, i in enumerate(self.absorbing):
            out[i, j] = 1.0
        return out

    @cached_property
    def absorbing_atoms(self) -> np.ndarray:
        return np.array([int(np.argmax(self.chain.states[i])) for i in self.absorbing])

    def by_atom(self, state: int) -> np.ndarray:
        """Fixation law over atoms starting from ``state``."""
        out = np.zeros(self.chain.K)
        np.add.at(out, self.absorbing_atoms, self.full[state])
        return out


def _require_absorbing(chain: OracleChain) -> None:
    if not chain.absorbing:
        raise PreconditionError("chain has no absorbing states (requires a = 0)")


def absorption_probs(chain: OracleChain) -> Absorption:
    """Solve ``(I - Q) B = R`` for the absorption probabilities."""
    _require_absorbing(chain)
    T, A = list(chain.transient), list(chain.absorbing)
    if not T:
        return Absorption(chain, np.zeros((0, len(A))))
    Q = chain.P[np.ix_(T, T)]
    R = chain.P[np.ix_(T, A)]
    B = _solve(np.eye(len(T)) - Q, R, "absorption probabilities")
    return Absorption(chain, B)


def absorption_times(chain: OracleChain) -> np.ndarray:
    """Expected generations to absorption from every state (0 on absorbing states)."""
    _require_absorbing(chain)
    T = list(chain.transient)
    out = np.zeros(len(chain.states))
    if T:
        Q = chain.P[np.ix_(T, T)]
        out[T] = _solve(np.eye(len(T)) - Q, np.ones(len(T)), "absorption times")
    return out


def fixation_law(chain: OracleChain, mu: ProbVector) -> np.ndarray:
    """Per-atom fixation probabilities starting from an arbitrary measure ``mu``."""
    absorption = absorption_probs(chain)
    idx = chain.state_of(mu)
    if idx is not None:
        return absorption.by_atom(idx)
    law = chain.step_law(mu) @ absorption.full
    out = np.zeros(chain.K)
    np.add.at(out, absorption.absorbing_atoms, law)
    return out


def expected_absorption_time(chain: OracleChain, mu: ProbVector) -> float:
    """Expected absorption time from an arbitrary start measure ``mu``."""
    times = absorption_times(chain)
    idx = chain.state_of(mu)
    if idx is not None:
        return float(times[idx])
    if chain.a == 0 and mu.is_dirac:
        return 0.0
    return 1.0 + float(chain.step_law(mu) @ times)


def state_laws(chain: OracleChain, mu: ProbVector, horizon: int) -> np.ndarray:
    """Laws of the composition at generations ``1..horizon``, shape ``(horizon, S)``."""
    laws = np.empty((horizon, len(chain.states)))
    law = chain.step_law(mu)
    for n in range(horizon):
        laws[n] = law
        law = law @ chain.P
    return laws


def absorption_cdf(chain: OracleChain, mu: ProbVector, horizon: int) -> np.ndarray:
    """``P(absorbed by generation n)`` for ``n = 0..horizon``."""
    _require_absorbing(chain)
    out = np.empty(horizon + 1)
    out[0] = 1.0 if (chain.a == 0 and mu.is_dirac) else 0.0
    out[1:] = state_laws(chain, mu, horizon)[:, list(chain.absorbing)].sum(axis=1)
    return out


def moment_trajectory(chain: OracleChain, mu: ProbVector, f: TestFunction, horizon: int,
                      power: int = 1) -> np.ndarray:
    """``E[mu_n(f)^power]`` for ``n = 0..horizon`` by propagating state laws."""
    values = (chain.frequencies @ f.values) ** power
    out = np.empty(horizon + 1)
    out[0] = float(np.dot(mu.weights, f.values)) ** power
    if horizon:
        out[1:] = state_laws(chain, mu, horizon) @ values
    return out


@dataclass(frozen=True)
class StationaryResult:
    chain: OracleChain
    extreme_points: tuple[np.ndarray, ...]

    @property
    def unique(self) -> bool:
        return len(self.extreme_points) == 1

    @property
    def pi(self) -> np.ndarray | None:
        return self.extreme_points[0] if self.unique else None

    @property
    def barycenters(self) -> tuple[np.ndarray, ...]:
        """Mean of ``counts / N`` under each extreme stationary law."""
        return tuple(p @ self.chain.frequencies for p in self.extreme_points)

    @property
    def barycenter(self) -> np.ndarray | None:
        return self.barycenters[0] if self.unique else None

    def variance(self, f: TestFunction) -> float:
        """Stationary variance of ``mu(f)`` under the unique stationary law."""
        if not self.unique:
            raise PreconditionError("stationary law is not unique")
        v = self.chain.frequencies @ f.values
        m = float(self.pi @ v)
        return float(self.pi @ v**2) - m * m


def stationary_distribution(chain: OracleChain) -> StationaryResult:
    """Stationary laws of the chain, one per closed communicating class.

    The chain is reducible when several closed classes exist; each class then
    carries one extreme stationary law and a warning is issued.
    """
    S = len(chain.states)
    n_comp, labels = connected_components(chain.P > 0, directed=True, connection="strong")
    extremes = []
    for comp in range(n_comp):
        members = np.flatnonzero(labels == comp)
        others = np.flatnonzero(labels != comp)
        if others.size and chain.P[np.ix_(members, others)].max() > 0:
            continue  # transient class
        Pc = chain.P[np.ix_(members, members)]
        m = members.size
        A = Pc.T - np.eye(m)
        A[-1] = 1.0
        rhs = np.zeros(m)
        rhs[-1] = 1.0
        pi_c = _solve(A, rhs, "stationary distribution")
        pi_c = np.clip(pi_c, 0.0, None)
        pi_c /= pi_c.sum()
        pi = np.zeros(S)
        pi[members] = pi_c
        if np.max(np.abs(pi @ chain.P - pi)) > RESIDUAL_TOL:
            raise NumericalError("stationary solve failed the balance check")
        extremes.append(pi)
    if len(extremes) > 1:
        warnings.warn(
            f"chain is reducible: {len(extremes)} closed classes, stationary law not unique",
            RuntimeWarning,
            stacklevel=2,
        )
    return StationaryResult(chain, tuple(extremes))


def exact_mean_trajectory(cfg: ExperimentConfig, f: TestFunction, horizon: int) -> list[float]:
    """``E[mu_n(f)]`` for ``n = 0..horizon``.

    Uses powers of the exact chain when ``b = 0`` and the chain fits the size
    guards; otherwise iterates the mean recursion on full weight vectors,
    using that ``E[theta_n] = theta_0``.
    """
    if cfg.b == 0:
        try:
            chain = build_chain(cfg.N, cfg.support, cfg.a, cfg.mu0)
        except ResourceLimitError:
            pass
        else:
            return moment_trajectory(chain, cfg.mu_start, f, horizon).tolist()
    m = cfg.mu_start.weights.copy()
    out = [float(m @ f.values)]
    for _ in range(horizon):
        m = cfg.a * cfg.mu0.weights + (1.0 - cfg.a) * (cfg.b * cfg.theta0.weights + cfg.c * m)
        out.append(float(m @ f.values))
    return out

"""The recursive training kernel.

Each generation draws ``N`` i.i.d. samples.  A sample comes from the external
source ``mu0`` with probability ``a``, otherwise from the fitted categorical
model ``theta`` (probability ``b``) or from the current empirical measure
``mu`` (probability ``c``).  The next empirical measure is the frequency vector
of the batch, and ``theta`` is refitted to the parametric-tagged sub-batch.

Randomness is consumed as two uniforms per sample and generation, ``(tag,
atom)``, from a per-trajectory Philox stream.  :func:`advance` is the
vectorised kernel; :func:`step` applies it to a single state and the ensemble
engine applies it to whole blocks of trajectories, so both paths produce
bit-identical states.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .errors import InvalidArgumentError, PreconditionError
from .measure import ProbVector, empirical_from_samples, mix, support_stats

FRESH, PARAMETRIC, EMPIRICAL = 0, 1, 2
TAG_NAMES = ("fresh", "parametric", "empirical")

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def stream_key(master_seed: int, trajectory_index: int) -> int:
    """64-bit Philox key for trajectory ``trajectory_index`` under ``master_seed``."""
    return splitmix64((master_seed & _MASK64) ^ splitmix64(trajectory_index & _MASK64))


class RngStream:
    """Deterministic uniform stream identified by ``(master_seed, index)``."""

    def __init__(self, master_seed: int, index: int = 0):
        self.master_seed = master_seed
        self.index = index
        self.key = stream_key(master_seed, index)
        self.generator = np.random.Generator(np.random.Philox(key=self.key))

    def uniforms(self, shape) -> np.ndarray:
        return self.generator.random(shape)


@dataclass(frozen=True)
class GenerationState:
    n: int
    mu: ProbVector
    theta: ProbVector


@dataclass(frozen=True)
class BatchRecord:
    samples: tuple[int, ...]
    source_tags: tuple[str, ...]
    nu: ProbVector


# -- array kernel ---------------------------------------------------------------

def inverse_cdf_table(weights: np.ndarray) -> np.ndarray:
    """Thresholds for inverse-CDF sampling, shape ``(..., K-1)``.

    An atom index is the number of thresholds ``<= u``.  Thresholds at or past
    the last positive weight are pushed above 1 so rounding in the cumulative
    sum can never select a zero-weight trailing atom.
    """
    w = np.asarray(weights, dtype=float)
    K = w.shape[-1]
    cdf = np.cumsum(w, axis=-1)
    last = K - 1 - np.argmax(w[..., ::-1] > 0, axis=-1)
    cdf = np.where(np.arange(K) >= np.expand_dims(last, -1), 2.0, cdf)
    return cdf[..., : K - 1]


def draw_atoms(table: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Atoms for uniforms ``u`` of shape ``(R, N)`` given thresholds ``(R, K-1)`` or ``(K-1,)``."""
    if table.ndim == 1:
        table = table[None, :]
    return (table[:, None, :] <= u[..., None]).sum(axis=-1)


def source_thresholds(a: float, b: float, c: float) -> tuple[float, float]:
    # c == 0 must never yield an empirical tag, even if a + (1-a)*b rounds below 1
    return a, (a + (1.0 - a) * b if c > 0 else 2.0)


def advance(mu, theta, u, a, b, c, mu0_table):
    """One generation for ``R`` trajectories at once.

    ``mu`` and ``theta`` have shape ``(R, K)``; ``u`` has shape ``(R, N, 2)``.
    Returns ``(mu_next, theta_next, counts, atoms, tags)``.
    """
    R, K = mu.shape
    N = u.shape[1]
    t_fresh, t_param = source_thresholds(a, b, c)
    tag_u, atom_u = u[..., 0], u[..., 1]
    tags = np.where(tag_u < t_fresh, FRESH, np.where(tag_u < t_param, PARAMETRIC, EMPIRICAL))

    atoms = np.zeros((R, N), dtype=np.int64)
    if c > 0:
        atoms = np.where(tags == EMPIRICAL, draw_atoms(inverse_cdf_table(mu), atom_u), atoms)
    if b > 0:
        atoms = np.where(tags == PARAMETRIC, draw_atoms(inverse_cdf_table(theta), atom_u), atoms)
    if a > 0:
        atoms = np.where(tags == FRESH, draw_atoms(mu0_table, atom_u), atoms)

    onehot = atoms[..., None] == np.arange(K)
    counts = onehot.sum(axis=1)
    mu_next = counts / N
    pcounts = (onehot & (tags == PARAMETRIC)[..., None]).sum(axis=1)
    m = pcounts.sum(axis=1, keepdims=True)
    theta_next = np.where(m > 0, pcounts / np.maximum(m, 1), theta)
    return mu_next, theta_next, counts, atoms, tags


def generative_mixture(mu, theta, b: float, c: float) -> np.ndarray:
    return b * theta + c * mu


def absorbed_mask(mu, theta, a: float, b: float, c: float) -> np.ndarray:
    if a > 0:
        return np.zeros(np.shape(mu)[:-1], dtype=bool)
    return np.count_nonzero(generative_mixture(mu, theta, b, c) > 0, axis=-1) == 1


# -- single-state API -----------------------------------------------------------

def initial_state(cfg: ExperimentConfig) -> GenerationState:
    return GenerationState(0, cfg.mu_start, cfg.theta0)


def effective_sampling_measure(state: GenerationState, cfg: ExperimentConfig) -> ProbVector:
    """Per-sample law ``a*mu0 + (1-a)*(b*theta + c*mu)`` of the next batch."""
    return mix(cfg.a, cfg.mu0, mix(cfg.b, state.theta, state.mu))


def is_absorbed(state: GenerationState, cfg: ExperimentConfig) -> bool:
    """True iff ``a = 0`` and every future sample is the same atom almost surely."""
    return cfg.a == 0 and effective_sampling_measure(state, cfg).is_dirac


def fit_theta(parametric_samples, theta_prev: ProbVector) -> ProbVector:
    """Frequency vector of the parametric sub-batch, or ``theta_prev`` if it is empty.

    Each parametric sample is a draw from ``theta_prev``, so the expected
    return value is ``theta_prev``.
    """
    if len(parametric_samples) == 0:
        return theta_prev
    return empirical_from_samples(np.asarray(parametric_samples, dtype=np.int64), theta_prev.size)


def step(state: GenerationState, cfg: ExperimentConfig, rng: RngStream) -> tuple[GenerationState, BatchRecord]:
    if state.n >= cfg.horizon:
        raise PreconditionError(f"generation {state.n} is already at the horizon {cfg.horizon}")
    if state.mu.size != cfg.K or state.theta.size != cfg.K:
        raise InvalidArgumentError("state does not live on the config support")
    u = rng.uniforms((1, cfg.N, 2))
    mu_next, theta_next, _, atoms, tags = advance(
        state.mu.weights[None, :], state.theta.weights[None, :], u,
        cfg.a, cfg.b, cfg.c, inverse_cdf_table(cfg.mu0.weights),
    )
    nxt = GenerationState(state.n + 1, ProbVector(mu_next[0]), ProbVector(theta_next[0]))
    batch = BatchRecord(
        samples=tuple(atoms[0].tolist()),
        source_tags=tuple(TAG_NAMES[t] for t in tags[0]),
        nu=mix(cfg.b, state.theta, state.mu),
    )
    return nxt, batch


@dataclass(frozen=True)
class TrajectoryRow:
    n: int
    mu: ProbVector
    theta: ProbVector
    support_size: int
    collapsed: bool

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "mu": self.mu.tolist(),
            "theta": self.theta.tolist(),
            "support_size": self.support_size,
            "collapsed": self.collapsed,
        }


@dataclass
class TrajectoryRecord:
    config_digest: str
    seed: int
    trajectory_index: int
    stream_key: int
    rows: list[TrajectoryRow] = field(default_factory=list)
    collapse_time: int | None = None

    @property
    def final(self) -> TrajectoryRow:
        return self.rows[-1]


def _row(state: GenerationState, cfg: ExperimentConfig) -> TrajectoryRow:
    eff = effective_sampling_measure(state, cfg)
    return TrajectoryRow(state.n, state.mu, state.theta, support_stats(eff)[0], is_absorbed(state, cfg))


def run_trajectory(cfg: ExperimentConfig, trajectory_index: int) -> TrajectoryRecord:
    """Iterate :func:`step` from the initial state until absorption or the horizon."""
    rng = RngStream(cfg.master_seed, trajectory_index)
    record = TrajectoryRecord(cfg.digest(), cfg.master_seed, trajectory_index, rng.key)
    state = initial_state(cfg)
    record.rows.append(_row(state, cfg))
    while not record.rows[-1].collapsed and state.n < cfg.horizon:
        state, _ = step(state, cfg, rng)
        record.rows.append(_row(state, cfg))
    if record.rows[-1].collapsed:
        record.collapse_time = record.rows[-1].n
    return record

"""Seeded Monte Carlo ensembles of trajectories.

Trajectory ``i`` always uses ``RngStream(master_seed, i)``.  Trajectories are
simulated in fixed-size chunks, vectorised across the chunk, and every
per-generation statistic is accumulated as an integer histogram of atom
counts.  Aggregation is therefore exact and independent of chunk scheduling
and of the number of worker processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .config import ExperimentConfig
from .dynamics import RngStream, absorbed_mask, advance, generative_mixture, inverse_cdf_table
from .errors import InvalidArgumentError

CHUNK_SIZE = 4096
# Upper bound on buffered uniforms per chunk (floats).
_BUFFER_FLOATS = 1 << 22


@dataclass
class ChunkResult:
    start: int
    value_hist: np.ndarray  # (horizon, K, N+1): trajectories with count v of atom k at generation n+1
    collapse_times: np.ndarray  # -1 when not absorbed by the horizon
    fixation: np.ndarray  # absorbing atom, -1 when not absorbed


def simulate_chunk(cfg: ExperimentConfig, start: int, count: int) -> ChunkResult:
    """Simulate trajectories ``start .. start+count-1`` to the horizon.

    A trajectory found absorbed at generation ``n`` is frozen at
    ``(delta_x, theta_n)``, which is exactly the state the kernel would
    produce at every later generation.
    """
    K, N, H = cfg.K, cfg.N, cfg.horizon
    a, b, c = cfg.a, cfg.b, cfg.c
    mu0_table = inverse_cdf_table(cfg.mu0.weights)
    gens = [RngStream(cfg.master_seed, start + i).generator for i in range(count)]

    mu = np.tile(cfg.mu_start.weights, (count, 1))
    theta = np.tile(cfg.theta0.weights, (count, 1))
    counts = np.zeros((count, K), dtype=np.int64)
    hist = np.zeros((H, K, N + 1), dtype=np.int64)
    collapse_times = np.full(count, -1, dtype=np.int64)
    fixation = np.full(count, -1, dtype=np.int64)

    def absorb(rows: np.ndarray, n: int) -> None:
        atoms = np.argmax(generative_mixture(mu[rows], theta[rows], b, c), axis=1)
        collapse_times[rows] = n
        fixation[rows] = atoms
        counts[rows] = 0
        counts[rows, atoms] = N
        mu[rows] = 0.0
        mu[rows, atoms] = 1.0

    active = np.ones(count, dtype=bool)
    newly = absorbed_mask(mu, theta, a, b, c)
    if newly.any():
        absorb(np.flatnonzero(newly), 0)
        active &= ~newly

    block = max(1, min(32, _BUFFER_FLOATS // max(1, count * N * 2)))
    buf = np.empty((count, block, N, 2))
    for t in range(H):
        rows = np.flatnonzero(active)
        if rows.size:
            if t % block == 0:
                for i in rows:
                    buf[i] = gens[i].random((block, N, 2))
            mu_n, theta_n, counts_n, _, _ = advance(
                mu[rows], theta[rows], buf[rows, t % block], a, b, c, mu0_table
            )
            mu[rows], theta[rows], counts[rows] = mu_n, theta_n, counts_n
        for k in range(K):
            hist[t, k] += np.bincount(counts[:, k], minlength=N + 1)
        if rows.size:
            newly = absorbed_mask(mu[rows], theta[rows], a, b, c)
            if newly.any():
                done = rows[newly]
                absorb(done, t + 1)
                active[done] = False
    return ChunkResult(start, hist, collapse_times, fixation)


def _simulate_chunk_args(args) -> ChunkResult:
    return simulate_chunk(*args)


class EnsembleStats:
    """Aggregated statistics of ``n_runs`` trajectories of one config.

    Per generation ``n = 0..horizon`` and atom ``i`` (the indicator test
    functions), :attr:`mean`, :attr:`second_moment` and :attr:`variance` of
    ``mu_n(f_i)``; collapse-time histogram and per-atom fixation counts.
    """

    def __init__(self, cfg: ExperimentConfig, value_hist: np.ndarray,
                 collapse_times: np.ndarray, fixation: np.ndarray):
        self.config = cfg
        self.value_hist = value_hist
        self.collapse_times = collapse_times
        self.fixation = fixation
        self.n_runs = int(collapse_times.size)
        self.horizon = cfg.horizon
        self.N = cfg.N
        self.K = cfg.K

    def _moment_sums(self):
        levels = np.arange(self.N + 1)
        s1 = (self.value_hist * levels).sum(axis=-1)
        s2 = (self.value_hist * levels**2).sum(axis=-1)
        return s1, s2

    @cached_property
    def mean(self) -> np.ndarray:
        # generation 0 is the common start state, which need not lie on the lattice
        s1, _ = self._moment_sums()
        out = np.empty((self.horizon + 1, self.K))
        out[0] = self.config.mu_start.weights
        out[1:] = s1 / (self.N * self.n_runs)
        return out

    @cached_property
    def second_moment(self) -> np.ndarray:
        _, s2 = self._moment_sums()
        out = np.empty((self.horizon + 1, self.K))
        out[0] = self.config.mu_start.weights ** 2
        out[1:] = s2 / (self.N**2 * self.n_runs)
        return out

    @cached_property
    def variance(self) -> np.ndarray:
        """Population variance, from exact integer sums."""
        s1, s2 = self._moment_sums()
        R, N = self.n_runs, self.N
        out = np.zeros((self.horizon + 1, self.K))
        for n in range(self.horizon):
            for k in range(self.K):
                num = R * int(s2[n, k]) - int(s1[n, k]) ** 2
                out[n + 1, k] = num / (N * N * R * R)
        return out

    @cached_property
    def mean_se(self) -> np.ndarray:
        if self.n_runs < 2:
            return np.zeros_like(self.variance)
        return np.sqrt(self.variance / (self.n_runs - 1))

    @cached_property
    def second_moment_se(self) -> np.ndarray:
        """Standard error of the second-moment estimate, per generation and atom."""
        out = np.zeros((self.horizon + 1, self.K))
        if self.n_runs < 2:
            return out
        x2 = (np.arange(self.N + 1) / self.N) ** 2
        for n in range(self.horizon):
            p = self.value_hist[n] / self.n_runs
            m2 = (p * x2).sum(axis=-1)
            m4 = (p * x2**2).sum(axis=-1)
            out[n + 1] = np.sqrt(np.maximum(m4 - m2**2, 0.0) / (self.n_runs - 1))
        return out

    def value_distribution(self, generation: int, atom: int) -> tuple[np.ndarray, np.ndarray]:
        """Support points and probabilities of ``mu_n(f_atom)`` across the ensemble."""
        if not 0 <= generation <= self.horizon:
            raise InvalidArgumentError(f"generation {generation} outside [0, {self.horizon}]")
        if generation == 0:
            return np.array([self.config.mu_start.weights[atom]]), np.array([1.0])
        levels = np.arange(self.N + 1) / self.N
        return levels, self.value_hist[generation - 1, atom] / self.n_runs

    @cached_property
    def collapse_time_hist(self) -> dict[int | None, int]:
        times, freq = np.unique(self.collapse_times, return_counts=True)
        hist = {(None if t < 0 else int(t)): int(f) for t, f in zip(times, freq)}
        return dict(sorted(hist.items(), key=lambda kv: (kv[0] is None, kv[0] or 0)))

    @cached_property
    def collapsed_fraction(self) -> np.ndarray:
        done = self.collapse_times[self.collapse_times >= 0]
        per_gen = np.bincount(done, minlength=self.horizon + 1)
        return np.cumsum(per_gen) / self.n_runs

    @cached_property
    def fixation_counts(self) -> np.ndarray:
        return np.bincount(self.fixation[self.fixation >= 0], minlength=self.K)

    @property
    def n_collapsed(self) -> int:
        return int((self.collapse_times >= 0).sum())

    def mean_collapse_time(self) -> tuple[float, float]:
        """Mean and standard error of the collapse time over collapsed runs."""
        done = self.collapse_times[self.collapse_times >= 0].astype(float)
        if done.size == 0:
            return math.nan, math.nan
        se = float(done.std(ddof=1) / math.sqrt(done.size)) if done.size > 1 else 0.0
        return float(done.mean()), se

    def summary(self) -> dict:
        mct, mct_se = self.mean_collapse_time()
        return {
            "config_digest": self.config.digest(),
            "master_seed": self.config.master_seed,
            "n_runs": self.n_runs,
            "horizon": self.horizon,
            "N": self.N,
            "K": self.K,
            "mean": self.mean.tolist(),
            "variance": self.variance.tolist(),
            "second_moment": self.second_moment.tolist(),
            "collapsed_fraction": self.collapsed_fraction.tolist(),
            "collapse_time_hist": [
                {"generation": t, "count": c} for t, c in self.collapse_time_hist.items()
            ],
            "mean_collapse_time": None if math.isnan(mct) else mct,
            "mean_collapse_time_se": None if math.isnan(mct_se) else mct_se,
            "fixation_counts": self.fixation_counts.tolist(),
            "n_collapsed": self.n_collapsed,
        }


def run_ensemble(cfg: ExperimentConfig, n_runs: int, parallelism: int = 1,
                 chunk_size: int = CHUNK_SIZE) -> EnsembleStats:
    """Run trajectories ``0 .. n_runs-1`` and aggregate them.

    The result does not depend on ``parallelism`` or ``chunk_size``.
    """
    if n_runs < 1:
        raise InvalidArgumentError(f"n_runs must be >= 1, got {n_runs}")
    if parallelism < 1:
        raise InvalidArgumentError(f"parallelism must be >= 1, got {parallelism}")
    jobs = [(cfg, s, min(chunk_size, n_runs - s)) for s in range(0, n_runs, chunk_size)]
    if parallelism == 1 or len(jobs) == 1:
        results = [simulate_chunk(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_simulate_chunk_args, jobs))
    hist = np.zeros((cfg.horizon, cfg.K, cfg.N + 1), dtype=np.int64)
    for r in results:
        hist += r.value_hist
    times = np.concatenate([r.collapse_times for r in results])
    fix = np.concatenate([r.fixation for r in results])
    return EnsembleStats(cfg, hist, times, fix)

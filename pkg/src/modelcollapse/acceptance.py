"""End-to-end acceptance criteria, grouped into named suites.

Each criterion runs at a fixed seed and fixed tolerance and returns a
:class:`CriterionResult` carrying the measured values.  ``modelcollapse
verify --suite NAME`` runs a suite and writes a pass/fail report.
"""
from __future__ import annotations

import json
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats as sps

from . import diagnostics, oracle
from .config import ExperimentConfig, from_mapping
from .dynamics import GenerationState, RngStream, advance, inverse_cdf_table
from .ensemble import run_ensemble
from .measure import ProbVector, TestFunction, make_cdc


@dataclass
class CriterionResult:
    id: str
    title: str
    passed: bool
    measured: dict = field(default_factory=dict)
    tolerance: str = ""
    seed: int | None = None
    runtime: float = 0.0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.id} {self.title} ({self.runtime:.2f}s)"
        return text + (f": {self.detail}" if self.detail else "")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "passed": self.passed,
            "measured": self.measured,
            "tolerance": self.tolerance,
            "seed": self.seed,
            "runtime_s": self.runtime,
            "detail": self.detail,
        }


class _Checks:
    """Collects named boolean checks and explains the first failures."""

    def __init__(self):
        self.failed: list[str] = []

    def require(self, ok: bool, message: str) -> None:
        if not ok:
            self.failed.append(message)

    @property
    def ok(self) -> bool:
        return not self.failed


def _collapse_config(seed: int, horizon: int = 64) -> ExperimentConfig:
    return from_mapping({"a": 0.0, "b": 0.0, "c": 1.0, "N": 2, "horizon": horizon,
                         "mu0": [0.5, 0.5], "master_seed": seed})


def c1_collapse_time() -> tuple[_Checks, dict, str, int]:
    seed = 1001
    cfg = _collapse_config(seed)
    chain = oracle.build_chain(2, 2, 0.0, cfg.mu0)
    t_exact = oracle.expected_absorption_time(chain, cfg.mu_start)
    stats = run_ensemble(cfg, 100_000)
    mean, se = stats.mean_collapse_time()
    checks = _Checks()
    checks.require(abs(t_exact - 2.0) <= 1e-12, f"oracle time {t_exact!r} != 2")
    checks.require(stats.n_collapsed == stats.n_runs, f"{stats.n_runs - stats.n_collapsed} runs uncollapsed")
    checks.require(abs(mean - t_exact) <= 0.02, f"MC mean {mean:.5f} outside 2 +/- 0.02")
    return checks, {"oracle_time": t_exact, "mc_mean": mean, "mc_se": se}, "|mc - 2.0| <= 0.02", seed


def c2_fixation_law() -> tuple[_Checks, dict, str, int]:
    seed = 1002
    checks = _Checks()
    stats = run_ensemble(_collapse_config(seed), 100_000)
    frac0 = float(diagnostics.fixation_histogram(stats)[0])
    checks.require(abs(frac0 - 0.5) <= 0.006, f"K=2 fixation on atom 0 = {frac0:.5f}, not 0.5 +/- 0.006")

    start = ProbVector([0.2, 0.3, 0.5])
    cfg3 = from_mapping({"a": 0.0, "b": 0.0, "c": 1.0, "N": 5, "horizon": 400,
                         "mu0": start.tolist(), "master_seed": seed})
    law = oracle.fixation_law(oracle.build_chain(5, 3, 0.0, start), start)
    checks.require(np.max(np.abs(law - start.weights)) <= 1e-9, f"oracle fixation law {law} != start")
    stats3 = run_ensemble(cfg3, 100_000)
    checks.require(stats3.n_collapsed == stats3.n_runs, "K=3 runs uncollapsed at the horizon")
    freq = diagnostics.fixation_histogram(stats3)
    se = np.sqrt(law * (1 - law) / stats3.n_runs)
    checks.require(bool(np.all(np.abs(freq - law) <= 3 * se)), f"K=3 fixation {freq} vs oracle {law} (3 SE = {3 * se})")
    measured = {"k2_fraction_atom0": frac0, "k3_oracle": law, "k3_mc": freq, "k3_se": se}
    return checks, measured, "K=2: +/-0.006; K=3: 3 SE per atom; oracle = start to 1e-9", seed


def c3_collapse_cdf() -> tuple[_Checks, dict, str, int]:
    seed = 1003
    cfg = _collapse_config(seed)
    chain = oracle.build_chain(2, 2, 0.0, cfg.mu0)
    exact = oracle.absorption_cdf(chain, cfg.mu_start, 10)
    closed = 1.0 - 2.0 ** -np.arange(11)
    stats = run_ensemble(cfg, 100_000)
    mc = stats.collapsed_fraction[:11]
    checks = _Checks()
    checks.require(np.max(np.abs(exact - closed)) <= 1e-12, "oracle CDF differs from 1 - 2^-n")
    dev = np.abs(mc[1:] - closed[1:])
    checks.require(bool(np.all(dev <= 0.01)), f"max deviation {dev.max():.4f} > 0.01")
    return checks, {"mc": mc[1:], "exact": closed[1:], "max_dev": float(dev.max())}, "+/-0.01 for n=1..10", seed


def c4_stationary() -> tuple[_Checks, dict, str, int]:
    seed = 1004
    half = ProbVector([0.5, 0.5])
    f = TestFunction.indicator(0, 2)
    chain = oracle.build_chain(2, 2, 0.5, half)
    st = oracle.stationary_distribution(chain)
    checks = _Checks()
    checks.require(st.unique, "stationary law not unique")
    pi = st.pi
    checks.require(np.max(np.abs(pi - np.array([2, 3, 2]) / 7)) <= 1e-9, f"pi = {pi}")
    checks.require(np.max(np.abs(st.barycenter - 0.5)) <= 1e-9, f"barycenter = {st.barycenter}")
    var_exact = st.variance(f)
    checks.require(abs(var_exact - 1 / 7) <= 1e-9, f"stationary variance {var_exact}")

    burn, runs, gens = 20, 1000, 1000
    cfg = from_mapping({"a": 0.5, "b": 0.0, "c": 1.0, "N": 2, "horizon": burn + gens,
                        "mu0": [0.5, 0.5], "master_seed": seed})
    stats = run_ensemble(cfg, runs)
    window = slice(burn + 1, burn + gens + 1)
    mean = float(stats.mean[window, 0].mean())
    var = float(stats.second_moment[window, 0].mean()) - mean**2
    checks.require(abs(mean - 0.5) <= 0.005, f"time-average {mean:.5f} outside 0.5 +/- 0.005")
    checks.require(abs(var - 1 / 7) <= 0.005, f"stationary variance {var:.5f} outside 1/7 +/- 0.005")
    measured = {"pi": pi, "barycenter": st.barycenter, "variance_exact": var_exact,
                "mc_time_average": mean, "mc_variance": var, "generation_samples": runs * gens}
    return checks, measured, "oracle 1e-9; MC +/-0.005", seed


def c5_mean_recursion() -> tuple[_Checks, dict, str, int]:
    seed = 1005
    checks = _Checks()
    worst = 0.0
    base = {"N": 10, "horizon": 30, "mu0": [0.2, 0.3, 0.5], "master_seed": seed}
    variants = [
        {"b": 0.0, "c": 1.0, "mu_start": [0.6, 0.3, 0.1]},
        {"b": 0.5, "c": 0.5},
    ]
    for a in (0.1, 0.5, 0.9):
        for extra in variants:
            cfg = from_mapping({**base, "a": a, **extra})
            stats = run_ensemble(cfg, 20_000)
            for i, f in enumerate(make_cdc(cfg.support)):
                mu0_f = float(cfg.mu0.weights @ f.values)
                start_f = cfg.b * float(cfg.theta0.weights @ f.values) + cfg.c * float(cfg.mu_start.weights @ f.values)
                closed = np.array([mu0_f + (1 - a) ** n * (start_f - mu0_f) for n in range(31)])
                bary = np.array(diagnostics.barycenter_trajectory(cfg, f, 30))
                exact = np.array(oracle.exact_mean_trajectory(cfg, f, 30))
                checks.require(np.max(np.abs(bary - closed)) <= 1e-12, f"closed form mismatch a={a} f{i}")
                checks.require(np.max(np.abs(exact - closed)) <= 1e-9, f"oracle mean mismatch a={a} f{i}")
                dev = np.abs(stats.mean[:, i] - closed)
                se = stats.mean_se[:, i]
                tol = 4 * se + 1e-12
                if np.any(se > 0):
                    worst = max(worst, float(np.max(dev[se > 0] / se[se > 0])))
                checks.require(bool(np.all(dev <= tol)), f"a={a} b={cfg.b} f{i}: deviation beyond 4 SE")
    return checks, {"worst_deviation_in_se": worst}, "4 SE for every n and f_i", seed


def c6_martingale_suite() -> tuple[_Checks, dict, str, int]:
    seed = 1006
    rng = np.random.default_rng(seed)
    checks = _Checks()
    worst = 0.0
    K, N = 3, 10
    for j in range(20):
        regime = j % 3
        a = float(rng.uniform(0.05, 0.95)) if regime == 0 else 0.0
        b = float(rng.uniform(0.1, 0.9)) if regime in (0, 1) else 0.0
        mu0 = rng.dirichlet(np.ones(K))
        cfg = from_mapping({"a": a, "b": b, "c": 1.0 - b, "N": N, "horizon": 10,
                            "mu0": mu0.tolist(), "master_seed": seed})
        state = GenerationState(
            int(rng.integers(0, 10)), ProbVector.normalized(rng.dirichlet(np.ones(K))),
            ProbVector.normalized(rng.dirichlet(np.ones(K))),
        )
        branches = diagnostics.branch_one_step(state, cfg, 100_000, stream_index=j)
        for coordinate in ("mu", "theta"):
            for i, f in enumerate(make_cdc(K)):
                rep = diagnostics.residual_report(state, cfg, branches, f, coordinate, f_index=i)
                if rep.standard_error > 0:
                    worst = max(worst, abs(rep.mean_residual) / rep.standard_error)
                checks.require(rep.passed, f"state {j} {coordinate} f{i}: residual {rep.mean_residual:.2e} "
                                           f"vs 4 SE = {4 * rep.standard_error:.2e}")
    return checks, {"worst_residual_in_se": worst, "states": 20}, "|mean residual| <= 4 SE", seed


def c7_jensen_gap() -> tuple[_Checks, dict, str, int]:
    seed = 1007
    cfg = _collapse_config(seed, horizon=20)
    stats = run_ensemble(cfg, 100_000)
    gaps = [diagnostics.jensen_gap(stats, n, 0, np.square) for n in range(21)]
    checks = _Checks()
    checks.require(abs(gaps[1].gap - 0.125) <= 0.01, f"generation-1 gap {gaps[1].gap:.5f} not 1/8 +/- 0.01")
    for g in gaps:
        checks.require(g.gap >= -4 * g.standard_error, f"generation {g.generation}: gap {g.gap:.3e} < -4 SE")
    measured = {"gap_gen1": gaps[1].gap, "se_gen1": gaps[1].standard_error, "gaps": [g.gap for g in gaps]}
    return checks, measured, "gen 1: 1/8 +/- 0.01; all gens >= -4 SE", seed


def c8_one_step_law() -> tuple[_Checks, dict, str, int]:
    seed = 1008
    cfg = _collapse_config(seed)
    chain = oracle.build_chain(2, 2, 0.0, cfg.mu0)
    replicas = 100_000
    u = RngStream(seed, 0).uniforms((replicas, 2, 2))
    mu = np.tile([0.5, 0.5], (replicas, 1))
    _, _, counts, _, _ = advance(mu, mu, u, 0.0, 0.0, 1.0, inverse_cdf_table(cfg.mu0.weights))
    index = {s: i for i, s in enumerate(chain.states)}
    observed = np.bincount([index[tuple(c)] for c in counts.tolist()], minlength=3)
    expected = chain.P[index[(1, 1)]] * replicas
    stat, p_value = sps.chisquare(observed, expected)
    checks = _Checks()
    checks.require(np.allclose(chain.P[index[(1, 1)]], [0.25, 0.5, 0.25], atol=1e-15), "oracle row != [1/4,1/2,1/4]")
    checks.require(p_value >= 1e-4, f"chi-square p = {p_value:.2e} < 1e-4")
    return checks, {"observed": observed, "chi2": float(stat), "p_value": float(p_value)}, "p >= 1e-4", seed


def c9_no_collapse() -> tuple[_Checks, dict, str, int]:
    seed = 1009
    cfg = from_mapping({"a": 0.2, "b": 0.5, "c": 0.5, "N": 10, "horizon": 500,
                        "mu0": [0.5, 0.5], "master_seed": seed})
    stats = run_ensemble(cfg, 10_000)
    final = float(stats.mean[-1, 0])
    checks = _Checks()
    checks.require(stats.n_collapsed == 0, f"{stats.n_collapsed} trajectories reported absorption")
    checks.require(abs(final - 0.5) <= 0.02, f"horizon mean {final:.4f} outside 0.5 +/- 0.02")
    return checks, {"absorbed": stats.n_collapsed, "mean_at_horizon": final}, "0 absorbed; +/-0.02", seed


def c10_determinism() -> tuple[_Checks, dict, str, int]:
    from .cli import cmd_ensemble

    seed = 1010
    cfg_map = {"a": 0.1, "b": 0.3, "c": 0.7, "N": 5, "horizon": 40,
               "mu0": [0.2, 0.3, 0.5], "master_seed": seed}
    checks = _Checks()
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        cfg_path = root / "config.json"
        cfg_path.write_text(json.dumps(cfg_map))
        blobs = []
        for par in (1, 8):
            out = root / f"p{par}"
            code = cmd_ensemble(cfg_path, 20_000, out, parallelism=par)
            checks.require(code == 0, f"ensemble exited {code} at parallelism {par}")
            blobs.append((out / "summary.json").read_bytes() if code == 0 else b"")
        same = blobs[0] == blobs[1] and bool(blobs[0])
    checks.require(same, "summary.json differs between parallelism 1 and 8")
    return checks, {"identical": same, "bytes": len(blobs[0])}, "byte-identical", seed


@dataclass(frozen=True)
class Criterion:
    id: str
    title: str
    run: Callable[[], tuple[_Checks, dict, str, int]]
    runtime_limit: float | None = None


CRITERIA: dict[str, Criterion] = {
    c.id: c
    for c in [
        Criterion("C1", "collapse time matches the absorption oracle", c1_collapse_time, 10.0),
        Criterion("C2", "fixation law equals the initial frequencies", c2_fixation_law, 30.0),
        Criterion("C3", "collapse CDF 1 - 2^-n", c3_collapse_cdf, 10.0),
        Criterion("C4", "stationary barycenter equals the source", c4_stationary, 60.0),
        Criterion("C5", "mean recursion toward the source", c5_mean_recursion, 60.0),
        Criterion("C6", "one-step martingale residuals", c6_martingale_suite, 60.0),
        Criterion("C7", "Jensen gap of the square", c7_jensen_gap),
        Criterion("C8", "one-step law matches the oracle row", c8_one_step_law, 5.0),
        Criterion("C9", "no absorption under fresh-data injection", c9_no_collapse),
        Criterion("C10", "ensemble output independent of parallelism", c10_determinism),
    ]
}

SUITES: dict[str, tuple[str, ...]] = {
    "collapse-small": ("C1", "C2", "C3", "C7", "C8"),
    "degeneration": ("C4", "C5", "C9"),
    "martingale": ("C6",),
    "determinism": ("C10",),
    "all": tuple(CRITERIA),
}


def run_criterion(cid: str) -> CriterionResult:
    crit = CRITERIA[cid]
    t0 = time.perf_counter()
    try:
        checks, measured, tolerance, seed = crit.run()
    except Exception as exc:  # a crash is a failed criterion, reported with its cause
        return CriterionResult(cid, crit.title, False, detail=f"{type(exc).__name__}: {exc}",
                               runtime=time.perf_counter() - t0)
    elapsed = time.perf_counter() - t0
    if crit.runtime_limit is not None:
        tolerance = f"{tolerance}; runtime < {crit.runtime_limit:g} s"
        checks.require(elapsed < crit.runtime_limit, f"runtime {elapsed:.1f}s >= {crit.runtime_limit:g}s")
    return CriterionResult(cid, crit.title, checks.ok, measured, tolerance, seed, elapsed, "; ".join(checks.failed[:3]))


def run_suite(name: str) -> list[CriterionResult]:
    if name not in SUITES:
        raise KeyError(name)
    return [run_criterion(cid) for cid in SUITES[name]]

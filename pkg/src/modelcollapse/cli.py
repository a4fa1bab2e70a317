"""Command-line interface.

Subcommands: ``run``, ``ensemble``, ``oracle``, ``verify``, ``report``.
Exit codes: 0 success, 1 validation error, 2 resource limit, 3 criterion failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import acceptance, oracle
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import run_trajectory
from .ensemble import run_ensemble
from .errors import InvalidArgumentError, PreconditionError, ResourceLimitError
from .measure import make_cdc
from .outputs import now, write_csv, write_ensemble, write_json, write_manifest, write_trajectory

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RESOURCE = 2
EXIT_CRITERION = 3

log = logging.getLogger("modelcollapse")


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _prepare_out(out_dir: str | Path) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise InvalidArgumentError(f"output directory {out} is not writable: {exc.strerror}") from None
    return out


def _load(config_path, overrides: Sequence[str], seed: int | None) -> ExperimentConfig:
    cfg = load_config(config_path, overrides)
    if seed is not None:
        cfg = cfg.with_overrides(master_seed=seed)
    return cfg


def cmd_run(config_path, out_dir, overrides: Sequence[str] = (), runs: int = 1, seed: int | None = None) -> int:
    started = now()
    try:
        cfg = _load(config_path, overrides, seed)
        if runs < 1:
            raise InvalidArgumentError(f"--runs must be >= 1, got {runs}")
        out = _prepare_out(out_dir)
    except InvalidArgumentError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    files = [write_json(out / "config.json", cfg.to_mapping())]
    for i in range(runs):
        record = run_trajectory(cfg, i)
        files.append(write_trajectory(out, record))
        log.info("trajectory %d: %d rows, collapse_time=%s", i, len(record.rows), record.collapse_time)
    write_manifest(out, "run", cfg, started, files)
    return EXIT_OK


def cmd_ensemble(config_path, n_runs: int, out_dir, overrides: Sequence[str] = (),
                 parallelism: int = 1, seed: int | None = None) -> int:
    started = now()
    try:
        cfg = _load(config_path, overrides, seed)
        if n_runs < 1 or parallelism < 1:
            raise InvalidArgumentError("--runs and --parallelism must be >= 1")
        out = _prepare_out(out_dir)
    except InvalidArgumentError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    stats = run_ensemble(cfg, n_runs, parallelism=parallelism)
    files = [write_json(out / "config.json", cfg.to_mapping())]
    files += write_ensemble(out, stats)
    write_manifest(out, "ensemble", cfg, started, files, {"n_runs": n_runs, "parallelism": parallelism})
    return EXIT_OK


def cmd_oracle(config_path, out_dir, overrides: Sequence[str] = ()) -> int:
    started = now()
    try:
        cfg = _load(config_path, overrides, None)
        if cfg.b != 0:
            return _fail(EXIT_VALIDATION, "unsupported configuration: the exact oracle covers b = 0 only")
        out = _prepare_out(out_dir)
        chain = oracle.build_chain(cfg.N, cfg.support, cfg.a, cfg.mu0)
    except InvalidArgumentError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    except ResourceLimitError as exc:
        return _fail(EXIT_RESOURCE, str(exc))

    K = cfg.K
    files = [write_json(out / "config.json", cfg.to_mapping())]
    files.append(write_csv(
        out / "states.csv", ["state"] + [f"count_{i}" for i in range(K)],
        ([i, *s] for i, s in enumerate(chain.states)),
    ))
    files.append(write_csv(
        out / "transition.csv", ["state"] + [f"to_{j}" for j in range(len(chain.states))],
        ([i, *map(float, row)] for i, row in enumerate(chain.P)),
    ))
    summary: dict = {"N": cfg.N, "K": K, "a": cfg.a, "n_states": len(chain.states),
                     "start": cfg.mu_start.tolist()}
    if chain.absorbing:
        absorption = oracle.absorption_probs(chain)
        times = oracle.absorption_times(chain)
        files.append(write_csv(
            out / "absorption.csv",
            ["state"] + [f"count_{i}" for i in range(K)] + [f"fix_{i}" for i in range(K)] + ["expected_time"],
            ([i, *s, *map(float, absorption.by_atom(i)), float(times[i])] for i, s in enumerate(chain.states)),
        ))
        summary["fixation_from_start"] = oracle.fixation_law(chain, cfg.mu_start)
        summary["expected_time_from_start"] = oracle.expected_absorption_time(chain, cfg.mu_start)
    else:
        st = oracle.stationary_distribution(chain)
        files.append(write_csv(
            out / "stationary.csv", ["state"] + [f"pi_{j}" for j in range(len(st.extreme_points))],
            ([i, *(float(p[i]) for p in st.extreme_points)] for i in range(len(chain.states))),
        ))
        summary["stationary_unique"] = st.unique
        summary["stationary_barycenters"] = [b.tolist() for b in st.barycenters]
        if st.unique:
            summary["stationary_variance"] = [st.variance(f) for f in make_cdc(K)]
    files.append(write_json(out / "oracle.json", summary))
    write_manifest(out, "oracle", cfg, started, files)
    return EXIT_OK


def cmd_verify(suite_name: str, out_dir) -> int:
    started = now()
    if suite_name not in acceptance.SUITES:
        return _fail(EXIT_VALIDATION, f"unknown suite {suite_name!r}; choose from {sorted(acceptance.SUITES)}")
    try:
        out = _prepare_out(out_dir)
    except InvalidArgumentError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    results = acceptance.run_suite(suite_name)
    for r in results:
        print(r.line())
    report = {"suite": suite_name, "passed": all(r.passed for r in results),
              "criteria": [r.to_record() for r in results]}
    files = [write_json(out / "report.json", report)]
    (out / "report.txt").write_text("\n".join(r.line() for r in results) + "\n")
    files.append(out / "report.txt")
    write_manifest(out, "verify", None, started, files, {"suite": suite_name})
    failed = [r.id for r in results if not r.passed]
    if failed:
        return _fail(EXIT_CRITERION, f"criteria failed: {', '.join(failed)}")
    return EXIT_OK


def cmd_report(out_dir) -> int:
    out = Path(out_dir)
    if not out.is_dir():
        return _fail(EXIT_VALIDATION, f"{out} is not a directory")
    shown = False
    if (out / "summary.json").exists():
        s = json.loads((out / "summary.json").read_text())
        print(f"ensemble: {s['n_runs']} runs, horizon {s['horizon']}, N={s['N']}, K={s['K']}")
        print(f"  collapsed: {s['n_collapsed']} / {s['n_runs']}")
        if s["mean_collapse_time"] is not None:
            print(f"  mean collapse time: {s['mean_collapse_time']:.6g} +/- {s['mean_collapse_time_se']:.2g}")
        print(f"  fixation counts: {s['fixation_counts']}")
        print(f"  mean at horizon: {np.round(s['mean'][-1], 6).tolist()}")
        shown = True
    if (out / "oracle.json").exists():
        s = json.loads((out / "oracle.json").read_text())
        print(f"oracle: {s['n_states']} states, a={s['a']}")
        for key in ("expected_time_from_start", "fixation_from_start", "stationary_barycenters", "stationary_variance"):
            if key in s:
                print(f"  {key}: {s[key]}")
        shown = True
    for path in sorted(out.glob("trajectory_*.jsonl")):
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        collapsed = next((r["n"] for r in rows if r["collapsed"]), None)
        print(f"{path.name}: {len(rows)} rows, collapse at {collapsed}, final mu {rows[-1]['mu']}")
        shown = True
    if (out / "report.txt").exists():
        print((out / "report.txt").read_text(), end="")
        shown = True
    if not shown:
        return _fail(EXIT_VALIDATION, f"no recognised outputs in {out}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="modelcollapse", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, runs_default=None):
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--seed", type=int)
        if runs_default is not None:
            p.add_argument("--runs", type=int, default=runs_default)

    common(sub.add_parser("run", help="simulate individual trajectories"), runs_default=1)
    p = sub.add_parser("ensemble", help="simulate and aggregate many trajectories")
    common(p, runs_default=1000)
    p.add_argument("--parallelism", type=int, default=1)
    p = sub.add_parser("oracle", help="exact chain solves for b = 0 configs")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p = sub.add_parser("verify", help="run an acceptance suite")
    p.add_argument("--suite", required=True)
    p.add_argument("--out", required=True)
    p = sub.add_parser("report", help="summarise an output directory")
    p.add_argument("--out", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            return cmd_run(args.config, args.out, args.override, args.runs, args.seed)
        if args.command == "ensemble":
            return cmd_ensemble(args.config, args.runs, args.out, args.override, args.parallelism, args.seed)
        if args.command == "oracle":
            return cmd_oracle(args.config, args.out, args.override)
        if args.command == "verify":
            return cmd_verify(args.suite, args.out)
        return cmd_report(args.out)
    except ConfigError as exc:
        return _fail(EXIT_VALIDATION, str(exc))
    except ResourceLimitError as exc:
        return _fail(EXIT_RESOURCE, str(exc))
    except PreconditionError as exc:
        return _fail(EXIT_VALIDATION, str(exc))


if __name__ == "__main__":
    sys.exit(main())

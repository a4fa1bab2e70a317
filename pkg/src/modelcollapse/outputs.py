"""Structured output writers.

Every float is rendered with 17 significant digits so files are exactly
reproducible and round-trip to the same binary value.
"""
from __future__ import annotations

import csv
import json
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .dynamics import TrajectoryRecord
from .ensemble import EnsembleStats


def fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"non-finite value {x!r} cannot be written")
    return format(x, ".17g")


def to_json(obj: Any, indent: int | None = None, _level: int = 0) -> str:
    """JSON text with fixed 17-digit floats; ``indent`` applies to objects and top-level lists."""
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(bool(obj) if obj is not None else None)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        items = [f"{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        if indent is None or not items:
            return "{" + ", ".join(items) + "}"
        pad = " " * (indent * (_level + 1))
        return "{\n" + ",\n".join(pad + it for it in items) + "\n" + " " * (indent * _level) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(to_json(v, None, _level + 1) for v in obj) + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def write_json(path: Path, obj: Any) -> Path:
    path.write_text(to_json(obj, indent=2) + "\n")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir: Path, subcommand: str, cfg: ExperimentConfig | None, started: str,
                   files: Sequence[Path], extra: dict | None = None) -> Path:
    manifest = {
        "subcommand": subcommand,
        "artifact_version": __version__,
        "config_digest": cfg.digest() if cfg is not None else None,
        "master_seed": cfg.master_seed if cfg is not None else None,
        "seed_policy": "Philox key = splitmix64(master_seed XOR splitmix64(trajectory_index))",
        "started": started,
        "finished": now(),
        "outputs": sorted(p.name for p in files),
    }
    if extra:
        manifest.update(extra)
    return write_json(out_dir / "manifest.json", manifest)


def write_trajectory(out_dir: Path, record: TrajectoryRecord) -> Path:
    path = out_dir / f"trajectory_{record.trajectory_index:06d}.jsonl"
    with path.open("w") as fh:
        for row in record.rows:
            fh.write(to_json({"trajectory": record.trajectory_index, **row.to_record()}) + "\n")
    return path


def write_ensemble(out_dir: Path, stats: EnsembleStats) -> list[Path]:
    """Summary document plus moment, collapse-time and fixation tables."""
    files = [write_json(out_dir / "summary.json", stats.summary())]
    K = stats.K
    header = ["generation"] + [f"{q}_{i}" for q in ("mean", "variance", "second_moment") for i in range(K)]
    header.append("collapsed_fraction")
    rows = (
        [n, *stats.mean[n], *stats.variance[n], *stats.second_moment[n], stats.collapsed_fraction[n]]
        for n in range(stats.horizon + 1)
    )
    files.append(write_csv(out_dir / "moments.csv", header, rows))
    files.append(write_csv(
        out_dir / "collapse_times.csv", ["generation", "count"],
        (["none" if t is None else t, c] for t, c in stats.collapse_time_hist.items()),
    ))
    counts = stats.fixation_counts
    collapsed = max(stats.n_collapsed, 1)
    files.append(write_csv(
        out_dir / "fixation.csv", ["atom", "label", "count", "fraction"],
        ([i, stats.config.support.labels[i], int(counts[i]), counts[i] / collapsed] for i in range(K)),
    ))
    return files

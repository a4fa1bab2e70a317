"""Experiment configuration: validation, canonical form, and content digest.

Config files are flat JSON objects.  Recognised keys::

    a, b, c, N, K, horizon, master_seed, mu0, theta0, mu_start,
    coords, labels, source_choice

``theta0`` and ``mu_start`` default to ``mu0``; ``c`` defaults to ``1 - b``
and ``b`` to ``1 - c`` (``b = 0`` when both are missing).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .errors import InvalidArgumentError
from .measure import ProbVector, Support

MIX_TOL = 1e-12
SOURCE_CHOICES = ("per_sample",)
KNOWN_KEYS = frozenset(
    {"a", "b", "c", "N", "K", "horizon", "master_seed", "mu0", "theta0",
     "mu_start", "coords", "labels", "source_choice"}
)


class ConfigError(InvalidArgumentError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one recursive-training experiment.

    ``a`` is the per-sample probability of drawing from the external source
    ``mu0``; otherwise a sample comes from the fitted model ``theta`` with
    probability ``b`` or from the current empirical measure with probability
    ``c``.  ``N`` samples are drawn per generation.
    """

    a: float
    b: float
    c: float
    N: int
    support: Support
    mu0: ProbVector
    theta0: ProbVector
    mu_start: ProbVector
    horizon: int
    master_seed: int = 0
    source_choice: str = "per_sample"

    def __post_init__(self):
        for name in ("a", "b", "c"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not 0.0 <= value <= 1.0:
                raise ConfigError(name, f"must be a real number in [0, 1], got {value!r}")
            object.__setattr__(self, name, float(value))
        if abs(self.b + self.c - 1.0) > MIX_TOL:
            raise ConfigError("b+c", f"b + c = 1 is required, got b + c = {self.b + self.c!r}")
        if not _is_int(self.N) or self.N < 1:
            raise ConfigError("N", f"batch size must be a positive integer, got {self.N!r}")
        if not _is_int(self.horizon) or self.horizon < 1:
            raise ConfigError("horizon", f"must be a positive integer, got {self.horizon!r}")
        if not _is_int(self.master_seed) or not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed", f"must be an unsigned 64-bit integer, got {self.master_seed!r}")
        if self.source_choice not in SOURCE_CHOICES:
            raise ConfigError("source_choice", f"must be one of {SOURCE_CHOICES}, got {self.source_choice!r}")
        for name in ("mu0", "theta0", "mu_start"):
            if getattr(self, name).size != self.support.size:
                raise ConfigError(name, f"expected {self.support.size} weights, got {getattr(self, name).size}")

    @property
    def K(self) -> int:
        return self.support.size

    def with_overrides(self, **changes: Any) -> ExperimentConfig:
        data = self.to_mapping()
        data.update(changes)
        return from_mapping(data)

    def to_mapping(self, labels: bool = True) -> dict[str, Any]:
        """Canonical mapping; all defaults filled in, keys sorted."""
        data: dict[str, Any] = {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "N": self.N,
            "K": self.K,
            "horizon": self.horizon,
            "master_seed": self.master_seed,
            "mu0": self.mu0.tolist(),
            "theta0": self.theta0.tolist(),
            "mu_start": self.mu_start.tolist(),
            "coords": list(self.support.coords) if self.support.coords is not None else None,
            "source_choice": self.source_choice,
        }
        if labels:
            data["labels"] = list(self.support.labels)
        return dict(sorted(data.items()))

    def digest(self) -> str:
        """SHA-256 of the canonical config; display labels are excluded."""
        text = json.dumps(self.to_mapping(labels=False), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _prob(field: str, value, size: int | None = None) -> ProbVector:
    if not isinstance(value, Sequence) or isinstance(value, str):
        raise ConfigError(field, f"must be a list of weights, got {value!r}")
    try:
        p = ProbVector(list(value))
    except InvalidArgumentError as exc:
        raise ConfigError(field, str(exc)) from None
    if size is not None and p.size != size:
        raise ConfigError(field, f"expected {size} weights, got {p.size}")
    return p


def from_mapping(data: Mapping[str, Any]) -> ExperimentConfig:
    unknown = set(data) - KNOWN_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown config key")
    for required in ("a", "N", "horizon", "mu0"):
        if data.get(required) is None:
            raise ConfigError(required, "missing required key")
    mu0 = _prob("mu0", data["mu0"])
    K = data.get("K")
    if K is None:
        K = mu0.size
    if not _is_int(K) or K < 1:
        raise ConfigError("K", f"must be a positive integer, got {K!r}")
    if mu0.size != K:
        raise ConfigError("mu0", f"expected K = {K} weights, got {mu0.size}")
    try:
        support = Support(K, data.get("coords"), tuple(data.get("labels") or ()))
    except InvalidArgumentError as exc:
        raise ConfigError("coords" if "coord" in str(exc) else "labels", str(exc)) from None

    b, c = data.get("b"), data.get("c")
    if b is None and c is None:
        b, c = 0.0, 1.0
    elif c is None:
        c = 1.0 - b if isinstance(b, (int, float)) else b
    elif b is None:
        b = 1.0 - c if isinstance(c, (int, float)) else c

    theta0 = data.get("theta0")
    mu_start = data.get("mu_start")
    return ExperimentConfig(
        a=data["a"],
        b=b,
        c=c,
        N=data["N"],
        support=support,
        mu0=mu0,
        theta0=mu0 if theta0 is None else _prob("theta0", theta0, K),
        mu_start=mu0 if mu_start is None else _prob("mu_start", mu_start, K),
        horizon=data["horizon"],
        master_seed=data.get("master_seed", 0),
        source_choice=data.get("source_choice", "per_sample"),
    )


def parse_override(text: str) -> tuple[str, Any]:
    """Parse ``key=value``; the value is read as JSON when possible."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError("override", f"expected key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw.strip()
    return key, value


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    for item in overrides:
        key, value = parse_override(item)
        data[key] = value
    return from_mapping(data)


def dumps_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_mapping(), indent=2) + "\n"

"""Probability vectors on finite supports.

A finite support of ``K`` atoms stands in for the sample space.  Measures are
immutable :class:`ProbVector` instances, test functions are
:class:`TestFunction` instances with values in ``[0, 1]``, and the
convergence-determining class is the family of singleton indicators.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError, UnsupportedOperationError

SUM_TOL = 1e-12
# Inputs further than this from summing to one are rejected rather than renormalized.
INPUT_TOL = 1e-9


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Support:
    size: int
    coords: tuple[float, ...] | None = None
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise InvalidArgumentError(f"support size must be a positive integer, got {self.size!r}")
        object.__setattr__(self, "size", int(self.size))
        if self.coords is not None:
            coords = tuple(float(x) for x in self.coords)
            if len(coords) != self.size:
                raise InvalidArgumentError(f"expected {self.size} coords, got {len(coords)}")
            if any(b <= a for a, b in zip(coords, coords[1:])):
                raise InvalidArgumentError("coords must be strictly increasing")
            object.__setattr__(self, "coords", coords)
        labels = tuple(str(x) for x in self.labels) or tuple(str(i) for i in range(self.size))
        if len(labels) != self.size:
            raise InvalidArgumentError(f"expected {self.size} labels, got {len(labels)}")
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True, eq=False)
class ProbVector:
    """A probability measure on ``K`` atoms.

    Weights must be nonnegative and sum to one within ``INPUT_TOL``; a sum off
    by more than ``SUM_TOL`` is renormalized.  Use :meth:`normalized` to build
    from unnormalized nonnegative weights.
    """

    weights: np.ndarray = field()

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size == 0:
            raise InvalidArgumentError("a probability vector needs at least one atom")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidArgumentError(f"weights must be finite and nonnegative: {w.tolist()}")
        total = w.sum()
        if abs(total - 1.0) > INPUT_TOL:
            raise InvalidArgumentError(f"weights sum to {total!r}, not 1")
        if abs(total - 1.0) > SUM_TOL:
            w = w / total
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def normalized(cls, weights: Iterable[float]) -> ProbVector:
        w = np.asarray(list(weights), dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidArgumentError(f"weights must be finite and nonnegative: {w.tolist()}")
        total = w.sum()
        if total <= 0:
            raise InvalidArgumentError("weights must have positive total mass")
        return cls(w / total)

    @classmethod
    def dirac(cls, atom: int, size: int) -> ProbVector:
        if not 0 <= atom < size:
            raise InvalidArgumentError(f"atom {atom} outside [0, {size})")
        w = np.zeros(size)
        w[atom] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls, size: int) -> ProbVector:
        return cls(np.full(size, 1.0 / size))

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @property
    def is_dirac(self) -> bool:
        return int(np.count_nonzero(self.weights > 0)) == 1

    @property
    def dirac_atom(self) -> int | None:
        nz = np.flatnonzero(self.weights > 0)
        return int(nz[0]) if nz.size == 1 else None

    def tolist(self) -> list[float]:
        return self.weights.tolist()

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbVector):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self) -> int:
        return hash(self.weights.tobytes())

    def __repr__(self) -> str:
        return f"ProbVector({self.weights.tolist()})"


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Bounded test function on a finite support, values in ``[0, 1]``."""

    __test__ = False  # not a pytest class

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise InvalidArgumentError("test function values must be finite and nonempty")
        if np.any(v < 0) or np.any(v > 1):
            raise InvalidArgumentError(f"test function values must lie in [0, 1]: {v.tolist()}")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def indicator(cls, atom: int, size: int) -> TestFunction:
        v = np.zeros(size)
        v[atom] = 1.0
        return cls(v)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TestFunction):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())


def _check_same_size(*sizes: int) -> None:
    if len(set(sizes)) != 1:
        raise InvalidArgumentError(f"support size mismatch: {sizes}")


def integrate(p: ProbVector, f: TestFunction) -> float:
    """Return ``sum_i p_i f_i``."""
    _check_same_size(p.size, f.size)
    value = float(np.dot(p.weights, f.values))
    return min(max(value, 0.0), 1.0)


def tv_distance(p: ProbVector, q: ProbVector) -> float:
    _check_same_size(p.size, q.size)
    return min(0.5 * float(np.abs(p.weights - q.weights).sum()), 1.0)


def wasserstein1_1d(p: ProbVector, q: ProbVector, s: Support) -> float:
    """W1 distance between measures on the real coordinates of ``s``.

    Computed as the integral of ``|F_p - F_q|`` over the gaps between
    consecutive coordinates.
    """
    if s.coords is None:
        raise UnsupportedOperationError("wasserstein1_1d needs a support with coords")
    _check_same_size(p.size, q.size, s.size)
    gaps = np.diff(np.asarray(s.coords))
    cdf_gap = np.abs(np.cumsum(p.weights) - np.cumsum(q.weights))[:-1]
    return float(np.dot(cdf_gap, gaps))


def mix(a: float, p: ProbVector, q: ProbVector) -> ProbVector:
    """Return the mixture ``a*p + (1-a)*q``."""
    if not 0.0 <= a <= 1.0:
        raise InvalidArgumentError(f"mixture weight must lie in [0, 1], got {a!r}")
    _check_same_size(p.size, q.size)
    if a == 1.0:
        return p
    if a == 0.0:
        return q
    return ProbVector(a * p.weights + (1.0 - a) * q.weights)


def empirical_from_samples(samples: Sequence[int], s: Support | int) -> ProbVector:
    size = s.size if isinstance(s, Support) else int(s)
    idx = np.asarray(samples)
    if idx.size == 0:
        raise InvalidArgumentError("cannot form an empirical measure from zero samples")
    if not np.issubdtype(idx.dtype, np.integer):
        raise InvalidArgumentError("samples must be integer atom indices")
    if idx.min() < 0 or idx.max() >= size:
        raise InvalidArgumentError(f"sample index outside [0, {size})")
    counts = np.bincount(idx.ravel(), minlength=size)
    return ProbVector(counts / idx.size)


def make_cdc(s: Support | int) -> list[TestFunction]:
    """Singleton indicators: the convergence-determining class on a finite support."""
    size = s.size if isinstance(s, Support) else int(s)
    return [TestFunction.indicator(i, size) for i in range(size)]


def support_stats(p: ProbVector) -> tuple[int, float, float]:
    """Return ``(support size, largest atom, Shannon entropy in nats)``."""
    w = p.weights
    pos = w[w > 0]
    entropy = float(-np.sum(pos * np.log(pos))) + 0.0  # no -0.0 for Diracs
    return int(pos.size), float(w.max()), entropy

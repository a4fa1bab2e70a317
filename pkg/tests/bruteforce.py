"""Exhaustive one-step laws by enumerating every batch.

Each of the N samples is a (source, atom) pair.  Products over all pairs give
the exact joint law of the next (mu, theta) without any multinomial formula,
which makes this an independent reference for the kernel and the chain.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from fractions import Fraction

import numpy as np


def one_step_law(mu, theta, mu0, a, b, N):
    """Map ``(counts, theta_next) -> probability`` for one generation.

    All inputs may be Fractions for exact arithmetic.  ``theta_next`` is
    returned as a tuple of Fractions (or the previous theta unchanged).
    """
    c = 1 - b
    K = len(mu)
    options = []
    for x in range(K):
        options.append(("fresh", x, a * mu0[x]))
        options.append(("param", x, (1 - a) * b * theta[x]))
        options.append(("emp", x, (1 - a) * c * mu[x]))
    options = [o for o in options if o[2] != 0]
    law = defaultdict(lambda: 0)
    for batch in itertools.product(options, repeat=N):
        p = 1
        for _, _, w in batch:
            p *= w
        counts = [0] * K
        pcounts = [0] * K
        for src, x, _ in batch:
            counts[x] += 1
            if src == "param":
                pcounts[x] += 1
        m = sum(pcounts)
        theta_next = tuple(Fraction(v, m) for v in pcounts) if m else tuple(theta)
        law[(tuple(counts), theta_next)] += p
    return dict(law)


def count_law(mu, mu0, a, N):
    """Law of the next count vector for the ``b = 0`` chain."""
    out = defaultdict(lambda: 0)
    for (counts, _), p in one_step_law(mu, mu, mu0, a, 0, N).items():
        out[counts] += p
    return dict(out)


def absorption_by_value_iteration(N, K, iterations=3000):
    """Fixation law and expected time for ``a = b = 0`` from every composition.

    Iterates the enumerated one-step law instead of solving linear systems.
    Returns ``(states, fix, time)`` with ``fix`` of shape ``(S, K)``.
    """
    states = [s for s in itertools.product(range(N + 1), repeat=K) if sum(s) == N]
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for s in states:
        for t, p in count_law([Fraction(v, N) for v in s], [Fraction(1, K)] * K, 0, N).items():
            P[index[s], index[t]] = float(p)
    absorbing = np.array([max(s) == N for s in states])
    fix = np.array([[1.0 if s[i] == N else 0.0 for i in range(K)] for s in states])
    time = np.zeros(len(states))
    for _ in range(iterations):
        fix = np.where(absorbing[:, None], fix, P @ fix)
        time = np.where(absorbing, 0.0, 1.0 + P @ time)
    return states, fix, time

"""Gauss-Legendre nodes and weights at arbitrary precision."""

from __future__ import annotations

import math
from functools import lru_cache

import gmpy2
from gmpy2 import mpfr

from .numerics import digits_to_bits


def _legendre(n: int, x):
    """P_n(x) and P_n'(x) by the three-term recurrence."""
    p0, p1 = mpfr(1), x
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1)
    return p1, dp


@lru_cache(maxsize=64)
def gauss_legendre(n: int, digits: int) -> tuple[tuple, tuple]:
    """Nodes and weights on [-1, 1], ascending, correct to ``digits`` digits."""
    if n < 1:
        raise ValueError("need at least one node")
    bits = digits_to_bits(digits + 10)
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        tol = mpfr(10) ** (-(digits + 5))
        nodes, weights = [], []
        for i in range(1, n // 2 + 1):
            x = mpfr(math.cos(math.pi * (i - 0.25) / (n + 0.5)))
            for _ in range(100):
                p, dp = _legendre(n, x)
                dx = p / dp
                x -= dx
                if abs(dx) < tol:
                    break
            p, dp = _legendre(n, x)
            w = 2 / ((1 - x * x) * dp * dp)
            nodes.append(x)
            weights.append(w)
        if n % 2:
            _, dp = _legendre(n, mpfr(0))
            mid = [(mpfr(0), 2 / (dp * dp))]
        else:
            mid = []
        pos = list(zip(nodes, weights))
        pairs = [(-x, w) for x, w in pos] + mid + [(x, w) for x, w in reversed(pos)]
    return tuple(x for x, _ in pairs), tuple(w for _, w in pairs)


def nodes_for_digits(digits: int) -> int:
    """Node count for panels of width ~2 on integrands like ``exp(-u)``."""
    return max(8, int(digits / 3.3) + 8)

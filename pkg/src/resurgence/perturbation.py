"""Exact Rayleigh-Schroedinger coefficients of the double-well ground state.

The Hamiltonian expanded about the ``x = 0`` well is

    H = p^2/2 + x^2/2 - lam x^3 + lam^2 x^4 / 2,      lam = sqrt(g),

and the ground-state energy is ``E(g) = sum_k eps_k g^k``.

Two exact routes are provided.

``riccati`` (default)
    Writes ``psi = exp(-int y)`` with ``y = x + sum_j lam^j y_j(x)``.  The
    Riccati equation ``y^2 - y' = 2V - 2E`` gives, order by order,
    ``2x y_j - y_j' = 2V_j - 2E_j - sum_{a=1}^{j-1} y_a y_{j-a}``.  The only
    division is by two, so every ``2^j y_j`` has integer coefficients and the
    whole recursion runs on integers.  The quadratic convolution is evaluated
    with Kronecker-packed big-integer products.

``bender-wu``
    Expands ``psi = exp(-x^2/2) sum_j lam^j P_j(x)`` and solves
    ``-P_j''/2 + x P_j' = x^3 P_{j-1} - x^4 P_{j-2}/2 + sum_m eps_m P_{j-2m}``
    top-down in degree with exact fractions.  Cubic in the order with large
    denominators; kept as an independent reference route.
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import gmpy2
from gmpy2 import mpz

from .numerics import (
    BigReal,
    DomainError,
    digits_to_bits,
    NumericalFailure,
    format_rational,
    parse_rational,
    pi,
    rational_to_big,
    working_precision,
)

__all__ = [
    "PerturbationSeries",
    "BenderWuState",
    "CacheParseError",
    "CapacityError",
    "compute_rs_coefficients",
    "bender_wu_coefficients",
    "asymptotic_ratio",
    "save_series",
    "load_series",
]


class CapacityError(NumericalFailure):
    """The recursion ran out of memory."""


class CacheParseError(ValueError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.line_no = line_no


@dataclass(frozen=True)
class PerturbationSeries:
    """Coefficients ``eps_0 .. eps_K`` of ``E(g) = sum eps_k g^k``."""

    coeffs: tuple[Fraction, ...]

    def __post_init__(self):
        if not self.coeffs:
            raise ValueError("a perturbation series needs at least eps_0")
        object.__setattr__(self, "coeffs", tuple(Fraction(c) for c in self.coeffs))

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, k):
        return self.coeffs[k]

    def __len__(self):
        return len(self.coeffs)

    def truncated(self, order: int) -> "PerturbationSeries":
        if order > self.order:
            raise ValueError(f"series has order {self.order}, requested {order}")
        return PerturbationSeries(self.coeffs[: order + 1])

    def check_invariants(self) -> None:
        if self.coeffs[0] != Fraction(1, 2):
            raise AssertionError(f"eps_0 = {self.coeffs[0]}, expected 1/2")
        bad = [k for k, c in enumerate(self.coeffs) if k and c >= 0]
        if bad:
            raise AssertionError(f"non-negative coefficients at k = {bad[:5]}")


# -- Riccati route -----------------------------------------------------------


def _pack(coeffs: Sequence[int], width: int):
    """Signed Kronecker substitution ``sum c_i 2^(width*i)``."""
    nb = width // 8
    pos = b"".join((c if c > 0 else 0).to_bytes(nb, "little") for c in coeffs)
    neg = b"".join((-c if c < 0 else 0).to_bytes(nb, "little") for c in coeffs)
    return mpz(int.from_bytes(pos, "little")) - mpz(int.from_bytes(neg, "little"))


def _unpack(value, width: int, count: int) -> list[int]:
    nb = width // 8
    half = 1 << (width - 1)
    bias = int.from_bytes(half.to_bytes(nb, "little") * count, "little")
    raw = int(value + bias).to_bytes(nb * count, "little")
    return [int.from_bytes(raw[k * nb:(k + 1) * nb], "little") - half
            for k in range(count)]


def _riccati_energies(order: int) -> list[Fraction]:
    # Y[j] holds 2^j * y_j restricted to powers x^(par_j + 2m), par_j = (j+1) % 2.
    # The product of Y[a] and Y[j-a] is scaled by 2^j, matching Y[j].
    J = 2 * order
    Y: list[list[int]] = [[1]]
    par = [1]
    bits = [1]
    energies = [Fraction(1, 2)]
    width = 0
    packed: dict[int, object] = {}

    for j in range(1, J + 1):
        p = (j + 1) % 2
        n = (j + 1 - p) // 2 + 1
        pr = j % 2                      # parity of the right-hand side
        nR = (j + 2 - pr) // 2 + 1
        R = [0] * (nR + 1)

        if j >= 2:
            need = max(bits[a] + bits[j - a] for a in range(1, j)) + (n + 2).bit_length() + 2
            if need > width:
                width = ((need + 96 + 63) // 64) * 64
                packed.clear()

            def pk(a):
                v = packed.get(a)
                if v is None:
                    v = packed[a] = _pack(Y[a], width)
                return v

            # group products by lowest exponent par_a + par_(j-a)
            acc: dict[int, object] = {}
            for a in range(1, (j + 1) // 2):
                low = par[a] + par[j - a]
                acc[low] = acc.get(low, 0) + pk(a) * pk(j - a)
            for low in acc:
                acc[low] *= 2
            if j % 2 == 0:
                a = j // 2
                low = 2 * par[a]
                acc[low] = acc.get(low, 0) + pk(a) * pk(a)
            for low, total in acc.items():
                off = (low - pr) // 2
                for k, s in enumerate(_unpack(total, width, nR + 1 - off)):
                    if s:
                        R[k + off] -= s

        if j == 1:                      # 2 V_1 = -2 x^3, scaled by 2
            R[(3 - pr) // 2] -= 4
        elif j == 2:                    # 2 V_2 = x^4, scaled by 4
            R[(4 - pr) // 2] += 4

        # coefficient of x^(i+1):  2 y_i - (i+2) y_(i+2) = R_(i+1)
        y = [0] * (n + 1)
        for m in range(n - 1, -1, -1):
            i = p + 2 * m
            v = R[(i + 1 - pr) // 2] + (i + 2) * y[m + 1]
            if v & 1:
                raise NumericalFailure("non-dyadic Riccati coefficient", order=j, degree=i)
            y[m] = v >> 1
        y.pop()

        if j % 2 == 0:
            # constant term:  -y_1 = R_0 - 2 E_j
            energies.append(Fraction(R[0] + y[0], 1 << (j + 1)))
        # odd j: R has no constant term and y_j no linear term, so E_j = 0

        Y.append(y)
        par.append(p)
        bits.append(max((abs(c).bit_length() for c in y), default=1))
    return energies


# -- Bender-Wu route ---------------------------------------------------------


@dataclass
class BenderWuState:
    """Polynomials ``P_j`` of ``psi = exp(-x^2/2) sum lam^j P_j`` (exact).

    ``table[j][i]`` is the coefficient of ``x^i`` in ``P_j``; ``normalization``
    is the fixed value of ``c_{j,0}`` for every ``j >= 1``.
    """

    normalization: Fraction = Fraction(0)
    table: list[list[Fraction]] = field(default_factory=lambda: [[Fraction(1)]])
    energies: list[Fraction] = field(default_factory=lambda: [Fraction(1, 2)])

    @property
    def order(self) -> int:
        return len(self.table) - 1

    def step(self) -> None:
        j = len(self.table)
        P = self.table
        e = self.energies               # e[m] multiplies lam^m
        deg = 3 * j
        rhs = [Fraction(0)] * (deg + 3)
        for i, c in enumerate(P[j - 1]):
            if c:
                rhs[i + 3] += c
        if j >= 2:
            for i, c in enumerate(P[j - 2]):
                if c:
                    rhs[i + 4] -= c / 2
        for m in range(1, j):
            if e[m]:
                for i, c in enumerate(P[j - m]):
                    if c:
                        rhs[i] += e[m] * c
        # i c_i - (i+2)(i+1)/2 c_(i+2) = rhs_i, for i >= 1
        c = [Fraction(0)] * (deg + 3)
        for i in range(deg, 0, -1):
            c[i] = (rhs[i] + Fraction((i + 2) * (i + 1), 2) * c[i + 2]) / i
        c[0] = self.normalization
        # i = 0:  -c_2 = rhs_0 + e_j   (the e_j term comes from m = j, P_0 = 1)
        e_j = -c[2] - rhs[0]
        if j % 2 and e_j != 0:
            raise NumericalFailure("odd-order energy correction does not vanish", order=j)
        while len(c) > 1 and c[-1] == 0:
            c.pop()
        P.append(c)
        e.append(e_j)


def bender_wu_coefficients(order: int, normalization=Fraction(0)) -> PerturbationSeries:
    """Reference route: exact fractions, cubic cost, usable to a few dozen orders."""
    if order < 0:
        raise DomainError("order must be non-negative")
    state = BenderWuState(normalization=Fraction(normalization))
    while state.order < 2 * order:
        state.step()
    return PerturbationSeries(tuple(state.energies[0::2]))


def compute_rs_coefficients(order: int, method: str = "riccati",
                            normalization=Fraction(0)) -> PerturbationSeries:
    """Exact ``eps_0 .. eps_order``.

    >>> [str(c) for c in compute_rs_coefficients(3).coeffs]
    ['1/2', '-1', '-9/2', '-89/2']
    """
    if order < 0:
        raise DomainError("order must be non-negative")
    try:
        if method == "riccati":
            series = PerturbationSeries(tuple(_riccati_energies(order)))
        elif method == "bender-wu":
            series = bender_wu_coefficients(order, normalization)
        else:
            raise ValueError(f"unknown method {method!r}")
    except MemoryError as exc:
        raise CapacityError("out of memory in perturbation recursion", order=order) from exc
    series.check_invariants()
    return series


def asymptotic_ratio(series: PerturbationSeries, k: int, digits: int = 30) -> BigReal:
    """``eps_k / (-k! 3^k 3/pi)`` at ``digits`` digits."""
    if not 1 <= k <= series.order:
        raise IndexError(f"k = {k} outside 1..{series.order}")
    exact = series[k] / (-math.factorial(k) * 3 ** (k + 1))
    with working_precision(digits + 10):
        value = rational_to_big(exact, digits + 10) * pi(digits + 10)
    return gmpy2.mpfr(value, digits_to_bits(digits))


# -- cache -------------------------------------------------------------------


def save_series(series: PerturbationSeries, path) -> None:
    """Write ``k<TAB>num/den`` lines, ascending ``k``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for k, c in enumerate(series.coeffs):
            fh.write(f"{k}\t{format_rational(c)}\n")
    os.replace(tmp, path)


def load_series(path, order: int | None = None) -> PerturbationSeries:
    """Read a cache file; ``order`` returns a truncated view.

    Asking for more orders than the file holds issues a warning and returns
    everything available.
    """
    coeffs: list[Fraction] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise CacheParseError(path, line_no, "expected 'k<TAB>num/den'")
            try:
                k = int(parts[0])
                value = parse_rational(parts[1])
            except (ValueError, ZeroDivisionError) as exc:
                raise CacheParseError(path, line_no, str(exc)) from None
            if k != len(coeffs):
                raise CacheParseError(path, line_no, f"expected index {len(coeffs)}, got {k}")
            coeffs.append(value)
            if order is not None and len(coeffs) > order:
                break
    if not coeffs:
        raise CacheParseError(path, 1, "empty cache file")
    if order is not None and len(coeffs) - 1 < order:
        warnings.warn(f"cache {path} holds order {len(coeffs) - 1}, requested {order}",
                      stacklevel=2)
    return PerturbationSeries(tuple(coeffs))

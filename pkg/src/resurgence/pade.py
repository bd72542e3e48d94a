"""Exact Pade approximants over the rationals.

The denominator is found with the subresultant polynomial remainder sequence
applied to ``(x^(K+1), F(x))``, where ``F`` is the series with denominators
cleared.  Every step is an exact integer division (fraction-free elimination on
the Sylvester structure), and the extended cofactor ``t`` satisfies
``t(x) F(x) = r(x) mod x^(K+1)`` once ``deg r <= L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import gmpy2
from gmpy2 import mpc, mpfr, mpq, mpz

from .numerics import NumericalFailure, digits_to_bits

divexact = gmpy2.divexact


class PadeDegenerateError(NumericalFailure):
    """No Pade approximant with a non-vanishing denominator constant term."""


def _trim(p: list) -> list:
    while p and p[-1] == 0:
        p.pop()
    return p


def _extended_prs(F: Sequence, L: int) -> tuple[list, list]:
    """Return (r, t) with ``t F = r mod x^(K+1)`` and ``deg r <= L``."""
    K = len(F) - 1
    r0 = [mpz(0)] * (K + 1) + [mpz(1)]
    r1 = _trim([mpz(c) for c in F])
    t0: list = []
    t1 = [mpz(1)]
    if not r1:
        return [], t1
    psi = mpz(-1)
    first = True
    gam_prev = d_prev = None
    while len(r1) - 1 > L:
        d = len(r0) - len(r1)
        lc = r1[-1]
        if first:
            beta = mpz(-1) ** (d + 1)
            first = False
        else:
            if d_prev == 1:
                psi = -gam_prev
            else:
                psi = divexact((-gam_prev) ** d_prev, psi ** (d_prev - 1))
            beta = -gam_prev * psi ** d
        f = lc ** (d + 1)
        m = len(r1) - 1
        R = [c * f for c in r0]
        T = [c * f for c in t0] + [mpz(0)] * max(0, len(t1) + d + 1 - len(t0))
        for s in range(len(R) - 1, m - 1, -1):
            c = R[s]
            if c == 0:
                continue
            q = divexact(c, lc)
            sh = s - m
            for k in range(m + 1):
                R[k + sh] -= q * r1[k]
            for k in range(len(t1)):
                T[k + sh] -= q * t1[k]
        R = _trim(R[:m])
        _trim(T)
        R = [divexact(c, beta) for c in R]
        T = [divexact(c, beta) for c in T]
        gam_prev, d_prev = lc, d
        r0, r1, t0, t1 = r1, R, t1, T
        if not r1:
            break
    return r1, t1


@dataclass(frozen=True)
class PadeApproximant:
    """``P(t) = num(t) / (scale * den(t))`` with integer coefficient lists.

    ``numerator``/``denominator`` give the normalised exact form with
    denominator constant term one.  ``reduction`` counts how many times the
    requested denominator degree had to be lowered.
    """

    num_int: tuple
    den_int: tuple
    scale: int
    order: int
    requested: tuple[int, int]
    reduction: int = 0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def numerator_degree(self) -> int:
        return len(self.num_int) - 1

    @property
    def denominator_degree(self) -> int:
        return len(self.den_int) - 1

    @cached_property
    def numerator(self) -> tuple[Fraction, ...]:
        d = int(self.scale) * int(self.den_int[0])
        return tuple(Fraction(int(c), d) for c in self.num_int)

    @cached_property
    def denominator(self) -> tuple[Fraction, ...]:
        d0 = int(self.den_int[0])
        return tuple(Fraction(int(c), d0) for c in self.den_int)

    def reproduces(self, coeffs: Sequence[Fraction]) -> bool:
        """Exact check of ``den * series - num = O(t^(K+1))`` in integers."""
        K = self.order
        if len(coeffs) < K + 1:
            raise ValueError("not enough coefficients")
        D = 1
        for c in coeffs[: K + 1]:
            D = math.lcm(D, c.denominator)
        if D % self.scale:
            return self._reproduces_fraction(coeffs)
        mult = D // self.scale
        F = [mpz(c.numerator * (D // c.denominator)) for c in coeffs[: K + 1]]
        den = self.den_int
        for k in range(K + 1):
            s = sum(den[j] * F[k - j] for j in range(min(k, len(den) - 1) + 1))
            target = self.num_int[k] * mult if k < len(self.num_int) else 0
            if s != target:
                return False
        return True

    def _reproduces_fraction(self, coeffs) -> bool:
        return list(self.taylor_coefficients(self.order)) == list(coeffs[: self.order + 1])

    def taylor_coefficients(self, order: int) -> tuple[Fraction, ...]:
        """Re-expand ``num/den`` to ``order`` in exact fractions."""
        num, den = self.numerator, self.denominator
        out: list[Fraction] = []
        for k in range(order + 1):
            v = num[k] if k < len(num) else Fraction(0)
            for j in range(1, min(k, len(den) - 1) + 1):
                v -= den[j] * out[k - j]
            out.append(v)
        return tuple(out)

    def big_coefficients(self, digits: int):
        """Normalised numerator/denominator coefficients as mpfr lists."""
        key = ("big", digits)
        if key not in self._cache:
            bits = digits_to_bits(digits)
            d0 = mpz(self.den_int[0])
            sd = d0 * mpz(self.scale)
            num = [mpfr(mpq(mpz(c), sd), bits) for c in self.num_int]
            den = [mpfr(mpq(mpz(c), d0), bits) for c in self.den_int]
            self._cache[key] = (num, den)
        return self._cache[key]

    def evaluator(self, digits: int):
        """Callable ``t -> P(t)`` for mpc/mpfr ``t``, Horner at ``digits``."""
        num, den = self.big_coefficients(digits)
        num_r, den_r = num[::-1], den[::-1]
        bits = digits_to_bits(digits)

        def evaluate(t):
            with gmpy2.context(gmpy2.get_context(), precision=bits,
                               real_prec=bits, imag_prec=bits):
                a = mpc(0)
                for c in num_r:
                    a = a * t + c
                b = mpc(0)
                for c in den_r:
                    b = b * t + c
                return a / b
        return evaluate


def exact_pade(coeffs: Sequence[Fraction], L: int, M: int) -> PadeApproximant:
    """``[L/M]`` Pade approximant of ``sum coeffs[k] t^k`` (needs L+M+1 terms).

    A singular system (no approximant with ``den(0) != 0``) lowers ``M`` by one
    and raises ``L`` by one, keeping the matched order ``L + M``.
    """
    K = L + M
    if len(coeffs) < K + 1:
        raise ValueError(f"[{L}/{M}] needs {K + 1} coefficients, got {len(coeffs)}")
    coeffs = [Fraction(c) for c in coeffs[: K + 1]]
    D = 1
    for c in coeffs:
        D = math.lcm(D, c.denominator)
    F = [mpz(c.numerator * (D // c.denominator)) for c in coeffs]
    reduction = 0
    while True:
        if M == 0 and reduction:
            raise PadeDegenerateError(
                "Pade degenerate: denominator degree reduced to zero",
                requested=[L - reduction, M + reduction], reductions=reduction)
        r, t = _extended_prs(F, L)
        if t and t[0] != 0:
            break
        L, M, reduction = L + 1, M - 1, reduction + 1
    num = tuple(mpz(c) for c in r) or (mpz(0),)
    return PadeApproximant(num_int=num, den_int=tuple(t), scale=D, order=K,
                           requested=(L - reduction, M + reduction), reduction=reduction)


# -- cache -------------------------------------------------------------------
# Plain text: a header line "scale order L M reduction", then one
# "n<TAB>k<TAB>int" line per numerator coefficient and "d<TAB>k<TAB>int" per
# denominator coefficient.

def save_pade(p: PadeApproximant, path) -> None:
    import os
    from pathlib import Path

    from .numerics import int_to_str

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        L, M = p.requested
        fh.write(f"{int_to_str(p.scale)} {p.order} {L} {M} {p.reduction}\n")
        for k, c in enumerate(p.num_int):
            fh.write(f"n\t{k}\t{int_to_str(c)}\n")
        for k, c in enumerate(p.den_int):
            fh.write(f"d\t{k}\t{int_to_str(c)}\n")
    os.replace(tmp, path)


def load_pade(path) -> PadeApproximant:
    from .numerics import str_to_int

    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) != 5:
            raise ValueError(f"{path}:1: malformed header")
        scale, order, L, M, red = str_to_int(head[0]), *map(int, head[1:])
        num: list = []
        den: list = []
        for line_no, line in enumerate(fh, start=2):
            tag, k, val = line.rstrip("\n").split("\t")
            target = num if tag == "n" else den
            if int(k) != len(target):
                raise ValueError(f"{path}:{line_no}: coefficient out of order")
            target.append(mpz(str_to_int(val)))
    return PadeApproximant(num_int=tuple(num), den_int=tuple(den), scale=scale,
                           order=order, requested=(L, M), reduction=red)

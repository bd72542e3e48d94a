"""Non-perturbative sectors of the double-well ground state.

The trans-series for the two lowest levels (``N = 0, 1``) reads

    E_N(g) = sum_n (-(-1)^N e^(-1/6g) / sqrt(pi g))^n
             sum_l (ln(-2/g))^l sum_k eps_{nlk} g^k ,

and the mean of the two levels keeps only even ``n``.  The ``n = 2`` sector
is evaluated with the branch ``ln(-2/g) = ln(2/g) + i pi`` for ``g + i0`` and
``ln(2/g) - i pi`` for ``g - i0``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

import gmpy2
from gmpy2 import mpc, mpfr, mpq

from .numerics import (
    BigComplex,
    DomainError,
    conj,
    digits_to_bits,
    format_rational,
    to_fraction,
)

__all__ = [
    "GammaLinear",
    "DecimalEntry",
    "InstantonCoefficients",
    "TwoInstantonEval",
    "MissingCoefficientError",
    "known_coefficients",
    "one_instanton_splitting",
    "two_instanton_truncated",
    "n4_leading_bound",
    "mean_sector_weight",
]


class MissingCoefficientError(KeyError):
    def __init__(self, key):
        super().__init__(key)
        self.key = key

    def __str__(self):
        n, l, k = self.key
        return f"coefficient eps_({n},{l},{k}) is not available"


def _ctx(digits: int):
    bits = digits_to_bits(digits)
    return gmpy2.context(gmpy2.get_context(), precision=bits, real_prec=bits, imag_prec=bits)


def _big(x: Fraction):
    return mpfr(mpq(x.numerator, x.denominator))


@dataclass(frozen=True)
class GammaLinear:
    """``a + b*gamma`` with exact rationals, plus an optional error half-width."""

    a: Fraction
    b: Fraction = Fraction(0)
    error: Fraction = Fraction(0)

    def value(self, digits: int):
        with _ctx(digits + 10):
            gam = gmpy2.const_euler()
            v = _big(self.a) + _big(self.b) * gam
        return mpfr(v, digits_to_bits(digits))

    @property
    def exact(self) -> bool:
        return self.error == 0


@dataclass(frozen=True)
class DecimalEntry:
    """A coefficient known only as a decimal with an error half-width."""

    decimal: str
    error: Fraction

    def value(self, digits: int):
        return mpfr(self.decimal, digits_to_bits(digits))

    @property
    def exact(self) -> bool:
        return False


Entry = GammaLinear | DecimalEntry


class InstantonCoefficients:
    """Table ``(n, l, k) -> entry``."""

    def __init__(self, entries: dict | None = None):
        self._entries: dict[tuple[int, int, int], Entry] = dict(entries or {})

    def __getitem__(self, key) -> Entry:
        try:
            return self._entries[tuple(key)]
        except KeyError:
            raise MissingCoefficientError(tuple(key)) from None

    def __contains__(self, key) -> bool:
        return tuple(key) in self._entries

    def keys(self):
        return sorted(self._entries)

    def get(self, key, default=None):
        return self._entries.get(tuple(key), default)

    def with_entries(self, extra: dict) -> "InstantonCoefficients":
        merged = dict(self._entries)
        merged.update(extra)
        return InstantonCoefficients(merged)

    def max_k(self, n: int, l: int) -> int:
        """Largest ``K`` with every ``k <= K`` present for ``(n, l)``."""
        k = -1
        while (n, l, k + 1) in self._entries:
            k += 1
        return k

    def value(self, key, digits: int):
        return self[key].value(digits)

    def error(self, key) -> Fraction:
        return self[key].error

    def series(self, n: int, l: int, K: int, digits: int) -> list:
        return [self.value((n, l, k), digits) for k in range(K + 1)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "l", "k", "a", "b", "decimal", "error"])
        for key in self.keys():
            e = self._entries[key]
            err = format_rational(e.error) if e.error else "0"
            if isinstance(e, GammaLinear):
                w.writerow([*key, format_rational(e.a), format_rational(e.b), "", err])
            else:
                w.writerow([*key, "", "", e.decimal, err])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "InstantonCoefficients":
        rows = csv.DictReader(io.StringIO(text))
        entries = {}
        for row in rows:
            key = (int(row["n"]), int(row["l"]), int(row["k"]))
            err = Fraction(row["error"] or "0")
            if row["decimal"]:
                entries[key] = DecimalEntry(row["decimal"], err)
            else:
                entries[key] = GammaLinear(Fraction(row["a"]), Fraction(row["b"] or "0"), err)
        return cls(entries)


def _dec(text: str) -> Fraction:
    return Fraction(text)


def known_coefficients() -> InstantonCoefficients:
    F = Fraction
    t = {
        (2, 0, 0): GammaLinear(F(0), F(1)),
        (2, 1, 0): GammaLinear(F(1)),
        (2, 0, 1): GammaLinear(F(-23, 2), F(-53, 6)),
        (2, 1, 1): GammaLinear(F(-53, 6)),
        (2, 0, 2): GammaLinear(F(13, 2), F(-1277, 72)),
        (2, 1, 2): GammaLinear(F(-1277, 72)),
        (2, 0, 3): GammaLinear(F(-45941, 144), F(-336437, 1296), _dec("1.6e-10")),
        (2, 0, 4): GammaLinear(F(-20772221, 2592), F(-141158555, 31104), _dec("2e-6")),
        (2, 0, 5): GammaLinear(_dec("-205496.5847"), F(-17542610737, 186624), _dec("2e-3")),
        (2, 0, 6): DecimalEntry("6936980.4", _dec("4.8")),
        (2, 1, 3): GammaLinear(F(-336437, 1296), F(0), _dec("1.3e-21")),
        (2, 1, 4): GammaLinear(F(-141158555, 31104), F(0), _dec("4.2e-17")),
        (2, 1, 5): GammaLinear(F(-17542610737, 186624), F(0), _dec("5.9e-13")),
        (2, 1, 6): DecimalEntry("-2221191.7314262645", _dec("4.8e-9")),
        (2, 1, 7): DecimalEntry("-58524267.633067", _dec("2.5e-5")),
        (2, 1, 8): DecimalEntry("-1695080020.213", _dec("9.5e-2")),
        (2, 1, 9): DecimalEntry("-53461315700", _dec("1.6e3")),
        (2, 1, 10): DecimalEntry("-1823771270000", _dec("4.8e5")),
        (4, 3, 0): GammaLinear(F(1)),
    }
    return InstantonCoefficients(t)


# -- evaluations --------------------------------------------------------------

def one_instanton_splitting(g, digits: int):
    """``E_1 - E_0 = exp(-1/(6g)) / sqrt(pi g)`` at leading order."""
    g = to_fraction(g)
    if g <= 0:
        raise DomainError("coupling must be positive")
    with _ctx(digits + 10):
        gb = _big(g)
        v = gmpy2.exp(-1 / (6 * gb)) / gmpy2.sqrt(gmpy2.const_pi() * gb)
    return mpfr(v, digits_to_bits(digits))


def n4_leading_bound(g, digits: int):
    """``(e^(-1/6g)/sqrt(pi g))^4 ln(2/g)^3``, the leading ``n = 4`` term."""
    g = to_fraction(g)
    if g <= 0:
        raise DomainError("coupling must be positive")
    with _ctx(digits + 10):
        gb = _big(g)
        pi = gmpy2.const_pi()
        v = gmpy2.exp(-2 / (3 * gb)) / (pi * pi * gb * gb) * gmpy2.log(2 / gb) ** 3
    return mpfr(v, digits_to_bits(digits))


def mean_sector_weight(n: int) -> int:
    """Twice the average over ``N = 0, 1`` of ``(-(-1)^N)^n``: 2 for even n, 0 for odd."""
    return sum((-((-1) ** N)) ** n for N in (0, 1))


@dataclass(frozen=True)
class TwoInstantonEval:
    g: Fraction
    K: int
    branch: str
    value: BigComplex
    digits: int
    error: object = None   # propagated coefficient half-width (real, imag)

    def conjugate(self) -> "TwoInstantonEval":
        other = "lower" if self.branch == "upper" else "upper"
        return TwoInstantonEval(self.g, self.K, other, conj(self.value),
                                self.digits, self.error)


def prefactor(g, digits: int):
    """``exp(-1/(3g)) / (pi g)``."""
    g = to_fraction(g)
    with _ctx(digits + 10):
        gb = _big(g)
        v = gmpy2.exp(-1 / (3 * gb)) / (gmpy2.const_pi() * gb)
    return mpfr(v, digits_to_bits(digits))


def two_instanton_truncated(g, K: int, branch: str = "upper",
                            coeffs: InstantonCoefficients | None = None,
                            digits: int = 60, K_real: int | None = None) -> TwoInstantonEval:
    """``E^(2),K = e^(-1/3g)/(pi g) sum_l ln(-2/g)^l sum_{k<=K} eps_{2lk} g^k``.

    ``K_real`` (default ``K``) truncates the ``l = 0`` sum separately; this is
    needed for imaginary-part studies at orders where ``eps_{20k}`` is unknown,
    because the ``l = 0`` term is purely real.
    """
    g = to_fraction(g)
    if g <= 0:
        raise DomainError("coupling must be positive")
    if branch not in ("upper", "lower"):
        raise DomainError(f"branch must be 'upper' or 'lower', got {branch!r}")
    coeffs = coeffs or known_coefficients()
    K0 = K if K_real is None else K_real
    work = digits + 10
    with _ctx(work):
        gb = _big(g)
        s0 = mpfr(0)
        e0 = mpfr(0)
        gk = mpfr(1)
        for k in range(max(K0, K) + 1):
            if k <= K0:
                ent = coeffs[(2, 0, k)]
                s0 += ent.value(work) * gk
                e0 += _big(ent.error) * gk
            gk *= gb
        s1 = mpfr(0)
        e1 = mpfr(0)
        gk = mpfr(1)
        for k in range(K + 1):
            ent = coeffs[(2, 1, k)]
            s1 += ent.value(work) * gk
            e1 += _big(ent.error) * gk
            gk *= gb
        pi = gmpy2.const_pi()
        sign = 1 if branch == "upper" else -1
        log_branch = mpc(gmpy2.log(2 / gb), sign * pi)
        pre = gmpy2.exp(-1 / (3 * gb)) / (pi * gb)
        val = pre * (s0 + log_branch * s1)
        err = (pre * (e0 + abs(log_branch.real) * e1), pre * pi * e1)
    bits = digits_to_bits(digits)
    return TwoInstantonEval(g, K, branch, mpc(val, (bits, bits)), digits,
                            (mpfr(err[0], bits), mpfr(err[1], bits)))


def gamma_pattern_holds(coeffs: InstantonCoefficients, k_max: int = 5) -> list[int]:
    """Orders ``k <= k_max`` where the gamma part of eps_{20k} differs from eps_{21k}."""
    bad = []
    for k in range(k_max + 1):
        a, b = coeffs.get((2, 0, k)), coeffs.get((2, 1, k))
        if isinstance(a, GammaLinear) and isinstance(b, GammaLinear) and b.b == 0:
            if a.b != b.a:
                bad.append(k)
    return bad

"""Scalar tower and precision policy.

Three carriers are used throughout the package:

* ``ExactRational`` -- :class:`fractions.Fraction`, exact and always reduced.
* ``BigReal`` -- :class:`gmpy2.mpfr`.  Each value carries its own precision
  (in bits); :func:`digits_of` reports it in decimal digits.
* ``BigComplex`` -- :class:`gmpy2.mpc`.

All arithmetic on big values happens inside :func:`working_precision`, which
sets the thread-local MPFR context so that every result is correctly rounded
at the requested number of decimal digits.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from fractions import Fraction
from typing import Iterator

import gmpy2
from gmpy2 import mpc, mpfr, mpq, mpz

ExactRational = Fraction
BigReal = type(mpfr(0))
BigComplex = type(mpc(0))

LOG2_10 = math.log2(10)
GUARD_DIGITS = 20


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericalFailure(RuntimeError):
    """A numerical procedure did not meet its contract.

    ``payload`` carries whatever partial information is useful to a caller
    (achieved tolerance, partial roots, ...).  It is serialised verbatim by the
    command line front end.
    """

    def __init__(self, message: str, **payload):
        super().__init__(message)
        self.payload = payload


def digits_to_bits(digits: int) -> int:
    return int(math.ceil(digits * LOG2_10)) + 4


def bits_to_digits(bits: int) -> int:
    return int(math.floor((bits - 4) / LOG2_10))


def digits_of(x) -> int:
    """Decimal precision tag of a BigReal or BigComplex."""
    if isinstance(x, BigComplex):
        return bits_to_digits(min(x.precision))
    return bits_to_digits(x.precision)


@contextmanager
def working_precision(digits: int) -> Iterator[gmpy2.context]:
    """Run a block with MPFR results rounded to ``digits`` decimal digits."""
    if digits < 1:
        raise DomainError(f"digits must be positive, got {digits}")
    bits = digits_to_bits(digits)
    with gmpy2.context(gmpy2.get_context(), precision=bits,
                       real_prec=bits, imag_prec=bits) as ctx:
        yield ctx


def required_digits(g, target_digits: int, guard: int = GUARD_DIGITS) -> int:
    """Digits needed to resolve ``exp(-1/(3g))`` terms against O(1) energies.

    >>> required_digits(Fraction(1, 3), 30)
    51
    """
    g = to_fraction(g)
    if g <= 0:
        raise DomainError(f"coupling must be positive, got {g}")
    if target_digits < 1:
        raise DomainError("target_digits must be positive")
    if guard < GUARD_DIGITS:
        raise DomainError(f"guard must be at least {GUARD_DIGITS}")
    # 0.434 ~ log10(e); computed in exact arithmetic so that g = 1/3 gives 1
    exponent = Fraction(434, 1000) / (3 * g)
    return target_digits + math.ceil(exponent) + guard


def to_fraction(x) -> Fraction:
    """Exact rational value of an int, Fraction, decimal string or mpfr.

    A Python float is read through its shortest repr, so ``0.02`` means 1/50
    rather than the nearest binary double.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, type(mpz(0)))):
        return Fraction(int(x))
    if isinstance(x, type(mpq(0))):
        return Fraction(int(x.numerator), int(x.denominator))
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, BigReal):
        n, d = x.as_integer_ratio()
        return Fraction(int(n), int(d))
    if isinstance(x, float):
        return Fraction(repr(x))
    raise TypeError(f"cannot convert {type(x).__name__} to an exact rational")


def rational_to_big(x, digits: int) -> BigReal:
    """Correctly rounded BigReal for an exact rational at ``digits`` digits."""
    if digits < 1:
        raise DomainError("digits must be positive")
    x = to_fraction(x)
    return mpfr(mpq(x.numerator, x.denominator), digits_to_bits(digits))


def big(x, digits: int) -> BigReal:
    """Convert int/Fraction/str/mpfr to a BigReal tagged with ``digits``."""
    bits = digits_to_bits(digits)
    if isinstance(x, BigReal):
        return mpfr(x, bits)
    if isinstance(x, str):
        return mpfr(x, bits)
    return mpfr(mpq(*_num_den(to_fraction(x))), bits)


def _num_den(x: Fraction) -> tuple[int, int]:
    return x.numerator, x.denominator


def big_complex(re, im, digits: int) -> BigComplex:
    bits = digits_to_bits(digits)
    return mpc(big(re, digits), big(im, digits), (bits, bits))


def euler_gamma(digits: int) -> BigReal:
    with working_precision(digits):
        return gmpy2.const_euler()


def pi(digits: int) -> BigReal:
    with working_precision(digits):
        return gmpy2.const_pi()


# -- serialisation ---------------------------------------------------------
# Python caps int <-> str conversion at 4300 digits; mpz.digits() does not.

def int_to_str(n: int) -> str:
    return mpz(n).digits(10)


def str_to_int(s: str) -> int:
    return int(mpz(s.strip(), 10))


def format_rational(x: Fraction) -> str:
    """``"num/den"``, or ``"num"`` when the denominator is one."""
    if x.denominator == 1:
        return int_to_str(x.numerator)
    return f"{int_to_str(x.numerator)}/{int_to_str(x.denominator)}"


def parse_rational(text: str) -> Fraction:
    text = text.strip()
    if not text:
        raise ValueError("empty rational")
    if "/" in text:
        num, _, den = text.partition("/")
        d = str_to_int(den)
        if d == 0:
            raise ValueError("zero denominator")
        return Fraction(str_to_int(num), d)
    if any(c in text for c in ".eE"):
        return Fraction(text)
    return Fraction(str_to_int(text))


def format_big(x, digits: int | None = None) -> str:
    """Scientific notation with all stored digits (or ``digits`` of them)."""
    if isinstance(x, BigComplex):
        raise TypeError("format_big takes a real value; format parts separately")
    if digits is None:
        # enough decimal digits for an exact round trip of the stored bits
        digits = math.ceil(x.precision * math.log10(2)) + 1
    if gmpy2.is_zero(x):
        return "0.0e+0"
    if not gmpy2.is_finite(x):
        return str(x)
    mant, exp, _ = x.digits(10, digits)
    sign = ""
    if mant.startswith("-"):
        sign, mant = "-", mant[1:]
    mant = mant.rstrip("0") or "0"
    head, tail = mant[0], mant[1:] or "0"
    e = exp - 1
    return f"{sign}{head}.{tail}e{'+' if e >= 0 else '-'}{abs(e)}"


def parse_big(text: str, digits: int | None = None) -> BigReal:
    text = text.strip()
    if digits is None:
        mant = text.lower().split("e")[0].lstrip("+-").replace(".", "").lstrip("0")
        digits = max(len(mant), 17)
    return mpfr(text, digits_to_bits(digits))


def to_float(x) -> float:
    return float(x)


def log10_abs(x) -> float:
    """log10|x| for values far outside the double range."""
    if isinstance(x, BigComplex):
        x = abs(x)
    if gmpy2.is_zero(x):
        return float("-inf")
    with gmpy2.context(gmpy2.get_context(), precision=max(64, x.precision)):
        return float(gmpy2.log10(abs(x)))


def conj(z: BigComplex) -> BigComplex:
    """Complex conjugate at the operand's own precision."""
    re_bits, im_bits = z.precision
    with gmpy2.context(gmpy2.get_context(), precision=max(re_bits, im_bits),
                       real_prec=re_bits, imag_prec=im_bits):
        return z.conjugate()

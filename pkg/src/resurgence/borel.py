"""Borel transform, Pade continuation and lateral Laplace integrals.

For ``E(g) = sum eps_k g^k`` the Borel transform is ``B(t) = sum eps_k t^k/k!``
and the resummed value is ``(1/g) int_0^inf exp(-t/g) B(t) dt``.  ``B`` is
continued past its radius of convergence by a diagonal Pade approximant and
the integral is taken along a ray rotated off the positive real axis, which
carries the singularities.  The ray above the axis gives the ``g + i0`` sum,
the one below gives ``g - i0``.
"""

from __future__ import annotations

import json
import math
import statistics
import warnings
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Sequence

import gmpy2
from gmpy2 import mpc, mpfr, mpq

from .numerics import (
    BigComplex,
    DomainError,
    NumericalFailure,
    conj,
    digits_to_bits,
    format_big,
    to_fraction,
)
from .pade import PadeApproximant, PadeDegenerateError, exact_pade
from .perturbation import PerturbationSeries
from .quadrature import gauss_legendre, nodes_for_digits
from .roots import find_roots

__all__ = [
    "BorelSeries",
    "ContourSpec",
    "LateralSum",
    "Pole",
    "PoleReport",
    "QuadratureError",
    "PadeConditionWarning",
    "borel_transform",
    "pade_diagonal",
    "pade_poles",
    "inverse_borel",
    "borel_sum_numeric",
]

SPURIOUS_THRESHOLD = mpfr("1e-20")


class QuadratureError(NumericalFailure):
    """Panel refinement hit its cap; ``payload['achieved']`` is the tolerance reached."""


class PadeConditionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BorelSeries:
    coeffs: tuple[Fraction, ...]

    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    def __getitem__(self, k):
        return self.coeffs[k]


def borel_transform(series: PerturbationSeries | Sequence) -> BorelSeries:
    coeffs = series.coeffs if isinstance(series, PerturbationSeries) else tuple(series)
    if not coeffs:
        raise DomainError("empty series")
    out = []
    fact = 1
    for k, c in enumerate(coeffs):
        if k:
            fact *= k
        out.append(to_fraction(c) / fact)
    return BorelSeries(tuple(out))


def pade_diagonal(b: BorelSeries | Sequence, order: int | None = None) -> PadeApproximant:
    """``[ceil(K/2) / floor(K/2)]`` approximant of the first ``K + 1`` terms."""
    coeffs = b.coeffs if isinstance(b, BorelSeries) else tuple(b)
    K = len(coeffs) - 1 if order is None else order
    if K < 2:
        raise DomainError("diagonal Pade needs order K >= 2")
    if K > len(coeffs) - 1:
        raise DomainError(f"order {K} exceeds available coefficients ({len(coeffs) - 1})")
    return exact_pade(coeffs[: K + 1], (K + 1) // 2, K // 2)


# -- poles ------------------------------------------------------------------

@dataclass(frozen=True)
class Pole:
    location: BigComplex
    residue: BigComplex
    spurious: bool


@dataclass(frozen=True)
class PoleReport:
    poles: tuple[Pole, ...]
    digits: int
    order: int

    def real_positive(self) -> list:
        return sorted((p.location.real for p in self.poles
                       if p.location.imag == 0 and p.location.real > 0 and not p.spurious))

    def complex_genuine(self) -> list[Pole]:
        return [p for p in self.poles if p.location.imag != 0 and not p.spurious]

    def to_csv(self) -> str:
        lines = ["re,im,residue_re,residue_im,spurious,digits"]
        for p in self.poles:
            lines.append(",".join([
                format_big(p.location.real, self.digits), format_big(p.location.imag, self.digits),
                format_big(p.residue.real, self.digits), format_big(p.residue.imag, self.digits),
                "1" if p.spurious else "0", str(self.digits)]))
        return "\n".join(lines) + "\n"


def _poly_eval(coeffs_desc, z):
    acc = mpc(0)
    for c in coeffs_desc:
        acc = acc * z + c
    return acc


def pade_poles(p: PadeApproximant, digits: int, threshold=SPURIOUS_THRESHOLD,
               seed: int = 0) -> PoleReport:
    """Denominator roots with residues ``num(z) / (scale * den'(z))``.

    A pole whose ``|residue|`` is below ``threshold`` times the median
    ``|residue|`` is flagged as spurious (a Froissart pole/zero pair).
    """
    if p.denominator_degree < 1:
        raise DomainError("approximant has no poles")
    roots = find_roots(p.den_int, digits, seed=seed)
    bits = digits_to_bits(digits + 20)
    out = []
    with gmpy2.context(gmpy2.get_context(), precision=bits, real_prec=bits, imag_prec=bits):
        num = [mpfr(c) for c in reversed(p.num_int)]
        dden = [mpfr(k * c) for k, c in enumerate(p.den_int)][1:]
        dden_desc = list(reversed(dden))
        scale = mpfr(p.scale)
        residues = [_poly_eval(num, z) / (scale * _poly_eval(dden_desc, z)) for z in roots]
        mags = [abs(r) for r in residues]
        med = statistics.median(mags)
        for z, r, m in zip(roots, residues, mags):
            out.append(Pole(z, r, bool(m < threshold * med)))
    out.sort(key=lambda q: (float(q.location.real), float(q.location.imag)))
    return PoleReport(tuple(out), digits, p.order)


# -- contour ------------------------------------------------------------------

@dataclass(frozen=True)
class ContourSpec:
    theta: float = math.pi / 4
    t_cut: float = 1.4
    branch: str = "upper"

    def __post_init__(self):
        if self.branch not in ("upper", "lower"):
            raise DomainError(f"branch must be 'upper' or 'lower', got {self.branch!r}")
        if self.branch == "upper" and not 0 < self.theta < math.pi / 2:
            raise DomainError("upper branch needs 0 < theta < pi/2")
        if self.branch == "lower" and not -math.pi / 2 < self.theta < 0:
            raise DomainError("lower branch needs -pi/2 < theta < 0")
        if not self.t_cut > 1 / 3:
            raise DomainError("t_cut must exceed 1/3")

    @classmethod
    def for_branch(cls, branch: str, angle: float = math.pi / 4, t_cut: float = 1.4) -> "ContourSpec":
        angle = abs(angle)
        return cls(angle if branch == "upper" else -angle, t_cut, branch)

    def conjugate(self) -> "ContourSpec":
        return ContourSpec(-self.theta, self.t_cut, "lower" if self.branch == "upper" else "upper")


@dataclass
class LateralSum:
    g: Fraction
    K: int
    branch: str
    value: BigComplex
    quad_tol: object
    digits: int
    panels: int = 0
    warnings: list = field(default_factory=list)

    @property
    def re(self):
        return self.value.real

    @property
    def im(self):
        return self.value.imag

    def to_json(self) -> str:
        return json.dumps({
            "g": str(self.g), "K": self.K, "branch": self.branch,
            "re": format_big(self.value.real, self.digits),
            "im": format_big(self.value.imag, self.digits),
            "quad_tol_achieved": format_big(mpfr(self.quad_tol), 6),
            "digits": self.digits, "warnings": self.warnings,
        }, indent=1)


def _exp_ray(theta: float, bits: int):
    with gmpy2.context(gmpy2.get_context(), precision=bits, real_prec=bits, imag_prec=bits):
        th = mpfr(to_fraction(theta)) if isinstance(theta, str) else _theta_big(theta, bits)
        return mpc(gmpy2.cos(th), gmpy2.sin(th)), gmpy2.cos(th)


def _theta_big(theta, bits):
    # pi/4, pi/6 and their negatives are resolved exactly; other angles are
    # taken as given (any ray in the open quadrant gives the same integral)
    for num, den in ((1, 4), (1, 6), (1, 3), (1, 8), (1, 12)):
        ref = math.pi * num / den
        if abs(abs(theta) - ref) < 1e-15:
            return math.copysign(1, theta) * gmpy2.const_pi() * num / den
    return mpfr(theta)


def lateral_integral(evaluate: Callable, g, contour: ContourSpec, digits: int,
                     max_depth: int = 12, width: int = 2) -> tuple[BigComplex, object, int]:
    """``(1/g) int exp(-t/g) P(t) dt`` along ``t = s e^(i theta)``, ``Re t <= t_cut``.

    In ``u = s/g`` the integrand is ``e^(i theta) exp(-u e^(i theta)) P(g u e^(i theta))``.
    Composite Gauss-Legendre panels of width ``width`` are each compared with
    their two halves and bisected until the estimates agree to
    ``10^-(digits-10)`` relative to the running total.  The tail beyond the
    point where ``max|P| exp(-u cos theta) / cos theta`` drops below the
    tolerance is dropped.  Returns ``(value, achieved_tol, panel_count)``, where
    ``achieved_tol`` is at least the target.
    """
    bits = digits_to_bits(digits)
    gq = to_fraction(g)
    if gq <= 0:
        raise DomainError("coupling must be positive")
    n = nodes_for_digits(digits)
    xs, ws = gauss_legendre(n, digits)
    with gmpy2.context(gmpy2.get_context(), precision=bits, real_prec=bits, imag_prec=bits):
        gb = mpfr(mpq(gq.numerator, gq.denominator))
        ray, cos_t = _exp_ray(contour.theta, bits)
        t_cut = to_fraction(contour.t_cut)
        u_end = mpfr(mpq(t_cut.numerator, t_cut.denominator)) / (gb * cos_t)
        tol = mpfr(10) ** (-(digits - 10))

        def f(u):
            return ray * gmpy2.exp(-u * ray) * evaluate(gb * u * ray)

        def rule(a, b):
            half, mid = (b - a) / 2, (a + b) / 2
            s = mpc(0)
            for x, w in zip(xs, ws):
                s += w * f(mid + half * x)
            return s * half

        # |P| envelope along the ray for the tail bound
        samples = 48
        pmax_at = []
        for i in range(samples + 1):
            u = u_end * i / samples
            pmax_at.append(abs(evaluate(gb * u * ray)))

        def tail_bound(a):
            i0 = int(float(a / u_end) * samples)
            pm = max(pmax_at[max(0, i0 - 1):]) * 10
            return pm * gmpy2.exp(-a * cos_t) / cos_t

        total = mpc(0)
        achieved = mpfr(0)
        panels = 0
        a = mpfr(0)
        ref = None
        while a < u_end:
            b = min(a + width, u_end)
            stack = [(a, b, rule(a, b), 0)]
            while stack:
                lo, hi, whole, depth = stack.pop()
                m = (lo + hi) / 2
                left, right = rule(lo, m), rule(m, hi)
                refined = left + right
                if ref is None:
                    ref = max(abs(refined), mpfr(10) ** (-digits))
                err = abs(refined - whole)
                scale = max(abs(total), ref)
                if err <= tol * scale:
                    total += refined
                    achieved = max(achieved, err / scale)
                    panels += 1
                elif depth >= max_depth:
                    raise QuadratureError(
                        "panel refinement cap reached", achieved=str(err / scale),
                        at_u=str(lo), g=str(gq))
                else:
                    stack.append((m, hi, right, depth + 1))
                    stack.append((lo, m, left, depth + 1))
            a = b
            if a < u_end and tail_bound(a) <= tol * max(abs(total), ref) / 10:
                break
        # panel comparison cannot see rounding shared by a panel and its halves,
        # so the report never claims more than the target
        return total, max(achieved, tol), panels


def inverse_borel(p: PadeApproximant, g, contour: ContourSpec | None = None,
                  digits: int = 80, conjugate_lower: bool = True) -> LateralSum:
    """Lateral Borel sum of the series continued by the approximant ``p``.

    The lower branch is the conjugate of the upper one (real coefficients);
    ``conjugate_lower=False`` integrates along the lower ray instead.
    """
    contour = contour or ContourSpec()
    if digits < 20:
        raise DomainError("inverse_borel needs at least 20 digits")
    if contour.branch == "lower" and conjugate_lower:
        return _mirror(inverse_borel(p, g, contour.conjugate(), digits))
    r_end = contour.t_cut / math.cos(contour.theta)
    eval_digits = digits + _eval_guard(p, r_end)
    evaluate = p.evaluator(eval_digits)
    value, achieved, panels = lateral_integral(evaluate, g, contour, digits)
    return LateralSum(to_fraction(g), p.order, contour.branch, value, achieved, digits, panels)


def _mirror(s: LateralSum) -> LateralSum:
    return replace(s, branch="lower" if s.branch == "upper" else "upper", value=conj(s.value))


def _eval_guard(p: PadeApproximant, r: float) -> int:
    """Guard digits for Horner evaluation of ``num`` and ``den`` at ``|t| <= r``."""
    loss = 0.0
    for cs in (p.num_int, p.den_int):
        terms = [abs(mpfr(c)) * mpfr(r) ** k for k, c in enumerate(cs)]
        big_term = max(terms)
        const = abs(mpfr(cs[0])) if cs[0] != 0 else big_term
        loss = max(loss, float(gmpy2.log10(big_term / const)) if const else 0.0)
    return 10 + int(math.ceil(loss))


# -- numeric-coefficient route -----------------------------------------------

@dataclass(frozen=True)
class NumericPade:
    num: tuple
    den: tuple
    condition: object
    reduction: int
    digits: int

    def evaluator(self, digits: int):
        bits = digits_to_bits(digits)
        num_r = [mpfr(c, bits) for c in reversed(self.num)]
        den_r = [mpfr(c, bits) for c in reversed(self.den)]

        def evaluate(t):
            with gmpy2.context(gmpy2.get_context(), precision=bits, real_prec=bits, imag_prec=bits):
                return _poly_eval(num_r, t) / _poly_eval(den_r, t)
        return evaluate


def _solve_dense(A, rhs):
    """Gaussian elimination with partial pivoting; returns (x, inverse)."""
    n = len(A)
    aug = [list(A[i]) + [rhs[i]] + [mpfr(1) if j == i else mpfr(0) for j in range(n)]
           for i in range(n)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(aug[r][col]))
        if aug[piv][col] == 0:
            return None, None
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col] / pv
                row_c = aug[col]
                aug[r] = [x - f * y for x, y in zip(aug[r], row_c)]
    x = [aug[i][n] / aug[i][i] for i in range(n)]
    inv = [[aug[i][n + 1 + j] / aug[i][i] for j in range(n)] for i in range(n)]
    return x, inv


def numeric_pade(b: Sequence, L: int, M: int, digits: int) -> NumericPade:
    """``[L/M]`` approximant of numeric Taylor coefficients in mpfr arithmetic.

    A singular (or numerically singular) Hankel system lowers ``M`` by one and
    raises ``L`` by one, as in the exact route.
    """
    bits = digits_to_bits(digits + 20)
    reduction = 0
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        b = [mpfr(c) for c in b]
        small = mpfr(10) ** (-(digits // 2))
        while True:
            if M == 0:
                num = tuple(b[: L + 1])
                return NumericPade(num, (mpfr(1),), mpfr(1), reduction, digits)
            A = [[b[k - j] if k - j >= 0 else mpfr(0) for j in range(1, M + 1)]
                 for k in range(L + 1, L + M + 1)]
            rhs = [-b[k] for k in range(L + 1, L + M + 1)]
            q, inv = _solve_dense(A, rhs)
            norm_a = max(sum(abs(x) for x in row) for row in A) if A else mpfr(0)
            if q is not None:
                norm_inv = max(sum(abs(x) for x in row) for row in inv)
                cond = norm_a * norm_inv
                if cond * small < 1:
                    break
            if reduction and M == 1:
                raise PadeDegenerateError("Pade degenerate: denominator degree reduced to zero",
                                          requested=[L - reduction, M + reduction],
                                          reductions=reduction)
            L, M, reduction = L + 1, M - 1, reduction + 1
        den = [mpfr(1)] + q
        num = []
        for k in range(L + 1):
            num.append(sum((den[j] * b[k - j] for j in range(min(k, M) + 1)), mpfr(0)))
        return NumericPade(tuple(num), tuple(den), cond, reduction, digits)


def borel_sum_numeric(coeffs: Sequence, g, contour: ContourSpec | None = None,
                      digits: int = 60, conjugate_lower: bool = True) -> LateralSum:
    """Lateral Borel-Pade sum of a series known only through numeric coefficients."""
    if len(coeffs) < 4:
        raise DomainError("borel_sum_numeric needs at least 4 coefficients")
    contour = contour or ContourSpec()
    if contour.branch == "lower" and conjugate_lower:
        return _mirror(borel_sum_numeric(coeffs, g, contour.conjugate(), digits))
    K = len(coeffs) - 1
    bits = digits_to_bits(digits + 20)
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        fact = mpfr(1)
        b = []
        for k, c in enumerate(coeffs):
            if k:
                fact *= k
            c = mpfr(mpq(*_as_pair(c))) if isinstance(c, (Fraction, int)) else mpfr(c)
            b.append(c / fact)
    pade = numeric_pade(b, (K + 1) // 2, K // 2, digits)
    notes = []
    if pade.condition > mpfr(10) ** (digits // 4):
        msg = f"Pade Hankel system condition number {format_big(mpfr(pade.condition), 3)}"
        warnings.warn(msg, PadeConditionWarning, stacklevel=2)
        notes.append(msg)
    if pade.reduction:
        notes.append(f"denominator degree reduced {pade.reduction} time(s)")
    value, achieved, panels = lateral_integral(pade.evaluator(digits + 10), g, contour, digits)
    return LateralSum(to_fraction(g), K, contour.branch, value, achieved, digits, panels, notes)


def _as_pair(c):
    c = Fraction(c)
    return c.numerator, c.denominator

"""Residuals between lateral Borel sums, the two-instanton sector and Fock energies.

With ``s = e^(-1/3g)/g`` and ``L = ln(2/g)``

    Delta_I^K = (Im E_B(g+i0) + Im E^(2),K(g+i0)) / s
    Delta_R^K = (Re E_B + Re E^(2),K - E_Fock) / (s L / pi)

Both vanish like ``g^(K+1)`` when the sectors cancel; the remainders are
fitted for the next coefficients.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import gmpy2
from gmpy2 import mpfr, mpq

from .borel import ContourSpec, LateralSum, borel_sum_numeric
from .fock import FockResult
from .instanton import (
    InstantonCoefficients,
    TwoInstantonEval,
    known_coefficients,
)
from .numerics import (
    DomainError,
    NumericalFailure,
    digits_to_bits,
    format_big,
    to_fraction,
)

__all__ = [
    "DeltaRecord",
    "SlopeFit",
    "CoefficientEstimate",
    "BranchMismatchError",
    "FitError",
    "imaginary_scale",
    "real_scale",
    "compute_delta",
    "fit_loglog_slope",
    "extract_coefficients",
    "borel_improved_delta",
    "log_grid",
    "deltas_to_csv",
    "estimates_to_csv",
]


class BranchMismatchError(DomainError):
    pass


class FitError(NumericalFailure):
    pass


def _ctx(digits: int):
    bits = digits_to_bits(digits)
    return gmpy2.context(gmpy2.get_context(), precision=bits, real_prec=bits, imag_prec=bits)


def _big(x):
    x = to_fraction(x)
    return mpfr(mpq(x.numerator, x.denominator))


def imaginary_scale(g, digits: int):
    """``e^(-1/3g) / g``."""
    with _ctx(digits + 10):
        gb = _big(g)
        v = gmpy2.exp(-1 / (3 * gb)) / gb
    return mpfr(v, digits_to_bits(digits))


def real_scale(g, digits: int):
    """``e^(-1/3g) ln(2/g) / (pi g)``."""
    with _ctx(digits + 10):
        gb = _big(g)
        v = gmpy2.exp(-1 / (3 * gb)) * gmpy2.log(2 / gb) / (gmpy2.const_pi() * gb)
    return mpfr(v, digits_to_bits(digits))


def log_grid(g_min, g_max, count: int) -> list[Fraction]:
    """``count`` log-spaced couplings, rounded to 12 significant digits."""
    g_min, g_max = to_fraction(g_min), to_fraction(g_max)
    if count < 2 or not 0 < g_min < g_max:
        raise DomainError("need 0 < g_min < g_max and count >= 2")
    out = []
    lo, hi = math.log(float(g_min)), math.log(float(g_max))
    for i in range(count):
        if i == 0:
            out.append(to_fraction(g_min))
        elif i == count - 1:
            out.append(to_fraction(g_max))
        else:
            v = math.exp(lo + (hi - lo) * i / (count - 1))
            out.append(Fraction(f"{v:.12g}"))
    return out


@dataclass(frozen=True)
class DeltaRecord:
    g: Fraction
    K: int
    delta_I: object
    delta_R: object = None
    borel_im_scaled: object = None      # Im E_B / s
    borel_digits: int = 0
    fock_M: int | None = None
    fock_digits: int | None = None
    delta_I_err: object = None          # absolute uncertainty of delta_I
    delta_R_err: object = None
    K_real: int | None = None


def compute_delta(g, K: int, e_borel: LateralSum, e2: TwoInstantonEval,
                  e_fock: FockResult | None = None, digits: int | None = None) -> DeltaRecord:
    """Normalised residuals for one coupling (upper branch by convention)."""
    g = to_fraction(g)
    branch = getattr(e_borel, "branch", "upper")
    if branch != e2.branch:
        raise BranchMismatchError(f"Borel sum on {branch!r} branch, instanton term on {e2.branch!r}")
    if to_fraction(e2.g) != g or (getattr(e_borel, "g", g) != g):
        raise DomainError("inputs evaluated at different couplings")
    value = e_borel.value if isinstance(e_borel, LateralSum) else e_borel
    bd = e_borel.digits if isinstance(e_borel, LateralSum) else digits
    digits = digits or min(bd, e2.digits)
    with _ctx(digits + 10):
        s = imaginary_scale(g, digits + 10)
        im_b = value.imag / s
        dI = im_b + e2.value.imag / s
        in_err = mpfr(10) ** (-(bd - 10)) / s
        if e2.error is not None:
            in_err += e2.error[1] / s
        dR = dR_err = None
        if e_fock is not None:
            r = real_scale(g, digits + 10)
            dR = (value.real + e2.value.real - e_fock.mean) / r
            dR_err = (mpfr(10) ** (-(bd - 10)) + mpfr(10) ** (-e_fock.digits)) / r
            if e2.error is not None:
                dR_err += e2.error[0] / r
    bits = digits_to_bits(digits)
    rnd = (lambda v: None if v is None else mpfr(v, bits))
    return DeltaRecord(
        g=g, K=K, delta_I=rnd(dI), delta_R=rnd(dR), borel_im_scaled=rnd(im_b),
        borel_digits=bd, fock_M=e_fock.M if e_fock else None,
        fock_digits=e_fock.digits if e_fock else None,
        delta_I_err=rnd(in_err), delta_R_err=rnd(dR_err))


def deltas_to_csv(records: Sequence[DeltaRecord], digits: int = 20) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["g", "K", "delta_I", "delta_R", "borel_digits", "fock_M", "fock_digits"])
    for r in records:
        w.writerow([str(r.g), r.K, format_big(r.delta_I, digits),
                    "" if r.delta_R is None else format_big(r.delta_R, digits),
                    r.borel_digits, r.fock_M or "", r.fock_digits or ""])
    return buf.getvalue()


# -- slope fits -----------------------------------------------------------------

@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    window: tuple
    count: int
    residual_mean: float = 0.0

    def to_json(self, **extra) -> str:
        d = {"slope": self.slope, "stderr": self.stderr, "intercept": self.intercept,
             "window": [str(self.window[0]), str(self.window[1])], "points": self.count}
        d.update(extra)
        return json.dumps(d, indent=1)


def fit_loglog_slope(points: Sequence[tuple], window: tuple | None = None) -> SlopeFit:
    """OLS of ``ln|Delta|`` on ``ln g`` over the points inside ``window``."""
    pts = [(to_fraction(g), d) for g, d in points]
    if window is not None:
        lo, hi = to_fraction(window[0]), to_fraction(window[1])
        pts = [(g, d) for g, d in pts if lo <= g <= hi]
    zeros = [str(g) for g, d in pts if d == 0]
    if zeros:
        raise FitError("zero residual inside fit window", offending_g=zeros)
    signs = [d > 0 for _, d in pts]
    if pts and 0 < sum(signs) < len(signs):
        majority = sum(signs) * 2 >= len(signs)
        bad = [str(g) for (g, _), s in zip(pts, signs) if s != majority]
        raise FitError("residual changes sign inside fit window", offending_g=bad)
    if len(pts) < 3:
        raise FitError("need at least three points for a slope fit", points=len(pts))
    with _ctx(40):
        xs = [gmpy2.log(_big(g)) for g, _ in pts]
        ys = [gmpy2.log(abs(mpfr(d))) for _, d in pts]
        n = len(xs)
        mx = sum(xs) / n
        my = sum(ys) / n
        sxx = sum((x - mx) ** 2 for x in xs)
        sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
        slope = sxy / sxx
        icpt = my - slope * mx
        res = [y - (icpt + slope * x) for x, y in zip(xs, ys)]
        rss = sum(r * r for r in res)
        se = gmpy2.sqrt(rss / (n - 2) / sxx) if n > 2 else mpfr(0)
        rmean = sum(res) / n
    g_lo, g_hi = min(g for g, _ in pts), max(g for g, _ in pts)
    return SlopeFit(float(slope), float(se), float(icpt), (g_lo, g_hi), n, float(rmean))


# -- coefficient extraction ---------------------------------------------------

@dataclass(frozen=True)
class CoefficientEstimate:
    l: int
    k: int
    value: object
    error: object
    method: dict = field(default_factory=dict)

    def covers(self, exact, factor=1) -> bool:
        bits = max(self.value.precision, getattr(exact, "precision", 0))
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            return abs(mpfr(exact) - self.value) <= self.error * factor


def estimates_to_csv(estimates: Sequence[CoefficientEstimate], digits: int = 20) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["l", "k", "value", "error", "digits"])
    for e in estimates:
        w.writerow([e.l, e.k, format_big(e.value, digits), format_big(e.error, 3), digits])
    return buf.getvalue()


def _weighted_lstsq(rows, ys, ws, cond_limit):
    """Weighted least squares by normal equations on equilibrated columns.

    Returns ``(coef, covariance_unscaled, residuals, pinv_rows, condition)``.
    """
    n, p = len(rows), len(rows[0])
    A = [[r[j] * w for j in range(p)] for r, w in zip(rows, ws)]
    b = [y * w for y, w in zip(ys, ws)]
    norms = [gmpy2.sqrt(sum(A[i][j] ** 2 for i in range(n))) for j in range(p)]
    if any(c == 0 for c in norms):
        raise FitError("basis column vanishes on the grid")
    As = [[A[i][j] / norms[j] for j in range(p)] for i in range(n)]
    N = [[sum(As[i][a] * As[i][c] for i in range(n)) for c in range(p)] for a in range(p)]
    inv = _invert(N)
    if inv is None:
        raise FitError("singular design matrix", condition="inf")
    cond = max(sum(abs(x) for x in row) for row in N) * max(sum(abs(x) for x in row) for row in inv)
    if cond > cond_limit:
        raise FitError("ill-conditioned design matrix", condition=format_big(mpfr(cond), 4))
    # pinv = N^-1 As^T, rescaled back to the original columns
    pinv = [[sum(inv[a][c] * As[i][c] for c in range(p)) / norms[a] for i in range(n)]
            for a in range(p)]
    coef = [sum(pinv[a][i] * b[i] for i in range(n)) for a in range(p)]
    cov = [[inv[a][c] / (norms[a] * norms[c]) for c in range(p)] for a in range(p)]
    res = [b[i] - sum(A[i][j] * coef[j] for j in range(p)) for i in range(n)]
    return coef, cov, res, pinv, cond


def _invert(N):
    p = len(N)
    aug = [list(N[i]) + [mpfr(1) if j == i else mpfr(0) for j in range(p)] for i in range(p)]
    for col in range(p):
        piv = max(range(col, p), key=lambda r: abs(aug[r][col]))
        if aug[piv][col] == 0:
            return None
        aug[col], aug[piv] = aug[piv], aug[col]
        pv = aug[col][col]
        aug[col] = [x / pv for x in aug[col]]
        for r in range(p):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[col])]
    return [row[p:] for row in aug]


def _channel_data(records, channel, digits):
    """Return (g, L, y, y_err) with ``y`` the un-normalised remainder series."""
    out = []
    for r in records:
        gb = _big(r.g)
        L = gmpy2.log(2 / gb)
        if channel == "imaginary":
            y, err = -r.delta_I, r.delta_I_err or mpfr(0)
        else:
            if r.delta_R is None:
                raise DomainError(f"record at g={r.g} has no real residual")
            y, err = -L * r.delta_R, L * (r.delta_R_err or mpfr(0))
        out.append((r.g, gb, L, mpfr(y), mpfr(err)))
    return out


def _basis(channel, K, k_max):
    if channel == "imaginary":
        return [(1, k) for k in range(K + 1, k_max + 1)]
    terms = []
    for k in range(K + 1, k_max + 1):
        terms.append((0, k))
        terms.append((1, k))
    return terms


def _fit_once(data, channel, K, k_max, cond_limit):
    terms = _basis(channel, K, k_max)
    rows, ys, ws = [], [], []
    for _, gb, L, y, _ in data:
        rows.append([gb ** k * (L if l == 1 and channel == "real" else 1) for l, k in terms])
        ys.append(y)
        ws.append(1 / gb ** (K + 1))
    coef, cov, res, pinv, cond = _weighted_lstsq(rows, ys, ws, cond_limit)
    return terms, coef, cov, res, pinv, cond, ws


def extract_coefficients(records: Sequence[DeltaRecord], channel: str,
                         known: InstantonCoefficients | None = None, k_max: int = 6,
                         digits: int = 40, window: tuple | None = None,
                         cond_limit=mpfr("1e60")) -> list[CoefficientEstimate]:
    """Fit the remainder of a channel for the coefficients ``K < k <= k_max``.

    Imaginary channel: ``-Delta_I^K = sum_{k>K} eps_{21k} g^k``.
    Real channel: ``-L Delta_R^K = sum_{k>K} (eps_{20k} + L eps_{21k}) g^k``.
    ``K = -1`` (nothing subtracted) is allowed.  Error bars are the maximum of
    the covariance estimate, the spread across three shifted sub-windows and
    the propagated input uncertainty.
    """
    if channel not in ("imaginary", "real"):
        raise DomainError("channel must be 'imaginary' or 'real'")
    records = sorted(records, key=lambda r: r.g)
    if window is not None:
        lo, hi = to_fraction(window[0]), to_fraction(window[1])
        records = [r for r in records if lo <= r.g <= hi]
    Ks = {r.K for r in records}
    if len(Ks) != 1:
        raise DomainError("records must share the subtraction order K")
    K = Ks.pop()
    nterms = len(_basis(channel, K, k_max))
    if nterms < 1:
        raise DomainError("k_max must exceed K")
    need = nterms + 2
    if len(records) < need:
        raise FitError("insufficient points for extraction", have=len(records), need=need)
    with _ctx(digits + 40):
        data = _channel_data(records, channel, digits)
        terms, coef, cov, res, pinv, cond, ws = _fit_once(data, channel, K, k_max, cond_limit)
        n, p = len(data), len(terms)
        sigma2 = sum(r * r for r in res) / (n - p) if n > p else mpfr(0)
        cov_err = [gmpy2.sqrt(abs(cov[a][a]) * sigma2) for a in range(p)]
        spreads = [mpfr(0)] * p
        m = n - 2
        if m >= p + 1:
            for off in range(3):
                sub = data[off:off + m]
                _, c2, *_ = _fit_once(sub, channel, K, k_max, cond_limit)
                spreads = [max(s, abs(a - b)) for s, a, b in zip(spreads, c2, coef)]
        prop = [gmpy2.sqrt(sum((pinv[a][i] * ws[i] * data[i][4]) ** 2 for i in range(n)))
                for a in range(p)]
        out = []
        g_lo, g_hi = data[0][0], data[-1][0]
        for a, (l, k) in enumerate(terms):
            err = max(cov_err[a], spreads[a], prop[a])
            meta = {"channel": channel, "K": K, "k_max": k_max, "points": n,
                    "window": [str(g_lo), str(g_hi)], "condition": format_big(mpfr(cond), 3),
                    "cov": format_big(cov_err[a], 3), "spread": format_big(spreads[a], 3),
                    "input": format_big(prop[a], 3)}
            bits = digits_to_bits(digits)
            out.append(CoefficientEstimate(l, k, mpfr(coef[a], bits), mpfr(err, bits), meta))
    return out


# -- Borel-improved instanton sector -----------------------------------------------

def borel_improved_delta(record: DeltaRecord, coeffs: InstantonCoefficients | None = None,
                         digits: int = 60, K: int | None = None,
                         channel: str = "imaginary", e_fock: FockResult | None = None,
                         e_borel: LateralSum | None = None,
                         contour: ContourSpec | None = None):
    """Residual with the instanton series ``sum_k eps_{2lk} g^k`` Borel-Pade summed.

    Only the real part of each lateral sum enters; the imaginary part of a
    lateral sum of the ``l`` series is an ``e^(-1/3g)``-suppressed ambiguity
    belonging to a higher sector.
    """
    coeffs = coeffs or known_coefficients()
    g = record.g
    if channel == "imaginary":
        K = coeffs.max_k(2, 1) if K is None else K
        if K + 1 < 4:
            raise DomainError("Borel summation of the instanton series needs >= 4 coefficients")
        series = coeffs.series(2, 1, K, digits + 10)
        s1 = borel_sum_numeric(series, g, contour, digits)
        if record.borel_im_scaled is None:
            raise DomainError("record lacks the scaled Borel imaginary part")
        with _ctx(digits):
            return record.borel_im_scaled + s1.value.real
    if channel != "real":
        raise DomainError("channel must be 'imaginary' or 'real'")
    if e_fock is None or e_borel is None:
        raise DomainError("real channel needs the Fock energy and the Borel sum")
    K1 = coeffs.max_k(2, 1) if K is None else K
    K0 = coeffs.max_k(2, 0) if K is None else min(K, coeffs.max_k(2, 0))
    if min(K0, K1) + 1 < 4:
        raise DomainError("Borel summation of the instanton series needs >= 4 coefficients")
    s0 = borel_sum_numeric(coeffs.series(2, 0, K0, digits + 10), g, contour, digits)
    s1 = borel_sum_numeric(coeffs.series(2, 1, K1, digits + 10), g, contour, digits)
    with _ctx(digits):
        gb = _big(g)
        L = gmpy2.log(2 / gb)
        pre = gmpy2.exp(-1 / (3 * gb)) / (gmpy2.const_pi() * gb)
        e2 = pre * (s0.value.real + L * s1.value.real)
        return (e_borel.value.real + e2 - e_fock.mean) / real_scale(g, digits)

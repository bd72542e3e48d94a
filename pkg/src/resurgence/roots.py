"""Simultaneous polynomial root finding in arbitrary precision.

Aberth-Ehrlich iteration started from Bini's Newton-polygon circles.  All
arithmetic is gmpy2 ``mpc`` at a caller-chosen precision; the coefficient list
may hold exact integers or rationals, which are rounded once on entry.
"""

from __future__ import annotations

import math
import random
from typing import Sequence

import gmpy2
from gmpy2 import mpc, mpfr, mpq, mpz

from .numerics import NumericalFailure, digits_to_bits


class RootFindingError(NumericalFailure):
    """Iteration cap reached; ``payload['roots']`` holds the last iterates."""


def _to_mpfr(c, bits):
    if isinstance(c, (int, type(mpz(0)))):
        return mpfr(c, bits)
    if hasattr(c, "numerator") and hasattr(c, "denominator") and not isinstance(c, float):
        return mpfr(mpq(int(c.numerator), int(c.denominator)), bits)
    return mpfr(c, bits)


def _upper_hull(points: list[tuple[int, float]]) -> list[int]:
    hull: list[tuple[int, float]] = []
    for p in points:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return [x for x, _ in hull]


def initial_guesses(coeffs: Sequence, bits: int, seed: int = 0) -> list:
    """Starting points on circles whose radii come from the Newton polygon.

    ``coeffs`` are in ascending order of degree.
    """
    n = len(coeffs) - 1
    logs = []
    for k, c in enumerate(coeffs):
        if c != 0:
            logs.append((k, float(gmpy2.log(abs(_to_mpfr(c, 64))))))
    ks = _upper_hull(logs)
    lookup = dict(logs)
    rng = random.Random(seed)
    out = []
    two_pi = 2 * math.pi
    for a, b in zip(ks, ks[1:]):
        m = b - a
        r = math.exp((lookup[a] - lookup[b]) / m)
        shift = rng.random() * two_pi
        for j in range(m):
            ang = two_pi * j / m + shift + 0.7 / n
            out.append(mpc(mpfr(r * math.cos(ang), bits), mpfr(r * math.sin(ang), bits)))
    # zero roots from a vanishing constant term
    out = [mpc(0)] * ks[0] + out
    return out


def _horner(rev, z):
    """p(z) and p'(z) for coefficients in descending order."""
    p = rev[0]
    dp = mpc(0)
    for c in rev[1:]:
        dp = dp * z + p
        p = p * z + c
    return p, dp


def _horner_abs(rev_abs, r):
    s = rev_abs[0]
    for c in rev_abs[1:]:
        s = s * r + c
    return s


def aberth(coeffs: Sequence, digits: int, max_iter: int = 400,
           restarts: int = 3, seed: int = 0, start: Sequence | None = None) -> list:
    """All roots of ``sum coeffs[k] z^k`` at ``digits`` decimal digits.

    A root is frozen once ``|p(z)|`` is within a few rounding units of the
    evaluation error bound, or its Aberth correction is below ``10^-digits``
    relative.  Unconverged roots are nudged randomly (seeded) and iterated
    again up to ``restarts`` times before :class:`RootFindingError` is raised.
    """
    coeffs = list(coeffs)
    while coeffs and coeffs[-1] == 0:
        coeffs.pop()
    n = len(coeffs) - 1
    if n < 1:
        raise ValueError("polynomial must have degree at least one")
    bits = digits_to_bits(digits)
    ctx = gmpy2.context(gmpy2.get_context(), precision=bits, real_prec=bits, imag_prec=bits)
    with ctx:
        lead = _to_mpfr(coeffs[-1], bits)
        rev = [_to_mpfr(c, bits) / lead for c in reversed(coeffs)]
        rev_abs = [abs(c) for c in rev]
        eps = mpfr(2) ** (-bits + 4)
        tol = mpfr(10) ** (-digits)
        z = list(start) if start is not None else initial_guesses(coeffs, bits, seed)
        z = [mpc(v) for v in z]
        if len(z) != n:
            raise ValueError("start vector has the wrong length")
        done = [False] * n
        rng = random.Random(seed + 1)
        it_total = 0
        for attempt in range(restarts + 1):
            for _ in range(max_iter):
                it_total += 1
                active = False
                for i in range(n):
                    if done[i]:
                        continue
                    zi = z[i]
                    p, dp = _horner(rev, zi)
                    if p == 0:
                        done[i] = True
                        continue
                    bound = _horner_abs(rev_abs, abs(zi)) * eps * 4 * n
                    if abs(p) <= bound:
                        done[i] = True
                        continue
                    active = True
                    ratio = p / dp if dp != 0 else mpc(1)
                    s = mpc(0)
                    for j in range(n):
                        if j != i:
                            d = zi - z[j]
                            if d != 0:
                                s += 1 / d
                    denom = 1 - ratio * s
                    w = ratio / denom if denom != 0 else ratio
                    z[i] = zi - w
                    if abs(w) <= tol * max(abs(z[i]), tol):
                        done[i] = True
                if not active:
                    return z
            if all(done):
                return z
            for i in range(n):
                if not done[i]:
                    r = abs(z[i]) + 1
                    z[i] += mpc(mpfr(rng.uniform(-1, 1)) * r * mpfr("1e-3"),
                                mpfr(rng.uniform(-1, 1)) * r * mpfr("1e-3"))
        raise RootFindingError(
            f"Aberth iteration did not converge within {max_iter} steps "
            f"and {restarts} restarts",
            roots=[(str(v.real), str(v.imag)) for v in z],
            converged=[bool(d) for d in done], iterations=it_total)


def symmetrize_conjugates(roots: list, tol) -> list:
    """Snap roots of a real polynomial to exact conjugate pairs.

    Roots with ``|Im z| <= tol * max(1, |z|)`` become real; every other root
    in the upper half plane is paired with its nearest lower-half partner and
    both are replaced by the averaged pair.
    """
    real, upper, lower = [], [], []
    for z in roots:
        scale = max(abs(z), 1)
        if abs(z.imag) <= tol * scale:
            real.append(mpc(z.real, 0))
        elif z.imag > 0:
            upper.append(z)
        else:
            lower.append(z)
    if len(upper) != len(lower):
        # an odd split means a near-real root sits just outside tolerance;
        # leave the set untouched rather than invent a partner
        return list(roots)
    out = list(real)
    remaining = list(lower)
    for u in upper:
        j = min(range(len(remaining)), key=lambda k: abs(remaining[k] - u.conjugate()))
        v = remaining.pop(j)
        zr = (u.real + v.real) / 2
        zi = (u.imag - v.imag) / 2
        out.append(mpc(zr, zi))
        out.append(mpc(zr, -zi))
    return out


def polish(coeffs: Sequence, roots: list, digits: int, steps: int = 3) -> list:
    """A few Newton steps at ``digits`` starting from ``roots``."""
    bits = digits_to_bits(digits)
    with gmpy2.context(gmpy2.get_context(), precision=bits, real_prec=bits, imag_prec=bits):
        rev = [_to_mpfr(c, bits) for c in reversed(list(coeffs))]
        out = []
        for z in roots:
            z = mpc(z)
            for _ in range(steps):
                p, dp = _horner(rev, z)
                if dp == 0 or p == 0:
                    break
                z = z - p / dp
            out.append(z)
    return out


def find_roots(coeffs: Sequence, digits: int, seed: int = 0, max_iter: int = 400,
               restarts: int = 3) -> list:
    """Roots accurate to ``digits`` digits, checked at doubled precision.

    The polynomial is solved at ``digits + 20`` and the roots re-iterated at
    twice that precision; if any root moves by more than ``10^-digits``
    (relative) the whole solve is repeated at the higher precision.
    """
    work = digits + 20
    roots = aberth(coeffs, work, max_iter=max_iter, restarts=restarts, seed=seed)
    for _ in range(6):
        hi = 2 * work
        refined = aberth(coeffs, hi, max_iter=max_iter, restarts=restarts,
                         seed=seed, start=roots)
        tol = mpfr(10) ** (-digits)
        moved = max(abs(a - b) / max(abs(b), 1) for a, b in zip(roots, refined))
        roots = refined
        if moved <= tol:
            break
        work = hi
    else:
        raise RootFindingError("root precision did not stabilise",
                               roots=[(str(v.real), str(v.imag)) for v in roots])
    bits = digits_to_bits(work)
    with gmpy2.context(gmpy2.get_context(), precision=bits, real_prec=bits, imag_prec=bits):
        return symmetrize_conjugates(roots, mpfr(10) ** (-digits))

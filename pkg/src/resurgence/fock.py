"""Cut Fock space eigenvalues of the double well.

The Hamiltonian is written in the oscillator basis ``|n>`` of frequency
``omega`` centred on the barrier top ``x = 1/(2 sqrt g)``.  With
``y = x - 1/(2 sqrt g)`` the potential is ``1/(32g) - y^2/4 + (g/2) y^4``, so
in terms of ladder operators (``y = (a + a^+)/sqrt(2 omega)``)

    <n|H|n>     = omega/4 (2n+1) + 1/(32g) - (2n+1)/(8 omega)
                  + g/(8 omega^2) (6n^2 + 6n + 3)
    <n|H|n+2>   = sqrt((n+1)(n+2)) (-omega/4 - 1/(8 omega) + g (4n+6)/(8 omega^2))
    <n|H|n+4>   = g/(8 omega^2) sqrt((n+1)(n+2)(n+3)(n+4))

and every element with odd ``n - m`` vanishes.  Even and odd ``n`` therefore
decouple into two pentadiagonal blocks.  Eigenvalues are located by Sylvester
inertia counts of ``H - lam`` from an LDL^T recurrence; Newton steps on
``log det`` accelerate the bisection and the result is certified by counts on
both sides.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import gmpy2
from gmpy2 import mpfr, mpq

from .numerics import (
    DomainError,
    NumericalFailure,
    digits_to_bits,
    format_big,
    to_fraction,
)

GUARD = 30


def _ctx(digits: int):
    bits = digits_to_bits(digits + GUARD)
    return gmpy2.context(gmpy2.get_context(), precision=bits)


def _big(x):
    x = to_fraction(x)
    return mpfr(mpq(x.numerator, x.denominator))


@dataclass(frozen=True)
class FockProblem:
    g: Fraction
    M: int
    omega: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "g", to_fraction(self.g))
        object.__setattr__(self, "omega", to_fraction(self.omega))
        if self.g <= 0:
            raise DomainError("coupling must be positive")
        if self.M < 2:
            raise DomainError("cut-off M must be at least 2")
        if self.omega <= 0:
            raise DomainError("basis frequency must be positive")

    def center(self, digits: int):
        with _ctx(digits):
            return 1 / (2 * gmpy2.sqrt(_big(self.g)))

    def barrier_height(self) -> Fraction:
        return 1 / (32 * self.g)

    def potential(self, x, digits: int):
        """``V(x) = x^2 (1 - sqrt(g) x)^2 / 2`` in the original coordinate."""
        with _ctx(digits):
            x = mpfr(x)
            return x * x * (1 - gmpy2.sqrt(_big(self.g)) * x) ** 2 / 2

    def shifted_potential(self, y, digits: int):
        with _ctx(digits):
            y = mpfr(y)
            g = _big(self.g)
            return 1 / (32 * g) - y * y / 4 + g / 2 * y ** 4

    def x_element(self, n: int, m: int, digits: int):
        """``<n|X|m>`` in the shifted basis."""
        with _ctx(digits):
            val = mpfr(0)
            if n == m:
                val += self.center(digits)
            w = _big(self.omega)
            if m == n + 1:
                val += gmpy2.sqrt(mpfr(m)) / gmpy2.sqrt(2 * w)
            if n == m + 1:
                val += gmpy2.sqrt(mpfr(n)) / gmpy2.sqrt(2 * w)
            return val


@dataclass(frozen=True)
class BandedSymmetricMatrix:
    """Symmetric matrix stored by diagonal offset (0, 2 and 4 only)."""

    diagonals: dict
    digits: int

    @property
    def dimension(self) -> int:
        return len(self.diagonals[0])

    def entry(self, n: int, m: int):
        d = abs(n - m)
        if d not in self.diagonals:
            return mpfr(0)
        band = self.diagonals[d]
        i = min(n, m)
        return band[i] if i < len(band) else mpfr(0)

    def to_dense(self) -> list[list]:
        N = self.dimension
        return [[self.entry(i, j) for j in range(N)] for i in range(N)]

    def parity_blocks(self) -> tuple:
        """``(even, odd)`` blocks as ``(diag, off1, off2)`` triples."""
        diag, off2, off4 = self.diagonals[0], self.diagonals[2], self.diagonals[4]
        N = self.dimension
        out = []
        for par in (0, 1):
            idx = list(range(par, N, 2))
            out.append((
                [diag[i] for i in idx],
                [off2[i] for i in idx[:-1]],
                [off4[i] for i in idx[:-2]],
            ))
        return tuple(out)


def build_hamiltonian(problem: FockProblem, digits: int) -> BandedSymmetricMatrix:
    M = problem.M
    with _ctx(digits):
        g, w = _big(problem.g), _big(problem.omega)
        c0 = 1 / (32 * g)
        q = g / (8 * w * w)
        k2 = -w / 4 - 1 / (8 * w)
        diag, off2, off4 = [], [], []
        for n in range(M):
            diag.append(w / 4 * (2 * n + 1) + c0 - (2 * n + 1) / (8 * w)
                        + q * (6 * n * n + 6 * n + 3))
            if n + 2 < M:
                s2 = gmpy2.sqrt(mpfr((n + 1) * (n + 2)))
                off2.append(s2 * (k2 + q * (4 * n + 6)))
            if n + 4 < M:
                off4.append(q * gmpy2.sqrt(mpfr((n + 1) * (n + 2) * (n + 3) * (n + 4))))
    return BandedSymmetricMatrix({0: tuple(diag), 2: tuple(off2), 4: tuple(off4)}, digits)


# -- inertia ------------------------------------------------------------------

class FactorizationBreakdown(ArithmeticError):
    pass


def inertia(block, lam, with_trace: bool = False):
    """Number of eigenvalues of ``block`` below ``lam``.

    ``block = (a0, a1, a2)`` holds the diagonal and the first two
    superdiagonals of a pentadiagonal symmetric matrix.  With ``with_trace``
    also returns ``d/dlam log|det(block - lam)|``.
    """
    a0, a1, a2 = block
    n = len(a0)
    zero = mpfr(0)
    neg = 0
    d1 = d2 = zero
    l1p = l2p = l2pp = zero
    dd1 = dd2 = zero
    dl1p = dl2p = dl2pp = zero
    tr = zero
    for i in range(n):
        d = a0[i] - lam - l1p * l1p * d1 - l2pp * l2pp * d2
        if d == 0:
            raise FactorizationBreakdown(i)
        if d < 0:
            neg += 1
        l1 = (a1[i] - l2p * l1p * d1) / d if i < n - 1 else zero
        l2 = a2[i] / d if i < n - 2 else zero
        if with_trace:
            dd = -1 - (2 * l1p * dl1p * d1 + l1p * l1p * dd1) \
                - (2 * l2pp * dl2pp * d2 + l2pp * l2pp * dd2)
            tr += dd / d
            dl1 = (-(dl2p * l1p * d1 + l2p * dl1p * d1 + l2p * l1p * dd1) - l1 * dd) / d \
                if i < n - 1 else zero
            dl2 = -l2 * dd / d if i < n - 2 else zero
            dd2, dd1 = dd1, dd
            dl2pp, dl2p, dl1p = dl2p, dl2, dl1
        d2, d1 = d1, d
        l2pp, l2p, l1p = l2p, l2, l1
    return (neg, tr) if with_trace else neg


def _safe_inertia(block, lam, with_trace=False):
    """Inertia with a nudged shift if the factorization hits an exact zero pivot."""
    bump = mpfr(2) ** (-gmpy2.get_context().precision + 8)
    for attempt in range(8):
        try:
            return inertia(block, lam, with_trace)
        except FactorizationBreakdown:
            lam = lam + bump * (abs(lam) + 1) * (attempt + 1)
    raise NumericalFailure("LDL^T breakdown persists under shift perturbation", shift=str(lam))


def _gershgorin(block):
    a0, a1, a2 = block
    n = len(a0)
    lo = hi = None
    for i in range(n):
        r = mpfr(0)
        for band, off in ((a1, 1), (a2, 2)):
            if i < len(band):
                r += abs(band[i])
            if i - off >= 0 and i - off < len(band):
                r += abs(band[i - off])
        lo = a0[i] - r if lo is None else min(lo, a0[i] - r)
        hi = a0[i] + r if hi is None else max(hi, a0[i] + r)
    return lo - 1, hi + 1


def block_eigenvalue(block, index: int, digits: int):
    """``index``-th smallest eigenvalue (0-based) to absolute ``10^-digits``."""
    n = len(block[0])
    if not 0 <= index < n:
        raise DomainError(f"eigenvalue index {index} outside block of size {n}")
    with _ctx(digits):
        delta = mpfr(10) ** (-digits)
        lo, hi = _gershgorin(block)
        x = (lo + hi) / 2
        for _ in range(20000):
            cnt, tr = _safe_inertia(block, x, True)
            if cnt >= index + 1:
                hi = x
            else:
                lo = x
            step = 1 / tr if tr != 0 else None
            if step is not None:
                xn = x - step
                if abs(step) < delta / 8 and lo - delta <= xn <= hi + delta:
                    if (_safe_inertia(block, xn - delta) <= index
                            and _safe_inertia(block, xn + delta) >= index + 1):
                        return xn
            if hi - lo < delta:
                return (lo + hi) / 2
            if step is not None and lo < x - step < hi:
                x = x - step
            else:
                x = (lo + hi) / 2
        raise NumericalFailure("eigenvalue iteration did not terminate", index=index)


def lowest_eigenvalues(mat: BandedSymmetricMatrix, count: int = 2,
                       digits: int | None = None) -> list:
    """The ``count`` smallest eigenvalues, from the two parity blocks."""
    digits = digits or mat.digits
    if mat.dimension < count:
        raise DomainError("matrix smaller than the requested eigenvalue count")
    values = []
    for block in mat.parity_blocks():
        for k in range(min(count, len(block[0]))):
            values.append(block_eigenvalue(block, k, digits))
    values.sort()
    return values[:count]


def count_below(mat: BandedSymmetricMatrix, level, digits: int | None = None) -> int:
    """Number of eigenvalues of the full matrix below ``level``."""
    digits = digits or mat.digits
    with _ctx(digits):
        lev = _big(level) if not isinstance(level, type(mpfr(0))) else level
        return sum(_safe_inertia(b, lev) for b in mat.parity_blocks())


# -- results ------------------------------------------------------------------

@dataclass(frozen=True)
class FockResult:
    g: Fraction
    M: int
    digits: int
    E0: object
    E1: object
    omega: Fraction = Fraction(1)

    @property
    def mean(self):
        with _ctx(self.digits):
            return (self.E0 + self.E1) / 2

    @property
    def splitting(self):
        with _ctx(self.digits):
            return self.E1 - self.E0

    def to_json(self) -> str:
        d = self.digits
        return json.dumps({
            "g": str(self.g), "M": self.M, "digits": d, "omega": str(self.omega),
            "E0": format_big(self.E0, d), "E1": format_big(self.E1, d),
            "mean": format_big(self.mean, d),
        }, indent=1)


def fock_energy(g, M: int, digits: int, omega=1) -> FockResult:
    """Lowest even-block (E0) and odd-block (E1) eigenvalues at cut-off ``M``."""
    problem = FockProblem(g, M, omega)
    mat = build_hamiltonian(problem, digits)
    even, odd = mat.parity_blocks()
    e0 = block_eigenvalue(even, 0, digits)
    e1 = block_eigenvalue(odd, 0, digits)
    return FockResult(problem.g, M, digits, e0, e1, problem.omega)


def converged_fock_energy(g, digits: int, M_start: int = 64, M_max: int = 4096,
                          omega=1) -> FockResult:
    """Double ``M`` until E0 and E1 both move by less than ``10^-digits``."""
    M = M_start
    prev = fock_energy(g, M, digits, omega)
    tol = mpfr(10) ** (-digits)
    while M < M_max:
        M *= 2
        cur = fock_energy(g, M, digits, omega)
        if abs(cur.E0 - prev.E0) < tol and abs(cur.E1 - prev.E1) < tol:
            return cur
        prev = cur
    raise NumericalFailure("Fock energies not converged by M doubling",
                           g=str(to_fraction(g)), M=M, digits=digits)


@dataclass(frozen=True)
class ScanRow:
    M: int
    even: tuple
    odd: tuple

    @property
    def merged(self) -> list:
        return sorted(list(self.even) + list(self.odd))


def convergence_scan(g, M_list: Sequence[int], digits: int, count: int = 10,
                     omega=1) -> list[ScanRow]:
    """Lowest ``count`` eigenvalues of each parity block for every cut-off."""
    if list(M_list) != sorted(M_list):
        raise DomainError("M_list must be ascending")
    rows = []
    for M in M_list:
        mat = build_hamiltonian(FockProblem(g, M, omega), digits)
        blocks = mat.parity_blocks()
        parts = []
        for b in blocks:
            parts.append(tuple(block_eigenvalue(b, k, digits)
                               for k in range(min(count, len(b[0])))))
        rows.append(ScanRow(M, parts[0], parts[1]))
    return rows


def scan_to_csv(rows: list[ScanRow], digits: int, count: int | None = None) -> str:
    width = count or max(len(r.merged) for r in rows)
    head = ["M"] + [f"e{i}" for i in range(width)] + ["digits"]
    lines = [",".join(head)]
    for r in rows:
        vals = [format_big(v, digits) for v in r.merged[:width]]
        vals += [""] * (width - len(vals))
        lines.append(",".join([str(r.M)] + vals + [str(digits)]))
    return "\n".join(lines) + "\n"

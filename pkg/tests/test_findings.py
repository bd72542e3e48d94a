"""Desk-scale behaviour behind the acceptance results.

These tests pin down why some slope criteria miss at desk scale, record
what the residuals say about the tabulated coefficients, and check the
analysis invariants that do not belong to a single criterion.
"""

import math
from fractions import Fraction

import gmpy2
import mpmath
import pytest
from gmpy2 import mpfr

from resurgence.analysis import extract_coefficients, fit_loglog_slope, log_grid
from resurgence.instanton import known_coefficients, two_instanton_truncated
from resurgence.numerics import working_precision

from test_acceptance import _records

F = Fraction
KC = known_coefficients()
EPS206 = float(KC.value((2, 0, 6), 30))


def _gb(g):
    return mpfr(g.numerator) / g.denominator


def _tail(g, K, k_top=10):
    # the known part of the l = 1 remainder beyond order K
    gb = _gb(g)
    return -sum(KC.value((2, 1, k), 60) * gb ** k for k in range(K + 1, k_top + 1))


@pytest.fixture(scope="module")
def records(desk_borel, desk_fock):
    return {K: _records(desk_borel, desk_fock, K) for K in (-1, 0, 1, 2, 4, 7, 10)}


# -- order of vanishing --------------------------------------------------------------

@pytest.mark.parametrize("K", [0, 1, 2])
def test_imaginary_residual_is_the_known_tail(records, K):
    # below g ~ 0.02 the residual is the tabulated l = 1 tail to a few percent
    with working_precision(60):
        for r in records[K]:
            if r.g <= F(1, 50):
                assert abs(r.delta_I / _tail(r.g, K) - 1) < 0.05


@pytest.mark.parametrize("K, excess", [(1, 0.5), (2, 0.5)])
def test_known_tail_is_steeper_on_the_desk_grid(K, excess):
    # the tail itself has slope well above K + 1 between 0.005 and 0.05
    with working_precision(60):
        pts = [(g, _tail(g, K)) for g in log_grid("0.005", "0.05", 12)]
    assert fit_loglog_slope(pts).slope > K + 1 + excess


@pytest.mark.parametrize("K", [0, 1, 2])
def test_known_tail_reaches_k_plus_one_at_small_coupling(K):
    with working_precision(60):
        pts = [(g, _tail(g, K)) for g in log_grid("0.0001", "0.001", 12)]
    assert abs(fit_loglog_slope(pts).slope - (K + 1)) < 0.01


# -- the l = 0 coefficients seen through the real channel ------------------------------

def _l0_leftover(rec):
    # y(g) = R(g) - known part, with R = -ln(2/g) Delta_R the l = 0, 1 remainder
    g = rec.g
    with working_precision(70):
        gb = _gb(g)
        L = gmpy2.log(2 / gb)
        y = -L * rec.delta_R
        for k in range(3, 7):
            y -= (KC.value((2, 0, k), 60) + L * KC.value((2, 1, k), 60)) * gb ** k
        for k in range(7, 11):
            y -= L * KC.value((2, 1, k), 60) * gb ** k
        return y / (gb * gb)


def test_second_order_l0_offset(records):
    # the leftover tends to -65/12 at small g: the constant term of eps_202 is 13/12
    rec = records[2][0]
    assert rec.g == F(1, 200)
    assert float(_l0_leftover(rec)) == pytest.approx(-65 / 12, rel=2e-3)


@pytest.mark.parametrize("points", [4, 5])
def test_sixth_order_l0_sign(records, points):
    # once the offset is removed the leftover grows like c4 g^4, with c4 close to
    # -2 eps_206: the residual prefers eps_206 of the opposite sign to the table
    recs = records[2][:points]
    with mpmath.workdps(40):
        rows, rhs = [], []
        for r in recs:
            g = mpmath.mpf(r.g.numerator) / r.g.denominator
            rho = mpmath.mpf(str(_l0_leftover(r))) + mpmath.mpf(65) / 12
            rows.append([1, g, g * g][:points - 2])
            rhs.append(rho / g ** 4)
        sol, _ = mpmath.qr_solve(mpmath.matrix(rows), mpmath.matrix(rhs))
    assert float(sol[0]) / (-2 * EPS206) == pytest.approx(1, abs=0.15)


@pytest.mark.xfail(strict=True, reason="g^k and g^k ln(2/g) columns nearly collinear on the desk grid")
def test_real_channel_extraction_at_desk_scale(records):
    est = extract_coefficients(records[-1], "real", KC, k_max=4)
    got = {(e.l, e.k): e for e in est}
    assert abs(float(got[(1, 0)].value) - 1) < 1e-3
    assert abs(float(got[(1, 1)].value) / (-53 / 6) - 1) < 0.01


def test_real_channel_design_is_ill_conditioned(records):
    # ln(2/g) spans only [3.7, 6.0] on the desk grid
    est = extract_coefficients(records[-1], "real", KC, k_max=4)
    assert float(est[0].method["condition"]) > 1e12


# -- analysis invariants ------------------------------------------------------------

def _sign_structure(desk_borel, K):
    # per g: Im E_B < 0, Im E2 > 0 and their sum at least 10x smaller than either
    out = []
    for g, b in sorted(desk_borel.items()):
        e2 = two_instanton_truncated(g, K, "upper", KC, 70, K_real=min(K, 6))
        with working_precision(90):
            im_b, im_2 = b.value.imag, e2.value.imag
            out.append((g, im_b < 0 and im_2 > 0
                        and abs(im_b + im_2) * 10 <= min(abs(im_b), abs(im_2))))
    return out


@pytest.mark.parametrize("K", [1, 2, 4, 7, 10])
def test_sign_structure_below_004(desk_borel, K):
    assert all(ok for g, ok in _sign_structure(desk_borel, K) if g < F(1, 25))


def test_sign_structure_full_grid_k4(desk_borel):
    assert all(ok for _, ok in _sign_structure(desk_borel, 4))


@pytest.mark.xfail(strict=True, reason="above g = 0.04 the tail beyond K spoils the 10x cancellation")
@pytest.mark.parametrize("K", [1, 2, 7, 10])
def test_sign_structure_full_grid(desk_borel, K):
    assert all(ok for _, ok in _sign_structure(desk_borel, K))


@pytest.mark.xfail(strict=True, reason="window-spread bars miss the fit-model truncation")
def test_extraction_bars_cover_exact_values(extraction_borel):
    window = (F(5, 1000), F(1, 100))
    est = []
    for K in (-1, 2):
        est += extract_coefficients(_records(extraction_borel, None, K), "imaginary", KC, 10,
                                    window=window)
    checked = [e for e in est if e.error < abs(e.value)]
    assert checked
    assert all(e.covers(KC.value((2, 1, e.k), 60)) for e in checked)


def test_extraction_bars_within_a_few_times(extraction_borel):
    # the miss is bounded: the leading estimates sit within 2x their quoted bar
    window = (F(5, 1000), F(1, 100))
    est = extract_coefficients(_records(extraction_borel, None, -1), "imaginary", KC, 10,
                               window=window)
    for e in est[:3]:
        miss = abs(float(e.value - KC.value((2, 1, e.k), 60)))
        assert miss <= 2 * float(e.error)
        assert math.isfinite(miss)

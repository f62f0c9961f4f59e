import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mp, mpf

from cubic_blowup import rk
from cubic_blowup.stencils import (BandedOperator, RadialOperators, derivative_entries,
                                   dissipation_entries, fornberg_weights, origin_value)


def test_fornberg_centered_first_derivative():
    w = fornberg_weights(0, range(-3, 4), 1)
    assert w == [Fraction(-1, 60), Fraction(3, 20), Fraction(-3, 4), 0,
                 Fraction(3, 4), Fraction(-3, 20), Fraction(1, 60)]


@given(st.integers(min_value=0, max_value=7), st.integers(min_value=1, max_value=2))
@settings(max_examples=20, deadline=None)
def test_fornberg_weights_exact_on_monomials(k, m):
    offsets = list(range(-2, 6))
    z = Fraction(1, 3)
    w = fornberg_weights(z, offsets, m)
    got = sum(wi * Fraction(o) ** k for wi, o in zip(w, offsets))
    expect = 0 if k < m else Fraction(math.perm(k, m)) * z ** (k - m)
    assert got == expect


def even_poly(x):
    return x**6 - 3 * x**4 + x**2 + 2


@pytest.mark.parametrize("dtype", [np.float64, np.longdouble])
def test_derivatives_exact_on_even_sextic(dtype):
    ops = RadialOperators(40, Fraction(1, 8), dtype, eps=0)
    x = ops.nodes
    d1 = 6 * x**5 - 12 * x**3 + 2 * x
    d2 = 30 * x**4 - 36 * x**2 + 2
    tol = 1e-9 if dtype == np.float64 else 1e-12
    np.testing.assert_allclose(ops.d1(even_poly(x)), d1, rtol=tol, atol=tol)
    np.testing.assert_allclose(ops.d2(even_poly(x)), d2, rtol=tol, atol=tol)


def test_object_operators_match_float():
    n, dx = 24, Fraction(1, 4)
    with mp.workdps(30):
        ops_mp = RadialOperators(n, dx, object)
        ops_f = RadialOperators(n, dx, np.float64)
        f_mp = np.array([mp.exp(-x * x) for x in ops_mp.nodes], dtype=object)
        f = np.exp(-ops_f.nodes**2)
        for name in ("d1", "d2", "ko"):
            a = np.array([float(v) for v in getattr(ops_mp, name)(f_mp)])
            np.testing.assert_allclose(a, getattr(ops_f, name)(f), atol=1e-12)


def _max_err(n_per_unit):
    dx = Fraction(1, n_per_unit)
    ops = RadialOperators(8 * n_per_unit, dx, np.float64, eps=0)
    x = ops.nodes
    f = np.exp(-x * x)
    e1 = np.abs(ops.d1(f) + 2 * x * f).max()
    e2 = np.abs(ops.d2(f) - (4 * x * x - 2) * f).max()
    return e1, e2


def test_derivative_convergence_is_sixth_order():
    coarse, fine = _max_err(8), _max_err(16)
    for c, f in zip(coarse, fine):
        assert 48 <= c / f <= 140


def test_dissipation_annihilates_low_degree_polynomials():
    n = 30
    ent = dissipation_entries(n)
    op = BandedOperator(n, ent, np.float64)
    x = (np.arange(n) + 0.5) / 4
    out = op(even_poly(x))
    assert np.abs(out[: n - 4]).max() < 1e-8
    assert np.all(out[n - 4:] == 0)


def test_dissipation_damps_grid_scale_mode():
    ops = RadialOperators(32, Fraction(1, 8), np.float64)
    f = (-1.0) ** np.arange(32)
    assert np.dot(f[:20], ops.dissipation(f)[:20]) < 0


def test_derivative_entries_reject_tiny_grid():
    with pytest.raises(ValueError):
        derivative_entries(5, 1)


def test_origin_value_exact_for_even_quartic():
    x = (np.arange(3) + 0.5) * 0.1
    f = 1 + 2 * x**2 - 5 * x**4
    assert origin_value(f) == pytest.approx(1.0, abs=1e-15)


def test_rk_tableau_order_conditions():
    assert sum(rk.B) == 1
    for row, c in zip(rk.A, rk.C):
        assert sum(row) == c
    for k in range(6):
        assert sum(b * c**k for b, c in zip(rk.B, rk.C)) == Fraction(1, k + 1)


def _rk_error(n):
    f = lambda s, y: y * np.cos(s)
    stepper = rk.RK6()
    y, s, ds = np.array([1.0]), 0.0, 2.0 / n
    for _ in range(n):
        y = stepper.step(f, s, y, ds)
        s += ds
    return abs(y[0] - np.exp(np.sin(2.0)))


def test_rk6_global_order():
    e = [_rk_error(n) for n in (10, 20, 40)]
    assert 48 <= e[0] / e[1] <= 80
    assert 48 <= e[1] / e[2] <= 80


def test_rk6_in_arbitrary_precision():
    with mp.workdps(40):
        stepper = rk.RK6(object)
        y = np.array([mpf(1)], dtype=object)
        s, n = mpf(0), 400
        ds = mpf(1) / n
        for _ in range(n):
            y = stepper.step(lambda t, v: v, s, y, ds)
            s += ds
        assert abs(y[0] - mp.e) < mpf(10) ** -18


def test_cast_follows_dtype():
    assert isinstance(rk.cast(Fraction(1, 3), object), mpf)
    assert rk.cast(Fraction(1, 3), np.longdouble).dtype == np.longdouble

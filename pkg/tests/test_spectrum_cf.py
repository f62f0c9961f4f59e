import warnings

import pytest
from hypothesis import given, settings, strategies as st
from mpmath import mp, mpf

from cubic_blowup import profiles as pr
from cubic_blowup.spectrum_cf import (ConvergentZeroError, ThreeTermRecurrence, cf_value, convergent,
                                      default_variable, evaluate_cf, find_anomalous,
                                      find_cf_eigenvalues, heun_cf_eigenvalues, heun_recurrence,
                                      limiting_coeffs, limiting_recurrence, mobius_residual)
from cubic_blowup.spectrum_shoot import HeunProblem, series_coeffs


@pytest.fixture(autouse=True)
def _precision():
    with mp.workdps(50):
        yield


def test_limiting_coeff_values():
    assert limiting_coeffs(-1, 2)[0] == 0
    assert limiting_coeffs(0, 2)[1] == 0
    assert limiting_coeffs(-1, 1)[0] == -3
    assert limiting_coeffs(-1, 1)[1] is None
    with pytest.raises(ValueError):
        limiting_coeffs(-2, 1)


def limiting_residual(lam, a):
    """Coefficients of 4z(3z+1) times the limiting equation applied to sum a_n z^n."""
    n = len(a)
    dy = [(k + 1) * a[k + 1] for k in range(n - 1)]
    d2y = [(k + 2) * (k + 1) * a[k + 2] for k in range(n - 2)]
    p2 = [0, 0, 4, 12]
    p1 = [-2, 16 - 6 + 4 * lam - 6, 12 * lam - 18]
    p0 = [(lam - 2) * (lam + 5), 3 * (lam - 2) * (lam - 3)]
    out = [mpf(0)] * (n + 3)
    for p, f in ((p2, d2y), (p1, dy), (p0, a)):
        for i, c in enumerate(p):
            for j, v in enumerate(f):
                out[i + j] += c * v
    return out


@given(st.fractions(min_value=-5, max_value=5, max_denominator=97))
@settings(max_examples=25, deadline=None)
def test_recurrence_matches_direct_substitution(q):
    lam = mpf(q.numerator) / q.denominator
    a = limiting_recurrence(lam).coefficients(32)
    res = limiting_residual(lam, a)
    scale = max(1, max(abs(x) for x in a))
    assert all(abs(r) <= mpf(10) ** -40 * scale for r in res[:30])


def test_growth_is_factorial_for_generic_lambda():
    a = limiting_recurrence(mpf("0.3")).coefficients(402)
    n = 400
    assert abs(a[n + 1] / (2 * n * a[n]) - 1) < mpf("0.1")


def test_cf_value_exact_zero_at_two():
    assert cf_value(2, depth=64).value == 0


def test_cf_value_at_one_tends_to_zero():
    vals = [abs(cf_value(1, depth=k).value) for k in (32, 64, 128, 256)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < mpf("1e-20")


def test_cf_value_bounded_away_from_zero_at_origin():
    for k in (64, 128, 256):
        assert abs(cf_value(0, depth=k).value) > mpf("0.1")


def test_cf_value_argument_checks():
    with pytest.raises(ValueError):
        cf_value(0, depth=4)
    with pytest.raises(ValueError):
        cf_value(0, tail="dominant")


def test_tails_agree_at_default_depth():
    for lam in ("-0.3", "0.7", "-2.9"):
        z = cf_value(lam, 512, "zero").value
        a = cf_value(lam, 512, "asymptotic").value
        assert abs(z - a) < mpf(10) ** -20 * max(1, abs(z))


def test_zero_convergent_reports_depth():
    rec = ThreeTermRecurrence(lambda n: mpf(0), lambda n: mpf(1))
    with pytest.raises(ConvergentZeroError) as exc:
        evaluate_cf(rec, 8)
    assert exc.value.depth == 8


def test_convergent_matches_bottom_up_value():
    rec = limiting_recurrence(mpf("0.37"))
    P, Q = convergent(rec, 64)
    assert abs(P / Q - evaluate_cf(rec, 64)) < mpf(10) ** -40


def miller_ratio(lam, N=600):
    """a_1/a_0 of the minimal solution by backward recurrence from a_{N+1} = 0, a_N = 1."""
    a_next, a = mpf(0), mpf(1)
    for n in range(N - 2, -1, -1):
        A, B = limiting_coeffs(n, lam)
        a_next, a = a, (a_next - A * a) / B
    return a_next / a


def test_minimal_solution_ratio_at_eigenvalue():
    rep = find_cf_eigenvalues(window=("-0.6", "-0.5"), grid_step="0.01")
    (lam,) = rep.values()
    assert abs(miller_ratio(lam) - limiting_coeffs(-1, lam)[0]) < mpf(10) ** -15


def test_empty_windows():
    assert find_cf_eigenvalues(window=("-0.1", "0.1")).values() == []
    assert find_cf_eigenvalues(window=("3", "10"), grid_step="0.05").values() == []


def test_root_next_to_pole_is_found():
    rep = find_cf_eigenvalues(window=("-2.2", "-2.05"), grid_step="0.01")
    assert [float(x) for x in rep.values()] == pytest.approx([-2.13344], abs=1e-4)
    assert any(abs(p - mpf("-2.1348")) < mpf("1e-3") for p in rep.poles)


def test_depth_doubling_moves_roots_below_tolerance():
    digits = 30
    with mp.workdps(digits):
        a = find_cf_eigenvalues(window=("-0.6", "-0.5"), depth=256, digits=digits).values()
        b = find_cf_eigenvalues(window=("-0.6", "-0.5"), depth=512, digits=digits).values()
    assert len(a) == len(b) == 1
    assert abs(a[0] - b[0]) < mpf(10) ** (-digits // 2)


def test_anomalous_values():
    poles = find_anomalous(window=("-2.5", "1"), grid_step="0.02")
    assert len(poles) >= 3
    roots = find_cf_eigenvalues(window=("-1", "1.5"), grid_step="0.02").values()
    assert all(abs(p - r) > mpf("1e-6") for p in poles for r in roots)
    # the reciprocal changes sign across each pole at both depths
    for p in poles[:2]:
        for depth in (512, 1024):
            lo = convergent(limiting_recurrence(p - mpf("1e-8")), depth)[1]
            hi = convergent(limiting_recurrence(p + mpf("1e-8")), depth)[1]
            assert lo * hi < 0


def test_heun_recurrence_reproduces_frobenius_series():
    for d, lam in ((8, "0.3"), (11, "-1.2")):
        a = heun_recurrence(d, lam).coefficients(25)
        s = series_coeffs(HeunProblem(d, mpf(lam)), 0, 25).coeffs
        assert all(abs(x - y) < mpf(10) ** -40 * max(1, abs(y)) for x, y in zip(a, s))


def _z_of(d, lam, f):
    """Transformed unknown Z(xi) for a mode profile f(rho) at eigenvalue lam."""
    xs = mpf(4 - d) / 3

    def Z(xi):
        x = xs * xi / (xi - 1)
        _, y = pr.heun_variable_map(d, mp.sqrt(x), f(mp.sqrt(x)))
        return y / (1 - xi) ** ((mpf(lam) - 3) / 2)
    return Z


@pytest.mark.parametrize("lam,f", [
    (1, lambda r: pr.gauge_mode_f0(7, r)),
    (3, lambda r: pr.unstable_pair_d7(r)[0]),
])
def test_mobius_equation_annihilates_exact_modes_d7(lam, f):
    Z = _z_of(7, lam, f)
    for xi in (mpf("0.1"), mpf("0.3"), mpf("0.6")):
        assert abs(mobius_residual(7, lam, Z, xi)) < mpf(10) ** -30


def test_default_variable():
    assert default_variable(7) == "mobius"
    assert default_variable(8) == "x"


def test_heun_cf_rejects_low_dimension():
    with pytest.raises(ValueError, match="spectrum_shoot"):
        heun_cf_eigenvalues(6)


def test_heun_cf_d8_nonnegative_window():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = heun_cf_eigenvalues(8, window=(0, 5), grid_step="0.02")
    assert [float(x) for x in rep.values()] == pytest.approx([2.78200, 1.0], abs=1e-5)
    assert rep.to_json()["method"] == "continued-fraction"
    assert "poles" in rep.to_json()


def test_heun_cf_d7_includes_both_analytic_resonance():
    rep = heun_cf_eigenvalues(7, window=(-2.5, -1.5), grid_step="0.02")
    assert [float(x) for x in rep.values()] == [-2.0]


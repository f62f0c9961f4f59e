import warnings

import pytest
from mpmath import mp, mpf

from cubic_blowup import profiles as pr
from cubic_blowup.spectrum_shoot import (HeunProblem, LogarithmicObstructionError, ResonantCaseError,
                                         SeriesDivergenceWarning, eigen_residual, find_eigenvalues,
                                         regularized_wronskian, resonant_series, series_coeffs,
                                         wronskian_mid)


@pytest.fixture(autouse=True)
def _precision():
    with mp.workdps(40):
        yield


def poly_residual(problem, series):
    """Coefficients of p2 y'' + p1 y' + p0 y for the truncated series, by direct multiplication."""
    a = series.coeffs
    n = len(a)
    y = a
    dy = [(k + 1) * a[k + 1] for k in range(n - 1)]
    d2y = [(k + 2) * (k + 1) * a[k + 2] for k in range(n - 2)]
    p2, p1, p0 = problem.coefficients()
    out = [mpf(0)] * (n + 3)
    for p, f in ((p2, d2y), (p1, dy), (p0, y)):
        for i, c in enumerate(p):
            for j, v in enumerate(f):
                out[i + j] += c * v
    return out


@pytest.mark.parametrize("d,lam", [(5, "0.3"), (7, "-1.7"), (9, "2.5"), (8, "1")])
def test_series_residual_vanishes_through_truncation_order(d, lam):
    prob = HeunProblem(d, mpf(lam))
    N = 30
    s = series_coeffs(prob, 0, N)
    res = poly_residual(prob, s)
    scale = max(abs(c) for c in s.coeffs)
    assert all(abs(r) < mpf(10) ** -30 * scale for r in res[:N - 1])
    assert s.coeffs[0] == 1


def test_gauge_mode_series_terminates_d5():
    s = series_coeffs(HeunProblem(5, 1), 0, 20)
    assert abs(s.coeffs[1] + 3) < mpf(10) ** -35
    assert all(abs(c) < mpf(10) ** -35 for c in s.coeffs[2:])


def test_gauge_mode_series_terminates_d6():
    s = series_coeffs(HeunProblem(6, 1), 0, 20)
    assert abs(s.coeffs[1] + mpf(3) / 2) < mpf(10) ** -35
    assert all(abs(c) < mpf(10) ** -35 for c in s.coeffs[2:])


def test_lambda3_series_is_heun_image_of_f1_d7():
    prob = HeunProblem(7, 3)
    s = series_coeffs(prob, 0, 40)
    for x in (mpf("0.1"), mpf("0.4")):
        rho = mp.sqrt(x)
        _, y_exact = pr.heun_variable_map(7, rho, pr.unstable_pair_d7(rho)[0])
        assert abs(s.value(x) - y_exact / 9) < mpf(10) ** -30
        assert abs(prob.residual(s.value, x)) < mpf(10) ** -20


def test_center_one_rejects_resonant_lambda():
    with pytest.raises(ResonantCaseError):
        series_coeffs(HeunProblem(7, 1), 1, 20)


def test_short_truncation_rejected():
    with pytest.raises(ValueError):
        series_coeffs(HeunProblem(7, "0.2"), 0, 3)


def test_resonant_gauge_mode_d7():
    sub = resonant_series(HeunProblem(7, 1), 40)
    assert sub.exponent == 1
    # y0 = 1 - x is the subdominant solution itself
    for x in (mpf("0.2"), mpf("0.6")):
        assert abs(sub.value(x) - (1 - x)) < mpf(10) ** -30
    assert eigen_residual(HeunProblem(7, 1), 60) < mpf(10) ** -20


def test_resonant_d9_lambda2_not_eigenvalue():
    prob = HeunProblem(9, 2)
    assert prob.resonance_index() == 1
    sub = resonant_series(prob, 60)
    assert not sub.both_analytic
    assert abs(wronskian_mid(prob, 120)) > mpf("1e-3")
    with pytest.raises(LogarithmicObstructionError):
        resonant_series(prob, 60, require_both=True)


def test_resonant_precondition_m_zero():
    with pytest.raises(ValueError):
        resonant_series(HeunProblem(7, 2), 20)


def test_both_analytic_resonance_d7_lambda_minus2():
    sub = resonant_series(HeunProblem(7, -2), 60)
    assert sub.exponent == 4 and sub.both_analytic


def test_wronskian_at_exact_eigenvalue_d7():
    assert abs(wronskian_mid(HeunProblem(7, 3), 120)) < mpf(10) ** -25


def test_divergence_warning_when_series_used_outside_disk_d5():
    s = series_coeffs(HeunProblem(5, "0.3"), 0, 60)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        ok = s.check_convergence(mpf(1) / 2)
    assert not ok and any(issubclass(x.category, SeriesDivergenceWarning) for x in w)


def test_regularized_wronskian_continuous_across_resonance():
    d, m = 8, 2
    lam_m = mpf(d - 3) / 2 - m
    at = regularized_wronskian(HeunProblem(d, lam_m), 120)
    for h in (mpf("1e-8"), mpf("-1e-8")):
        near = regularized_wronskian(HeunProblem(d, lam_m + h), 120)
        assert abs(near - at) < mpf("1e-5") * max(1, abs(at))


def test_find_eigenvalues_d7_upper_window():
    rep = find_eigenvalues(7, window=(0.5, 4), N=160, digits=40, grid_step="0.05")
    vals = [float(x) for x in rep.values()]
    assert vals == pytest.approx([3.0, 1.0], abs=1e-15)
    assert rep.method == "resonant-shooting"
    assert rep.residual_bound < mpf(10) ** -20


def test_find_eigenvalues_d8_stable_mode():
    rep = find_eigenvalues(8, window=(-1, -0.2), N=160, digits=40, grid_step="0.05")
    assert [float(x) for x in rep.values()] == pytest.approx([-0.5538793302], abs=1e-9)
    assert rep.method == "shooting"


def test_report_json_sorted_descending():
    rep = find_eigenvalues(9, window=(0.5, 3), N=120, digits=30, grid_step="0.05")
    doc = rep.to_json()
    lams = [float(e["lambda"]) for e in doc["eigenvalues"]]
    assert lams == sorted(lams, reverse=True)
    assert doc["method"] in ("shooting", "resonant-shooting")


def test_low_precision_scan_reports_no_spurious_resonances_d5():
    # lam = 0, -1, -2, -3 are resonant at d = 5 but only logarithmic
    with mp.workdps(30):
        rep = find_eigenvalues(5, window=(-3.6, 0.5), N=120, digits=30, grid_step="0.05")
    assert [float(x) for x in rep.values()] == pytest.approx([-0.53721, -1.88858, -3.17611], abs=1e-5)


def test_resonant_roots_are_snapped_and_unique_d9():
    rep = find_eigenvalues(9, window=(0.5, 1.5), N=200, digits=50, grid_step="0.05")
    assert rep.values() == [1]
    assert rep.eigenvalues[0][1] == 0

import json
import math
from fractions import Fraction

import numpy as np
import pytest

from cubic_blowup.evolution_ss import SUBCRITICAL, SUPERCRITICAL, EvolutionParams, Grid, Outcome
from cubic_blowup.threshold import (ModeFit, NoFlipError, RankDeficientError, SignCheckError,
                                    ThresholdRecord, bisect, blowup_time, fit_modes, pair_window,
                                    plateau_window, psi_origin, refine_blowup_time, sign_check)

LAM1, LAMM1, C = 3.0, -0.6, 4.0


def _psi(tau, a1, am1=0.5, a0=0.0):
    return C + a1 * np.exp(LAM1 * tau) + a0 * np.exp(tau) + am1 * np.exp(LAMM1 * tau)


def test_fit_recovers_synthetic_coefficients():
    tau = np.linspace(0, 6, 2000)
    psi = _psi(tau, 1e-9, a0=2e-4)
    f = fit_modes(tau, psi, LAM1, window=(0.5, 5.5))
    assert f.c == pytest.approx(C, abs=1e-8)
    assert f.a1 == pytest.approx(1e-9, rel=1e-6)
    assert f.a0 == pytest.approx(2e-4, rel=1e-6)
    assert f.a_minus1 == pytest.approx(0.5, rel=1e-6)
    assert f.lambda_minus1 == pytest.approx(LAMM1, abs=1e-8)
    assert f.residual < 1e-10
    np.testing.assert_allclose(f.model(tau), psi, atol=1e-9)
    assert set(f.to_json()) >= {"c", "a1", "a0", "a_minus1", "lambda_minus1", "window"}


def test_fit_rejects_short_or_degenerate_window():
    tau = np.linspace(0, 6, 200)
    with pytest.raises(RankDeficientError):
        fit_modes(tau, _psi(tau, 1e-9), LAM1, window=(1.0, 1.01))
    with pytest.raises(RankDeficientError):
        fit_modes(tau, _psi(tau, 1e-9), 1.0, window=(0.5, 5.5))
    with pytest.raises(ValueError):
        fit_modes(tau, _psi(tau, 1e-9), LAM1)


def test_plateau_window():
    tau = np.linspace(0, 10, 101)
    psi = np.where((tau > 2) & (tau < 7), C, C + 1)
    assert plateau_window(tau, psi, C) == (2.1, 6.9)
    with pytest.raises(ValueError):
        plateau_window(tau, psi + 5, C)


def test_pair_window_opens_on_plateau_and_closes_at_split():
    tau = np.linspace(0, 8, 4001)
    sub, sup = _psi(tau, -1e-12, am1=1), _psi(tau, 1e-12, am1=1)
    lo, hi = pair_window(tau, sub, tau, sup, C)
    assert lo == pytest.approx(math.log(1 / 5e-2) / -LAMM1, abs=1e-2)
    # 2e-12 e^{3 tau} = 1e-3
    assert hi == pytest.approx(math.log(5e8) / LAM1, abs=1e-2)
    with pytest.raises(ValueError):
        pair_window(tau, sub, tau, _psi(tau, 1e-2, am1=1), C)


def test_sign_check():
    tau = np.linspace(0, 6, 600)
    fs = fit_modes(tau, _psi(tau, -1e-9), LAM1, window=(0.5, 5.5))
    fp = fit_modes(tau, _psi(tau, 2e-9), LAM1, window=(0.5, 5.5))
    rep = sign_check(fs, fp)
    assert rep["opposite"] and rep["a1_ratio"] == pytest.approx(0.5, rel=1e-5)
    with pytest.raises(SignCheckError):
        sign_check(fp, fit_modes(tau, _psi(tau, 1e-9), LAM1, window=(0.5, 5.5)))
    with pytest.raises(ValueError):
        sign_check(fp, fp)


def _outcome(T0, a1, cls):
    # unit gauge: t = T0 - e^{-s}, so psi(tau, 0) = V0 with tau = s
    s = np.linspace(0, 9, 4501)
    traj = np.column_stack([s, T0 - np.exp(-s), np.ones_like(s), _psi(s, a1), np.full_like(s, 1 / C)])
    return Outcome(cls, float(s[-1]), traj)


def test_blowup_time_of_unit_gauge_trajectory():
    o = _outcome(1.25, 1e-9, SUPERCRITICAL)
    assert blowup_time(o) == pytest.approx(1.25, abs=1e-15)
    tau, psi = psi_origin(o, 1.25)
    np.testing.assert_allclose(tau, o.s, atol=1e-12)
    np.testing.assert_allclose(psi, o.V0, rtol=1e-12)


def test_refine_blowup_time_removes_gauge_offset():
    T0 = 1.25
    outs = {"sub": _outcome(T0, -1e-12, SUBCRITICAL), "super": _outcome(T0, 1e-12, SUPERCRITICAL)}
    T, fits, w = refine_blowup_time(outs, T0 + 1e-6, LAM1, C)
    assert float(T) == pytest.approx(T0, abs=1e-12)
    assert fits["sub"].a1 == pytest.approx(-1e-12, rel=1e-4)
    assert fits["super"].a1 == pytest.approx(1e-12, rel=1e-4)
    assert w[0] < w[1]


FAST = EvolutionParams(grid=Grid.from_extent(20, Fraction(1, 16)))


def test_bisection_independent_of_parallelism():
    a = bisect(5, 1, 3, Fraction(1, 4), FAST, max_parallel=1)
    b = bisect(5, 1, 3, Fraction(1, 4), FAST, max_parallel=3)
    assert a.bracket == b.bracket == (Fraction(3, 2), Fraction(7, 4))
    assert a.epsilon == Fraction(1, 4)
    assert a.outcomes[a.bracket[0]].classification == SUBCRITICAL
    doc = json.loads(a.dumps())
    assert doc["d"] == 5 and doc["bracket"][0].startswith("1.5")


def test_bisection_rejects_bad_brackets():
    with pytest.raises(NoFlipError):
        bisect(5, 2, 3, Fraction(1, 2), FAST, max_parallel=1)
    with pytest.raises(ValueError):
        bisect(5, 3, 2, Fraction(1, 2), FAST)
    with pytest.raises(ValueError, match="precision floor"):
        bisect(5, 1, 3, Fraction(1, 10**16), FAST)
    with pytest.raises(ValueError):
        bisect(5, 1, 3, Fraction(1, 2), FAST, max_parallel=0)


def test_record_epsilon():
    r = ThresholdRecord(7, (Fraction(1), Fraction(5, 4)))
    assert r.epsilon == Fraction(1, 4)
    assert r.to_json()["epsilon"].startswith("0.25")

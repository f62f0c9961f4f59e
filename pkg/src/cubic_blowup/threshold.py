"""Critical amplitude search, blowup time and near-critical mode fit.

The bracket is refined on a dyadic lattice: a round with ``K = 2**k`` parts
probes the ``K - 1`` interior points concurrently and keeps the sub-bracket
where the classification flips.  Every probe point is a dyadic rational of
the initial bracket, so the final bracket does not depend on how many
probes run per round.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .evolution_ss import (SUBCRITICAL, SUPERCRITICAL, UNDECIDED, EvolutionParams, Outcome,
                           evolve, h_settled)
from .profiles import check_dimension, u_star


class NoFlipError(RuntimeError):
    """Probe classifications are not monotone in the amplitude."""

    def __init__(self, message, probes):
        super().__init__(message)
        self.probes = probes


class UndecidedProbeError(RuntimeError):
    def __init__(self, a, outcome):
        super().__init__(f"probe a={float(a)!r} undecided after retry: {outcome.diagnostics}")
        self.a = a
        self.outcome = outcome


class NotSettledError(RuntimeError):
    pass


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, cond):
        super().__init__(f"fit design matrix is ill-conditioned (cond={cond:.3g}); widen the window")
        self.cond = cond


class SignCheckError(AssertionError):
    pass


def _amp(q: Fraction, digits: int):
    """Amplitude in the evolution's precision: float for <= 15 digits, else a decimal string."""
    if digits <= 15:
        return q.numerator / q.denominator
    if digits <= 18:
        return np.longdouble(q.numerator) / np.longdouble(q.denominator)
    from mpmath import mp, mpf
    with mp.workdps(digits):
        return mpf(q.numerator) / q.denominator


@dataclass
class ThresholdRecord:
    """Bisection transcript; ``bracket`` holds exact rationals."""

    d: int
    bracket: tuple
    probes: list = field(default_factory=list)
    params: EvolutionParams = EvolutionParams()
    family: str = "sech"
    outcomes: dict = field(default_factory=dict, repr=False)

    @property
    def epsilon(self) -> Fraction:
        return self.bracket[1] - self.bracket[0]

    def to_json(self):
        lo, hi = self.bracket
        return {
            "d": self.d,
            "family": self.family,
            "bracket": [_frac_str(lo), _frac_str(hi)],
            "epsilon": _frac_str(self.epsilon),
            "probes": [{"a": _frac_str(a), "class": c, "s_end": repr(float(s))} for a, c, s in self.probes],
            "params": self.params.to_dict(),
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2)


def _frac_str(q: Fraction, digits=40) -> str:
    """Decimal expansion of ``q`` with ``digits`` significant digits."""
    from mpmath import mp, mpf
    with mp.workdps(digits + 5):
        return mp.nstr(mpf(q.numerator) / q.denominator, digits)


def _classify(args):
    d, a, params = args
    out = evolve(d, _amp(a, params.digits), params)
    return a, out


def _run_all(d, amps, params, max_parallel):
    jobs = [(d, a, params) for a in amps]
    if max_parallel <= 1 or len(jobs) == 1:
        return [_classify(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(max_parallel, len(jobs))) as ex:
        return list(ex.map(_classify, jobs))


def _decided(d, amps, params, max_parallel, record):
    """Classify ``amps``; undecided probes are retried once with twice ``s_max``."""
    results = dict(_run_all(d, amps, params, max_parallel))
    retry = [a for a, o in results.items() if o.classification == UNDECIDED]
    if retry:
        longer = replace(params, s_max=2 * params.s_max)
        results.update(dict(_run_all(d, retry, longer, max_parallel)))
    for a in amps:
        o = results[a]
        record.probes.append((a, o.classification, o.s_end))
        if o.classification == UNDECIDED:
            raise UndecidedProbeError(a, o)
    return results


def default_parallel():
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)


def bisect(d: int, a_lo, a_hi, eps_target, params: EvolutionParams = EvolutionParams(),
           max_parallel: int | None = None, keep_outcomes: bool = True) -> ThresholdRecord:
    """Shrink ``[a_lo, a_hi]`` around the critical amplitude to width ``<= eps_target``.

    ``a_lo`` must be subcritical and ``a_hi`` supercritical (checked first).
    Each round uses ``2**k`` parts with ``2**k - 1 <= max_parallel``; the
    final dyadic level is fixed by ``eps_target`` alone.
    """
    d = check_dimension(d)
    lo, hi = Fraction(str(a_lo)), Fraction(str(a_hi))
    if not 0 < lo < hi:
        raise ValueError("need 0 < a_lo < a_hi")
    eps = Fraction(str(eps_target))
    floor = Fraction(10) ** (-(params.digits - 2)) * hi
    if eps < floor:
        raise ValueError(f"eps_target below the precision floor {float(floor):.1e} for {params.digits} digits")
    max_parallel = default_parallel() if max_parallel is None else max_parallel
    if max_parallel < 1:
        raise ValueError("max_parallel must be >= 1")
    k_round = max(1, int(math.floor(math.log2(max_parallel + 1))))

    record = ThresholdRecord(d, (lo, hi), params=params)
    ends = _decided(d, [lo, hi], params, max_parallel, record)
    if ends[lo].classification != SUBCRITICAL or ends[hi].classification != SUPERCRITICAL:
        raise NoFlipError("initial bracket is not (Subcritical, Supercritical)", record.probes)
    keep = {lo: ends[lo], hi: ends[hi]}

    level = 0
    width0 = hi - lo
    levels = 0
    while width0 / 2**levels > eps:
        levels += 1
    while level < levels:
        k = min(k_round, levels - level)
        parts = 2**k
        w = (hi - lo) / parts
        amps = [lo + j * w for j in range(1, parts)]
        res = _decided(d, amps, params, max_parallel, record)
        labels = [SUBCRITICAL] + [res[a].classification for a in amps] + [SUPERCRITICAL]
        flips = [j for j in range(parts) if labels[j] != labels[j + 1]]
        if len(flips) != 1:
            raise NoFlipError(f"{len(flips)} classification flips in round at level {level}", record.probes)
        j = flips[0]
        new_lo, new_hi = lo + j * w, lo + (j + 1) * w
        pool = {**keep, **res}
        keep = {new_lo: pool[new_lo], new_hi: pool[new_hi]}
        lo, hi = new_lo, new_hi
        level += k
        record.bracket = (lo, hi)
    if keep_outcomes:
        record.outcomes = keep
    return record


def blowup_time(outcome: Outcome):
    """``T = t(s_end) + h(s_end) e^{-s_end}`` from the last recorded step."""
    s, t, h = outcome.trajectory[-1, 0], outcome.trajectory[-1, 1], outcome.trajectory[-1, 2]
    return t + h * _exp_neg(s)


def _exp_neg(s):
    from mpmath import mp, mpf
    if isinstance(s, mpf):
        return mp.exp(-s)
    return np.exp(-s)


def estimate_blowup_time(record: ThresholdRecord, side: str = "super",
                         params: EvolutionParams | None = None):
    """Blowup time of the near-critical solution from a bracket endpoint.

    The endpoint is re-evolved with ``settle_h`` until ``h`` drifts by less
    than ``h_drift`` per unit ``s`` over ``sustain``; the integral defining
    ``t`` is then closed with ``h`` frozen.  Subcritical endpoints never
    settle and raise :class:`NotSettledError`.
    """
    if side not in ("super", "sub"):
        raise ValueError("side must be 'super' or 'sub'")
    params = params or record.params
    a = record.bracket[1] if side == "super" else record.bracket[0]
    out = evolve(record.d, _amp(a, params.digits), replace(params, settle_h=True))
    if out.classification != SUPERCRITICAL or not h_settled(out, params):
        raise NotSettledError(f"h did not settle by s={out.s_end:.3g}; increase s_max")
    return blowup_time(out)


def psi_origin(outcome: Outcome, T):
    """``(tau, psi(tau, 0))`` with ``psi = (T - t) e^s V(s, 0)`` and ``tau = -log(T - t)``."""
    s, t, V0 = (np.asarray(outcome.trajectory[:, k], dtype=np.longdouble) for k in (0, 1, 3))
    T = np.longdouble(T) if not isinstance(T, np.longdouble) else T
    ok = t < T
    gap = T - t[ok]
    return (-np.log(gap)).astype(float), (gap * np.exp(s[ok]) * V0[ok]).astype(float)


def plateau_window(tau, psi, c_ref, tol=1e-2):
    """First stretch where ``|psi - c_ref| < tol``: from entry to departure."""
    inside = np.abs(psi - c_ref) < tol
    if not inside.any():
        raise ValueError("psi never comes within tol of the reference value")
    i0 = int(np.argmax(inside))
    i1 = i0
    while i1 + 1 < len(inside) and inside[i1 + 1]:
        i1 += 1
    return float(tau[i0]), float(tau[i1])


@dataclass
class ModeFit:
    c: float
    a1: float
    a0: float
    a_minus1: float
    lambda_minus1: float
    lambda1: float
    window: tuple
    residual: float
    lambda1_source: str = ""

    def model(self, tau):
        tau = np.asarray(tau, dtype=float)
        return (self.c + self.a1 * np.exp(self.lambda1 * tau) + self.a0 * np.exp(tau)
                + self.a_minus1 * np.exp(self.lambda_minus1 * tau))

    def to_json(self):
        r = lambda x: repr(float(x))
        return {"c": r(self.c), "a1": r(self.a1), "a0": r(self.a0), "a_minus1": r(self.a_minus1),
                "lambda_minus1": r(self.lambda_minus1), "lambda1": r(self.lambda1),
                "lambda1_source": self.lambda1_source, "window": [r(w) for w in self.window],
                "residual": r(self.residual)}


def fit_modes(tau, psi, lambda1, window=None, c_init=None, lambda_minus1_init=-0.55,
              lambda1_source="", max_cond=1e12) -> ModeFit:
    """Least-squares fit of ``c + a1 e^{l1 tau} + a0 e^tau + am1 e^{lm1 tau}`` with ``l1`` frozen.

    The exponentials are referenced to the window end (``e^{l (tau - tau_hi)}``)
    so the unknowns are of comparable size.  The amplitudes enter linearly, so
    ``lm1`` is located first by a bounded scalar search on the projected
    residual (variable projection); Levenberg-Marquardt then polishes all
    five parameters together.
    """
    tau = np.asarray(tau, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if window is None:
        if c_init is None:
            raise ValueError("window or c_init is required")
        window = plateau_window(tau, psi, c_init)
    lo, hi = window
    m = (tau >= lo) & (tau <= hi)
    x, y = tau[m], psi[m]
    if len(x) < 8:
        raise RankDeficientError(np.inf)
    l1 = float(lambda1)

    def design(lm1):
        return np.column_stack([np.ones_like(x), np.exp(l1 * (x - hi)), np.exp(x - hi), np.exp(lm1 * (x - lo))])

    A = design(lambda_minus1_init)
    scale = np.linalg.norm(A, axis=0)
    cond = np.linalg.cond(A / scale)
    if not np.isfinite(cond) or cond > max_cond:
        raise RankDeficientError(cond)

    def projected(lm1):
        B = design(lm1)
        coef = np.linalg.lstsq(B, y, rcond=None)[0]
        return coef, float(np.sum((B @ coef - y) ** 2))

    span = 0.5 * abs(lambda_minus1_init)
    best = minimize_scalar(lambda v: projected(v)[1], method="bounded",
                           bounds=(lambda_minus1_init - span, lambda_minus1_init + span),
                           options={"xatol": 1e-12})
    lm1 = float(best.x)
    coef0 = projected(lm1)[0]

    def resid(p):
        return design(p[4]) @ p[:4] - y

    sol = least_squares(resid, np.append(coef0, lm1), method="lm",
                        x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if np.sum(sol.fun**2) > np.sum(resid(np.append(coef0, lm1)) ** 2):
        sol.x, sol.fun = np.append(coef0, lm1), resid(np.append(coef0, lm1))
    C, A1, A0, AM1, LM1 = sol.x
    return ModeFit(c=C, a1=A1 * math.exp(-l1 * hi), a0=A0 * math.exp(-hi),
                   a_minus1=AM1 * math.exp(-LM1 * lo), lambda_minus1=LM1, lambda1=l1,
                   window=(lo, hi), residual=float(np.sqrt(np.mean(sol.fun**2))),
                   lambda1_source=lambda1_source)


def sign_check(fit_sub: ModeFit, fit_super: ModeFit) -> dict:
    """``a1`` must have opposite signs for the sub- and supercritical endpoints."""
    if fit_sub is fit_super or fit_sub.to_json() == fit_super.to_json():
        raise ValueError("sign check needs fits of two different runs")
    ok = np.sign(fit_sub.a1) == -np.sign(fit_super.a1) and fit_sub.a1 != 0
    report = {"a1_sub": fit_sub.a1, "a1_super": fit_super.a1, "opposite": bool(ok),
              "a1_ratio": abs(fit_sub.a1 / fit_super.a1) if fit_super.a1 else math.inf}
    if not ok:
        raise SignCheckError(f"a1 has the same sign on both sides: {report}")
    return report


def u_star_center(d) -> float:
    return float(u_star(d, 0))


def unstable_eigenvalue(d, digits=30, N=120):
    """Largest eigenvalue other than the gauge value 1, with a provenance string."""
    from .spectrum_shoot import find_eigenvalues
    rep = find_eigenvalues(d, window=(1.5, 5), N=N, digits=digits, grid_step="0.05")
    lam = max(float(x) for x in rep.values())
    return lam, f"spectrum_shoot.find_eigenvalues(d={d}, window=[1.5,5], N={N}, digits={digits})"


@dataclass
class NearCriticalAnalysis:
    d: int
    T: float
    fits: dict
    outcomes: dict
    signs: dict | None
    plateau: dict


def pair_window(tau_sub, psi_sub, tau_sup, psi_sup, c_ref, tol_in=5e-2, tol_split=1e-3):
    """Fit window shared by a sub/supercritical pair.

    Opens when the supercritical ``psi`` first comes within ``tol_in`` of
    ``c_ref`` and closes when the two runs differ by more than ``tol_split``,
    i.e. once the unstable mode has grown enough to separate them.
    """
    tau_sub, psi_sub = np.asarray(tau_sub, float), np.asarray(psi_sub, float)
    tau_sup, psi_sup = np.asarray(tau_sup, float), np.asarray(psi_sup, float)
    inside = np.abs(psi_sup - c_ref) < tol_in
    if not inside.any():
        raise ValueError("psi never comes within tol_in of the reference value")
    lo = float(tau_sup[int(np.argmax(inside))])
    top = min(tau_sub[-1], tau_sup[-1])
    grid = tau_sup[(tau_sup >= lo) & (tau_sup <= top)]
    gap = np.abs(np.interp(grid, tau_sub, psi_sub) - np.interp(grid, tau_sup, psi_sup))
    split = gap > tol_split
    hi = float(grid[int(np.argmax(split))]) if split.any() else float(grid[-1])
    if hi <= lo:
        raise ValueError("the pair separates before reaching the plateau")
    return lo, hi


def refine_blowup_time(outcomes, T, lambda1, c_ref, window=None, tol=1e-12, max_iter=12, tol_in=5e-2):
    """Shift ``T`` until the fitted gauge mode vanishes.

    A blowup-time error ``dT`` appears in ``psi`` as the gauge mode with
    ``a0 = c dT``; each pass fits both runs and subtracts the mean ``a0 / c``.
    ``tol_in`` is passed to :func:`pair_window` when ``window`` is not given.
    Returns ``(T, fits, window)``.
    """
    T = np.longdouble(T)
    for _ in range(max_iter):
        series = {k: psi_origin(o, T) for k, o in outcomes.items()}
        w = window or pair_window(*series["sub"], *series["super"], c_ref, tol_in=tol_in)
        fits = {k: fit_modes(*series[k], lambda1, window=w) for k in series}
        shift = np.mean([f.a0 / f.c for f in fits.values()])
        if abs(shift) < tol * T:
            break
        T = T - np.longdouble(shift)
    return T, fits, w


def analyze_endpoints(d, a_lo, a_hi, params: EvolutionParams = EvolutionParams(),
                      lambda1=None, lambda1_source="", window=None, T=None,
                      refine_T=True) -> NearCriticalAnalysis:
    """Blowup time, plateau values and mode fits for a sub/supercritical pair.

    ``T`` is first estimated from the supercritical amplitude (``h`` settled)
    and then refined so that the gauge mode drops out of both fits.  The fit
    window defaults to :func:`pair_window`.
    """
    d = check_dimension(d)
    record = ThresholdRecord(d, (Fraction(str(a_lo)), Fraction(str(a_hi))), params=params)
    if T is None:
        T = estimate_blowup_time(record, "super", params)
    if lambda1 is None:
        lambda1, lambda1_source = unstable_eigenvalue(d)
    c_ref = u_star_center(d)
    outcomes, plateau = {}, {}
    for side, a in (("sub", record.bracket[0]), ("super", record.bracket[1])):
        out = evolve(d, _amp(a, params.digits), params)
        outcomes[side] = out
        P0 = np.asarray(out.P0, dtype=float)
        plateau[side] = float(P0[np.argmin(np.abs(P0 - 1 / c_ref))])
    if refine_T:
        T, fits, window = refine_blowup_time(outcomes, T, lambda1, c_ref, window)
    else:
        series = {k: psi_origin(o, T) for k, o in outcomes.items()}
        window = window or pair_window(*series["sub"], *series["super"], c_ref)
        fits = {k: fit_modes(*series[k], lambda1, window=window) for k in series}
    for f in fits.values():
        f.lambda1_source = lambda1_source
    try:
        signs = sign_check(fits["sub"], fits["super"])
    except SignCheckError as exc:
        signs = {"opposite": False, "error": str(exc)}
    return NearCriticalAnalysis(d, float(T), fits, outcomes, signs, plateau)

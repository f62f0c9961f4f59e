"""Continued-fraction eigenvalue solver for three-term recurrences.

The large-dimension limit of the mode problem (``x = d z``, ``d -> oo``) has a
formal power series solution ``y = sum a_n z^n`` whose coefficients obey

    a_{n+2} = A_n a_{n+1} + B_n a_n,    a_0 = 1,  a_1 = A_{-1},

    A_n = (lam^2 + (4n+7) lam + 4n^2 + 8n - 6) / (2(n+2)),
    B_n = 3 (lam+2n-2)(lam+2n-3) / (2(n+2)).

The series converges only when ``a_n`` is the minimal solution, which by
Pincherle's theorem happens exactly at the zeros of

    F(lam) = A_{-1} + B_0/(A_0 + B_1/(A_1 + ...)).

The same machinery applies to the power series of the finite-``d`` Heun
equation about ``x = 0`` (see :func:`heun_recurrence`).  There the two
solutions of the recurrence grow like ``1`` and ``(-3/(d-4))^n``; the minimal
one is analytic beyond ``x = 1``, which is the eigenvalue condition.  For
``d = 7`` both rates have modulus one and the series is taken in a Moebius
variable instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from mpmath import mp, mpf

from .profiles import check_dimension
from .spectrum_shoot import (EigenvalueReport, HeunProblem, _local_polys, _pad,
                             bisect_root, merge_roots)


class ConvergentZeroError(ZeroDivisionError):
    def __init__(self, depth):
        super().__init__(f"zero denominator in continued fraction at level {depth}")
        self.depth = depth


class AnomalousCollisionWarning(UserWarning):
    """An eigenvalue coincides with a pole of the continued fraction."""


@dataclass(frozen=True)
class ThreeTermRecurrence:
    """``a_{n+2} = A(n) a_{n+1} + B(n) a_n`` with ``a_0 = 1`` and ``a_1 = A(-1)``."""

    A: object
    B: object
    asymptotic_ratio: object = None

    def coefficients(self, n_terms):
        a = [mpf(1), self.A(-1)]
        for n in range(n_terms - 2):
            a.append(self.A(n) * a[n + 1] + self.B(n) * a[n])
        return a[:n_terms]

    def shifted_solution(self, n_terms):
        """Solution seeded with ``a_0 = 0, a_1 = 1``."""
        a = [mpf(0), mpf(1)]
        for n in range(n_terms - 2):
            a.append(self.A(n) * a[n + 1] + self.B(n) * a[n])
        return a[:n_terms]


def limiting_coeffs(n, lam):
    """``(A_n(lam), B_n(lam))`` of the large-dimension recurrence.

    ``B`` is undefined for ``n = -1`` and returned as ``None`` there.
    """
    if n < -1:
        raise ValueError("n must be >= -1")
    lam = mpf(lam)
    A = (lam**2 + (4 * n + 7) * lam + 4 * n**2 + 8 * n - 6) / (2 * (n + 2))
    if n == -1:
        return A, None
    B = 3 * (lam + 2 * n - 2) * (lam + 2 * n - 3) / (2 * (n + 2))
    return A, B


def limiting_recurrence(lam) -> ThreeTermRecurrence:
    lam = mpf(lam)
    return ThreeTermRecurrence(lambda n: limiting_coeffs(n, lam)[0],
                               lambda n: limiting_coeffs(n, lam)[1])


def _mobius_polys(d, lam):
    """Polynomial coefficients of the Heun equation after ``xi = x/(x - x_s)``.

    ``x_s = (4-d)/3`` moves to infinity, ``x = 1`` to ``xi = 3/(d-1)`` and
    ``x = oo`` to ``xi = 1``.  With ``y = (1-xi)^((lam-3)/2) Z(xi)`` one of the
    exponents at ``xi = 1`` becomes zero and ``Z`` obeys
    ``P2 Z'' + P1 Z' + P0 Z = 0`` with the polynomials below (derived once
    symbolically; :func:`mobius_residual` checks them).
    """
    P2 = [mpf(0), mpf(-12), mpf(4 * (d + 2)), mpf(-4 * (d - 1))]
    P1 = [mpf(-6 * d), 4 * (d * lam + 4 * d - lam - 1), -4 * (d - 1) * (lam + 3)]
    P0 = [d * lam**2 + 6 * d * lam - 19 * d - 4 * lam**2 - 12 * lam + 16,
          -(d - 1) * (lam - 3) * (lam + 7), mpf(0), mpf(0)]
    return P2, P1, P0


def mobius_residual(d, lam, Z, xi):
    """Residual of the transformed equation for a callable ``Z`` at ``xi``."""
    xi = mpf(xi)
    z0, z1, z2 = mp.diffs(Z, xi, 2)
    P2, P1, P0 = _mobius_polys(d, mpf(lam))
    ev = lambda p: sum(c * xi**k for k, c in enumerate(p))
    return ev(P2) * z2 + ev(P1) * z1 + ev(P0) * z0


def mobius_variable(d, x):
    return mpf(x) / (mpf(x) - mpf(4 - d) / 3)


def _pk_moduli(d, variable):
    """Moduli of the characteristic ratios of the recurrence (Perron-Kreuser)."""
    if variable == "x":
        return (mpf(1), abs(mpf(3) / (d - 4)))
    return (mpf(d - 1) / 3, mpf(1))


def default_variable(d):
    """``"x"`` when the plain series has geometrically separated solutions, else ``"mobius"``."""
    r = _pk_moduli(d, "x")
    return "x" if r[0] != r[1] else "mobius"


def heun_recurrence(d, lam, variable="x") -> ThreeTermRecurrence:
    """Power-series recurrence of the Heun equation about ``x = 0`` in CF form.

    From ``q2 y'' + q1 y' + q0 y = 0`` the order-``n`` equation reads
    ``piv_n a_{n+1} + c_n a_n + e_n a_{n-1} = 0``.  Shifting the index by one
    puts it in the form ``a_{n+2} = A_n a_{n+1} + B_n a_n`` with
    ``A_n = -c_{n+1}/piv_{n+1}``, ``B_n = -e_{n+1}/piv_{n+1}`` and
    ``A_{-1} = -c_0/piv_0``.

    ``variable="x"`` expands in ``x``; the two recurrence solutions grow like
    ``1`` (singular at ``x = 1``) and ``(-3/(d-4))^n``.  ``variable="mobius"``
    expands in ``xi = x/(x - (4-d)/3)``; the solutions grow like
    ``((d-1)/3)^n`` (singular at ``x = 1``) and ``1``.  In both cases the
    minimal solution is the one analytic at ``x = 1``.
    """
    d = check_dimension(d)
    lam = mpf(lam)
    if variable == "x":
        q2, q1, q0 = (_pad(p, 4) for p in _local_polys(HeunProblem(d, lam), 0))
    elif variable == "mobius":
        q2, q1, q0 = (_pad(p, 4) for p in _mobius_polys(d, lam))
    else:
        raise ValueError("variable must be 'x' or 'mobius'")

    def piv(k):
        return (k + 1) * (q2[1] * k + q1[0])

    def A(n):
        k = n + 1
        return -(q2[2] * k * (k - 1) + q1[1] * k + q0[0]) / piv(k)

    def B(n):
        k = n + 1
        return -(q2[3] * (k - 1) * (k - 2) + q1[2] * (k - 1) + q0[1]) / piv(k)

    return ThreeTermRecurrence(A, B)


def _tail_estimate(A, B):
    """Fixed point ``t = B/(A + t)`` belonging to the minimal solution.

    The recurrence ratio ``r = a_{n+2}/a_{n+1}`` solves ``r^2 = A r + B``;
    the minimal solution takes the root of smaller modulus and the tail of
    the fraction equals ``-r``.
    """
    disc = mp.sqrt(A * A + 4 * B) if A * A + 4 * B >= 0 else mp.sqrt(mp.mpc(A * A + 4 * B))
    roots = [(A + disc) / 2, (A - disc) / 2]
    r = min(roots, key=abs)
    return -mp.re(r)


def evaluate_cf(rec: ThreeTermRecurrence, depth: int, tail="zero", start=-1):
    """``A(s) + B(s+1)/(A(s+1) + B(s+2)/(A(s+2) + ...))`` with ``s = start``.

    Evaluated bottom-up over ``depth`` levels; the innermost tail is zero or
    the fixed point of ``t = B/(A + t)`` at the truncation level.
    """
    last = start + depth
    t = mpf(0) if tail == "zero" else _tail_estimate(rec.A(last), rec.B(last))
    for k in range(last, start, -1):
        den = rec.A(k) + t
        if den == 0:
            raise ConvergentZeroError(k - start)
        t = rec.B(k) / den
    return rec.A(start) + t


@dataclass(frozen=True)
class CfEvaluation:
    lam: mpf
    depth: int
    value: mpf
    tail_choice: str


def cf_value(lam, depth=512, tail="zero") -> CfEvaluation:
    """Value of ``A_{-1} + B_0/(A_0 + B_1/(A_1 + ...))`` for the limiting recurrence."""
    if depth < 8:
        raise ValueError("depth must be at least 8")
    if tail not in ("zero", "asymptotic"):
        raise ValueError("tail must be 'zero' or 'asymptotic'")
    lam = mpf(lam)
    return CfEvaluation(lam, depth, evaluate_cf(limiting_recurrence(lam), depth, tail), tail)


def convergent(rec: ThreeTermRecurrence, depth: int, start=-1):
    """Numerator and denominator ``(P, Q)`` of the depth-``depth`` convergent.

    ``P/Q`` equals :func:`evaluate_cf` with a zero tail.  Both are polynomial
    in the coefficients, so ``P`` carries the zeros of the truncated fraction
    without its poles (the zeros of ``Q``).  A root lying next to a pole is
    therefore still a sign change of ``P``.
    """
    p_prev, p = mpf(1), rec.A(start)
    q_prev, q = mpf(0), mpf(1)
    for k in range(start + 1, start + depth + 1):
        a, b = rec.A(k), rec.B(k)
        p, p_prev = a * p + b * p_prev, p
        q, q_prev = a * q + b * q_prev, q
    return p, q


def _grid(lo, hi, step):
    lo, hi, step = mpf(lo), mpf(hi), mpf(step)
    if not (mp.isfinite(lo) and mp.isfinite(hi)) or hi <= lo:
        raise ValueError("window must be finite with lo < hi")
    n = max(1, int(mp.ceil((hi - lo) / step)))
    return [lo + (hi - lo) * k / n for k in range(n + 1)]


def _zeros(func, grid, vals, tol, check=None):
    """Bisect every sign change of the entire function ``func`` on ``grid``.

    With ``check`` (the same function at twice the depth) each root must keep
    a sign change within ``2*tol``; roots that do not are returned as spurious.
    """
    roots = [x for x, v in zip(grid, vals) if v == 0]
    spurious = []
    for k in range(len(grid) - 1):
        a, b, fa, fb = grid[k], grid[k + 1], vals[k], vals[k + 1]
        if fa == 0 or fb == 0 or mp.sign(fa) == mp.sign(fb):
            continue
        r = bisect_root(func, a, b, fa, tol)
        if check is not None:
            lo2, hi2 = check(r - 2 * tol), check(r + 2 * tol)
            if not (lo2 == 0 or hi2 == 0 or mp.sign(lo2) != mp.sign(hi2)):
                spurious.append(r)
                continue
        roots.append(r)
    return merge_roots(roots, 10 * tol), spurious


def _cf_search(make_rec, lo, hi, grid_step, depth, digits):
    """Zeros and poles of the truncated fraction from one scan of ``(P, Q)``."""
    tol = mpf(10) ** (-(digits // 2))
    grid = _grid(lo, hi, grid_step)
    pairs = [convergent(make_rec(x), depth) for x in grid]
    g = lambda x: convergent(make_rec(x), depth)[0]
    g2 = lambda x: convergent(make_rec(x), 2 * depth)[0]
    k = lambda x: convergent(make_rec(x), depth)[1]
    k2 = lambda x: convergent(make_rec(x), 2 * depth)[1]
    roots, spurious = _zeros(g, grid, [p[0] for p in pairs], tol, g2)
    poles, _ = _zeros(k, grid, [p[1] for p in pairs], tol, k2)
    collisions = [r for r in roots if any(abs(r - q) < 10 * tol for q in poles)]
    return roots, poles, collisions, spurious


def _report(d, method, roots, residual, depth, digits, window, poles, collisions):
    eigen = [(r, abs(residual(r))) for r in sorted(roots, reverse=True)]
    report = EigenvalueReport(d, method, eigen, depth, digits, window,
                              max([e for _, e in eigen], default=mpf(0)))
    report.poles = sorted(poles, reverse=True)
    if collisions:
        warnings.warn("eigenvalue at a pole of the continued fraction: "
                      + ", ".join(mp.nstr(c, 12) for c in collisions), AnomalousCollisionWarning)
    report.collisions = collisions
    return report


def find_cf_eigenvalues(window=("-4.5", "3"), depth=512, digits=50,
                        grid_step="0.01") -> EigenvalueReport:
    """Eigenvalues of the large-dimension limit in ``window``.

    The anomalous values met during the scan are reported under ``poles``.
    An eigenvalue that coincides with one of them is kept and flagged with
    :class:`AnomalousCollisionWarning`.
    """
    with mp.workdps(digits):
        lo, hi = mpf(window[0]), mpf(window[1])
        roots, poles, collisions, _ = _cf_search(limiting_recurrence, lo, hi, grid_step,
                                                 depth, digits)
        res = lambda lam: evaluate_cf(limiting_recurrence(lam), depth)
        return _report("inf", "continued-fraction", roots, res, depth, digits, (lo, hi),
                       poles, collisions)


def find_anomalous(window=("-4.5", "3"), depth=512, digits=50, grid_step="0.01"):
    """Values of ``lam`` where the solution seeded with ``a_0 = 0, a_1 = 1`` is minimal.

    These are the zeros of ``K = A_0 + B_1/(A_1 + ...)``, i.e. the poles of
    the eigenvalue function.
    """
    with mp.workdps(digits):
        _, poles, _, _ = _cf_search(limiting_recurrence, window[0], window[1], grid_step,
                                    depth, digits)
        return sorted(poles, reverse=True)


def heun_cf_value(d, lam, depth=512, variable=None, tail="zero"):
    variable = variable or default_variable(d)
    return evaluate_cf(heun_recurrence(d, lam, variable), depth, tail)


def heun_cf_eigenvalues(d, window=(-4, 5), depth=512, digits=50, grid_step="0.01",
                        variable=None) -> EigenvalueReport:
    """Eigenvalues of the finite-``d`` Heun equation by the continued-fraction method.

    Resonant values where both Frobenius solutions at ``x = 1`` are analytic
    are eigenvalues the minimality criterion cannot see (every solution is
    then analytic at ``x = 1``); they are added from the resonance check and
    the search discards candidates next to them.
    """
    from .spectrum_shoot import resonant_series

    d = check_dimension(d)
    if d < 7:
        raise ValueError(
            f"d={d}: the singular point (4-d)/3 lies inside the unit disk; "
            "use spectrum_shoot.find_eigenvalues")
    variable = variable or default_variable(d)
    with mp.workdps(digits):
        lo, hi = mpf(window[0]), mpf(window[1])
        tol = mpf(10) ** (-(digits // 2))
        make = lambda lam: heun_recurrence(d, lam, variable)
        roots, poles, collisions, _ = _cf_search(make, lo, hi, grid_step, depth, digits)
        resonant = []
        m_lo = max(1, int(mp.ceil(mpf(d - 3) / 2 - hi)))
        m_hi = int(mp.floor(mpf(d - 3) / 2 - lo))
        for m in range(m_lo, m_hi + 1):
            lam_m = mpf(d - 3) / 2 - m
            if resonant_series(HeunProblem(d, lam_m), 40).both_analytic:
                resonant.append(lam_m)
        near = lambda r: any(abs(r - q) < mpf(10) ** (-6) for q in resonant)
        roots = [r for r in roots if not near(r)] + resonant
        collisions = [c for c in collisions if not near(c)]
        res = lambda lam: (mpf(0) if any(lam == q for q in resonant)
                           else evaluate_cf(make(lam), depth))
        return _report(d, "continued-fraction", merge_roots(roots, 10 * tol), res, depth,
                       digits, (lo, hi), poles, collisions)

"""Eigenvalues of the mode equation by two-sided Frobenius series and Wronskian matching.

After ``x = rho^2`` and ``f = y / (d-4+3x)^2`` the mode equation becomes the
Heun equation

    y'' + (d/(2x) + (2 lam+5-d)/(2(x-1)) - 12/(3x+d-4)) y'
        + (3(lam-3)(lam-2) x + lam(lam+3)(d-4) - 10d + 16) / (4x(x-1)(3x+d-4)) y = 0.

Multiplying by ``4x(x-1)(3x+d-4)`` gives ``p2 y'' + p1 y' + p0 y = 0`` with
polynomial coefficients of degree 3, 2 and 1.  Power series about any
point follow from that polynomial form: about the singular points
``x = 0`` and ``x = 1`` the recurrence has three terms, about an ordinary
point it has four.

The analytic solution at ``x = 0`` is ``y0 = 1 + sum a_n x^n`` and the one at
``x = 1`` is ``y1 = 1 + sum b_n (1-x)^n``.  When ``m = (d-3)/2 - lam`` is a
positive integer the second series breaks down at order ``m`` and the
analytic solution at ``x = 1`` is ``(1-x)^m w(x)`` instead.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

from mpmath import mp, mpf

from .profiles import check_dimension

RESONANCE_TOL = mpf("1e-20")


class ResonantCaseError(ValueError):
    """``(d-3)/2 - lam`` is a positive integer; use :func:`resonant_series`."""

    def __init__(self, d, lam, m):
        super().__init__(
            f"resonant case at d={d}, lambda={mp.nstr(lam, 15)}: (d-3)/2 - lambda = {m}; "
            "use resonant_series")
        self.m = m


class ZeroPivotError(ArithmeticError):
    def __init__(self, index):
        super().__init__(f"zero pivot in series recurrence at index {index}")
        self.index = index


class LogarithmicObstructionError(ValueError):
    """Only the subdominant Frobenius solution at ``x = 1`` is analytic."""


class SeriesDivergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class HeunProblem:
    d: int
    lam: mpf

    def __post_init__(self):
        object.__setattr__(self, "d", check_dimension(self.d))
        object.__setattr__(self, "lam", mpf(self.lam))

    def coefficients(self):
        """Ascending coefficient lists of ``p2, p1, p0`` in powers of ``x``."""
        d, lam = self.d, self.lam
        # p2 = 4x(x-1)(3x+d-4)
        p2 = [mpf(0), mpf(-4 * (d - 4)), mpf(4 * (d - 4) - 12), mpf(12)]
        # p1 = 2d(x-1)(3x+d-4) + 2(2lam+5-d) x (3x+d-4) - 48 x (x-1)
        c = 2 * (2 * lam + 5 - d)
        p1 = [mpf(-2 * d * (d - 4)),
              2 * d * (d - 4) - 6 * d + c * (d - 4) + 48,
              6 * d + 3 * c - 48]
        p0 = [lam * (lam + 3) * (d - 4) - 10 * d + 16, 3 * (lam - 3) * (lam - 2)]
        return p2, p1, p0

    def resonance_index(self):
        """The integer ``m = (d-3)/2 - lam`` when it is a positive integer, else ``None``."""
        m = mpf(self.d - 3) / 2 - self.lam
        k = int(mp.nint(m))
        if k >= 1 and abs(m - k) < RESONANCE_TOL:
            return k
        return None

    def residual(self, y, x):
        """Residual of the Heun equation for a callable ``y`` at ``x``."""
        x = mpf(x)
        y0, y1, y2 = mp.diffs(y, x, 2)
        p2, p1, p0 = (_polyval(p, x) for p in self.coefficients())
        return p2 * y2 + p1 * y1 + p0 * y0


def _polyval(coeffs, x):
    acc = mpf(0)
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _taylor_shift(coeffs, c):
    """Coefficients of ``p(c + t)`` in powers of ``t``."""
    out = list(coeffs)
    n = len(out)
    for i in range(n):
        for j in range(n - 2, i - 1, -1):
            out[j] += c * out[j + 1]
    return out


def _reflect(coeffs):
    """Coefficients of ``p(1 - u)`` in powers of ``u``."""
    shifted = _taylor_shift(coeffs, mpf(1))
    return [c if k % 2 == 0 else -c for k, c in enumerate(shifted)]


def _local_polys(problem, center):
    """Local coefficient polynomials of the ODE in the variable used at ``center``.

    For ``center == 1`` the variable is ``u = 1 - x``; otherwise ``t = x - center``.
    """
    p2, p1, p0 = problem.coefficients()
    if center == 1:
        return _reflect(p2), [-c for c in _reflect(p1)], _reflect(p0)
    c = mpf(center)
    return _taylor_shift(p2, c), _taylor_shift(p1, c), _taylor_shift(p0, c)


def _pad(p, k):
    return p + [mpf(0)] * (k - len(p))


def _singular_remainder(q2, q1, q0, a, n):
    """Terms of the order-``n`` equation that do not involve ``a[n+1]``."""
    acc = (q2[2] * n * (n - 1) + q1[1] * n + q0[0]) * a[n]
    if n >= 1:
        acc += (q2[3] * (n - 1) * (n - 2) + q1[2] * (n - 1) + q0[1]) * a[n - 1]
    return acc


def _singular_recurrence(q2, q1, q0, a, start, N):
    """Extend ``a`` (list with ``a[0..start]`` set) up to index ``N`` at a singular point."""
    for n in range(start, N):
        piv = (n + 1) * (q2[1] * n + q1[0])
        if piv == 0:
            raise ZeroPivotError(n + 1)
        a.append(-_singular_remainder(q2, q1, q0, a, n) / piv)
    return a


@dataclass
class FrobeniusSeries:
    """Truncated series about ``x = 0`` (variable ``x``) or ``x = 1`` (variable ``1-x``).

    ``exponent`` is the Frobenius exponent factored out at ``x = 1``: the
    represented function is ``(1-x)**exponent * sum(coeffs[n] (1-x)^n)``.
    """

    center: int
    coeffs: list
    truncation: int
    exponent: int = 0
    both_analytic: bool = False

    def _var(self, x):
        return mpf(x) if self.center == 0 else 1 - mpf(x)

    def _sum(self, v):
        s = mpf(0)
        ds = mpf(0)
        for c in reversed(self.coeffs):
            ds = ds * v + s
            s = s * v + c
        return s, ds

    def value(self, x):
        return self.value_and_derivative(x)[0]

    def derivative(self, x):
        return self.value_and_derivative(x)[1]

    def value_and_derivative(self, x):
        """``(y(x), dy/dx(x))``."""
        v = self._var(x)
        s, ds = self._sum(v)
        m = self.exponent
        if m:
            s, ds = v**m * s, m * v**(m - 1) * s + v**m * ds
        if self.center == 1:
            ds = -ds
        return s, ds

    def check_convergence(self, x):
        """Warn when the last tenth of the terms is not decreasing at ``x``."""
        v = abs(self._var(x))
        n = len(self.coeffs)
        k = max(2, n // 10)
        tail = [abs(self.coeffs[j]) * v**j for j in range(n - k, n)]
        if all(tail[i + 1] >= tail[i] for i in range(len(tail) - 1)) and tail[-1] > 0:
            warnings.warn(
                f"series about x={self.center} is not converging at x={mp.nstr(mpf(x), 6)}",
                SeriesDivergenceWarning, stacklevel=2)
            return False
        return True


def series_coeffs(problem: HeunProblem, center: int, N: int) -> FrobeniusSeries:
    """Normalized analytic Frobenius series about ``center`` in ``{0, 1}``."""
    if center not in (0, 1):
        raise ValueError("center must be 0 or 1")
    if N < 4:
        raise ValueError("truncation N must be at least 4")
    if center == 1:
        m = problem.resonance_index()
        if m is not None:
            raise ResonantCaseError(problem.d, problem.lam, m)
    q2, q1, q0 = (_pad(p, 4) for p in _local_polys(problem, center))
    coeffs = _singular_recurrence(q2, q1, q0, [mpf(1)], 0, N)
    return FrobeniusSeries(center, coeffs, N)


def _resonant_data(problem, N):
    """Subdominant series coefficients at ``x = 1`` and the obstruction at order ``m``."""
    m = problem.resonance_index()
    if m is None:
        raise ValueError(
            f"(d-3)/2 - lambda is not a positive integer for d={problem.d}, "
            f"lambda={mp.nstr(problem.lam, 15)}")
    # Evaluate exactly at the resonance so the pivot vanishes identically.
    exact = HeunProblem(problem.d, mpf(problem.d - 3) / 2 - m)
    q2, q1, q0 = (_pad(p, 4) for p in _local_polys(exact, 1))
    head = _singular_recurrence(q2, q1, q0, [mpf(1)], 0, m - 1) if m > 1 else [mpf(1)]
    obstruction = _singular_remainder(q2, q1, q0, head, m - 1)
    # w(u) with u = 1 - x: coefficients of y = u^m w are the recurrence seeded at index m.
    sub = [mpf(0)] * m + [mpf(1)]
    sub = _singular_recurrence(q2, q1, q0, sub, m, N + m)
    return m, head, obstruction, sub[m:]


def resonant_series(problem: HeunProblem, N: int, require_both: bool = False) -> FrobeniusSeries:
    """Analytic solution at ``x = 1`` in the resonant case ``(d-3)/2 - lam = m``.

    Returns ``(1-x)^m w(x)`` with ``w(1) = 1``.  When the order-``m``
    equation is satisfied identically both Frobenius solutions are
    analytic, ``both_analytic`` is set and ``lam`` is an eigenvalue.
    """
    m, head, obstruction, w = _resonant_data(problem, N)
    scale = max([abs(c) for c in head] + [mpf(1)])
    both = abs(obstruction) <= mpf(10) ** (-(mp.dps - 5)) * scale
    if require_both and not both:
        raise LogarithmicObstructionError(
            f"only subdominant analytic: d={problem.d}, lambda={mp.nstr(problem.lam, 15)}, m={m}")
    # w is a plain power series in u = 1 - x; store it with the factored exponent.
    return FrobeniusSeries(1, w, N, exponent=m, both_analytic=both)


def _ordinary_series(problem, c, y, dy, N):
    """Taylor series about an ordinary point ``c`` with data ``y(c), y'(c)``."""
    q2, q1, q0 = (_pad(p, 4) for p in _local_polys(problem, c))
    if q2[0] == 0:
        raise ZeroPivotError(2)
    a = [y, dy]
    for n in range(N - 1):
        acc = mpf(0)
        for k in (1, 2, 3):
            j = n - k + 2
            if j >= 0:
                acc += q2[k] * j * (j - 1) * a[j]
        for k in (0, 1, 2):
            j = n - k + 1
            if j >= 0:
                acc += q1[k] * j * a[j]
        for k in (0, 1):
            j = n - k
            if j >= 0:
                acc += q0[k] * a[j]
        a.append(-acc / (q2[0] * (n + 2) * (n + 1)))
    return a


def _eval_taylor(a, t):
    s = mpf(0)
    ds = mpf(0)
    for c in reversed(a):
        ds = ds * t + s
        s = s * t + c
    return s, ds


def _singular_points(d):
    return [mpf(0), mpf(1), mpf(4 - d) / 3]


def continuation_path(d, x_match=mpf(1) / 2):
    """Re-expansion points from ``x = 0`` to ``x_match``.

    Each step stays within half the distance to the nearest singular point,
    so every Taylor series converges at least like ``2**-n``.
    """
    x_match = mpf(x_match)
    sing = _singular_points(d)
    radius0 = min(abs(s) for s in sing if s != 0)
    if radius0 >= 2 * x_match:
        return [x_match]
    path = [radius0 / 2]
    while path[-1] < x_match:
        here = path[-1]
        r = min(abs(here - s) for s in sing)
        path.append(min(x_match, here + r / 2))
    return path


def y0_at(problem, N, x_match=mpf(1) / 2):
    """``(y0, y0')`` at ``x_match``, continued by re-expansion when needed."""
    s0 = series_coeffs(problem, 0, N)
    path = continuation_path(problem.d, x_match)
    s0.check_convergence(path[0])
    y, dy = s0.value_and_derivative(path[0])
    here = path[0]
    for nxt in path[1:]:
        a = _ordinary_series(problem, here, y, dy, N)
        y, dy = _eval_taylor(a, nxt - here)
        here = nxt
    return y, dy


def eigen_residual(problem: HeunProblem, N: int):
    """Certificate that ``problem.lam`` is an eigenvalue; zero means exact.

    Non-resonant and logarithmic resonant cases use ``|W(1/2)|``.  When both
    Frobenius solutions at ``x = 1`` are analytic the obstruction at order
    ``m`` is returned instead, since any ``y1`` is then admissible.
    """
    if problem.resonance_index() is not None:
        m, head, obstruction, _ = _resonant_data(problem, N)
        sub = resonant_series(problem, N)
        if sub.both_analytic:
            return abs(obstruction)
    return abs(wronskian_mid(problem, N))


def _y1_at(problem, N, x):
    m = problem.resonance_index()
    series = resonant_series(problem, N) if m is not None else series_coeffs(problem, 1, N)
    series.check_convergence(x)
    return series.value_and_derivative(x)


def wronskian_mid(problem: HeunProblem, N: int, x_match=mpf(1) / 2):
    """``W[y0, y1](1/2) = y0' y1 - y0 y1'``.

    At resonant ``lam`` the subdominant solution ``(1-x)^m w`` replaces ``y1``.
    """
    y0, dy0 = y0_at(problem, N, x_match)
    y1, dy1 = _y1_at(problem, N, x_match)
    return dy0 * y1 - y0 * dy1


def regularized_wronskian(problem: HeunProblem, N: int, x_match=mpf(1) / 2):
    """``W(1/2) / Gamma(lam + (5-d)/2)``, an entire function of ``lam``.

    The coefficients of ``y1`` have simple poles at the resonant values
    ``lam = (d-3)/2 - m``; the reciprocal Gamma factor removes them, so the
    scan sees sign changes only at eigenvalues.  At a resonance the limit
    is ``(-1)^(m-1) (m-1)! * Res(b_m) * W[y0, (1-x)^m w]``.
    """
    d, lam = problem.d, problem.lam
    m = problem.resonance_index()
    if m is None:
        return wronskian_mid(problem, N, x_match) * mp.rgamma(lam + mpf(5 - d) / 2)
    m, head, obstruction, w = _resonant_data(problem, N)
    # pivot at order m-1 is -4(d-1) m (lam - lam_m) in the variable u = 1 - x
    residue = obstruction / (4 * (d - 1) * m)
    sub = FrobeniusSeries(1, w, N, exponent=m)
    y0, dy0 = y0_at(problem, N, x_match)
    ys, dys = sub.value_and_derivative(x_match)
    return (-1) ** (m - 1) * mp.factorial(m - 1) * residue * (dy0 * ys - y0 * dys)


@dataclass
class EigenvalueReport:
    d: object
    method: str
    eigenvalues: list
    truncation: int
    digits: int
    window: tuple
    residual_bound: mpf = field(default_factory=lambda: mpf(0))
    poles: list = field(default_factory=list)
    collisions: list = field(default_factory=list)

    def values(self):
        return [lam for lam, _ in self.eigenvalues]

    def to_json(self) -> dict:
        out = {
            "d": self.d if isinstance(self.d, int) else str(self.d),
            "method": self.method,
            "digits": self.digits,
            "truncation": self.truncation,
            "window": [_dec(self.window[0], self.digits), _dec(self.window[1], self.digits)],
            "eigenvalues": [{"lambda": _dec(lam, self.digits), "residual": _dec(res, 10)}
                            for lam, res in self.eigenvalues],
            "residual_bound": _dec(self.residual_bound, 10),
        }
        if self.method == "continued-fraction":
            out["poles"] = [_dec(p, self.digits) for p in self.poles]
            out["collisions"] = [_dec(p, self.digits) for p in self.collisions]
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _dec(x, digits):
    return mp.nstr(mpf(x), digits, strip_zeros=False, min_fixed=-mp.inf, max_fixed=mp.inf)


def _as_mpf(x):
    if isinstance(x, Fraction):
        return mpf(x.numerator) / x.numerator.__class__(x.denominator)
    if isinstance(x, str):
        return mpf(x)
    return mpf(x)


def scan_roots(func, lo, hi, step, tol):
    """Sign-change scan of ``func`` on ``[lo, hi]`` followed by bisection.

    Grid values that vanish to working precision are returned directly.
    Returns a sorted list of roots.
    """
    lo, hi, step = mpf(lo), mpf(hi), mpf(step)
    n = int(mp.ceil((hi - lo) / step))
    grid = [lo + (hi - lo) * k / n for k in range(n + 1)]
    vals = [func(x) for x in grid]
    roots = []
    eps = mpf(10) ** (-(mp.dps - 8))
    for k, (x, v) in enumerate(zip(grid, vals)):
        neigh = [abs(vals[j]) for j in (k - 1, k + 1) if 0 <= j <= n]
        if v == 0 or (neigh and abs(v) <= eps * max(neigh)):
            roots.append(x)
    for k in range(n):
        a, b, fa, fb = grid[k], grid[k + 1], vals[k], vals[k + 1]
        if fa == 0 or fb == 0 or mp.sign(fa) == mp.sign(fb):
            continue
        roots.append(bisect_root(func, a, b, fa, tol))
    return merge_roots(roots, tol * 10)


def bisect_root(func, a, b, fa, tol):
    while b - a > tol:
        c = (a + b) / 2
        fc = func(c)
        if fc == 0:
            return c
        if mp.sign(fc) == mp.sign(fa):
            a, fa = c, fc
        else:
            b = c
    return (a + b) / 2


def merge_roots(roots, tol):
    out = []
    for r in sorted(roots):
        if out and abs(r - out[-1]) <= tol:
            continue
        out.append(r)
    return out


def find_eigenvalues(d, window=(-4, 5), N=200, digits=50, grid_step="0.01") -> EigenvalueReport:
    """Real eigenvalues of the mode problem in ``window`` by Wronskian shooting.

    The scan uses :func:`regularized_wronskian`, which is continuous across
    the resonant values; every resonant ``lam`` in the window is also checked
    through :func:`resonant_series`.  Roots are refined by bisection to
    ``10**(-digits/2)``.
    """
    d = check_dimension(d)
    with mp.workdps(digits):
        lo, hi = _as_mpf(window[0]), _as_mpf(window[1])
        if not lo < hi:
            raise ValueError("window must satisfy lo < hi")
        step = _as_mpf(grid_step)
        if step <= 0:
            raise ValueError("grid_step must be positive")
        tol = mpf(10) ** (-(digits // 2))

        def func(lam):
            return regularized_wronskian(HeunProblem(d, lam), N)

        roots = scan_roots(func, lo, hi, step, tol)

        # Resonant values inside the window.
        m_lo = max(1, int(mp.ceil(mpf(d - 3) / 2 - hi)))
        m_hi = int(mp.floor(mpf(d - 3) / 2 - lo))
        floor = tol
        for m in range(m_lo, m_hi + 1):
            lam_m = mpf(d - 3) / 2 - m
            sub = resonant_series(HeunProblem(d, lam_m), N)
            if sub.both_analytic or abs(wronskian_mid(HeunProblem(d, lam_m), N)) < floor:
                roots.append(lam_m)
        roots = merge_roots(roots, tol * 10)

        # snap roots near a resonance onto the exact value
        half = mpf(d - 3) / 2
        near = max(10 * tol, mpf(RESONANCE_TOL))
        snapped = []
        for r in roots:
            m = int(mp.nint(half - r))
            if m >= 1 and abs(half - m - r) <= near:
                r = half - m
            if not any(abs(r - q) <= 10 * tol for q in snapped):
                snapped.append(r)

        eigen = []
        for r in sorted(snapped, reverse=True):
            eigen.append((r, eigen_residual(HeunProblem(d, r), N)))
        bound = max([res for _, res in eigen], default=mpf(0))
        method = "resonant-shooting" if any(
            HeunProblem(d, r).resonance_index() for r, _ in eigen) else "shooting"
        return EigenvalueReport(d, method, eigen, N, digits, (lo, hi), bound)


def eigenfunction_ratio_spread(d, lam, N=200, points=("0.3", "0.5", "0.7")):
    """``max |y0(x)/y1(x) - y0(1/2)/y1(1/2)|`` over ``points``.

    Small at eigenvalues, where ``y0`` and ``y1`` are proportional.  For
    ``d in {5, 6}`` only points inside the convergence disk of ``y0`` are
    meaningful, so ``y0`` is continued through :func:`y0_at`.
    """
    prob = HeunProblem(d, lam)
    ref = y0_at(prob, N)[0] / _y1_at(prob, N, mpf(1) / 2)[0]
    spread = mpf(0)
    for p in points:
        x = mpf(p)
        ratio = y0_at(prob, N, x)[0] / _y1_at(prob, N, x)[0]
        spread = max(spread, abs(ratio - ref))
    return spread

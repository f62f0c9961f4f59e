"""Closed-form solutions, modes and potentials of the radial cubic wave equation.

Every evaluator accepts integer dimensions and scalar radii (int, float,
``Fraction`` or ``mpmath.mpf``) and returns an ``mpf`` at the current
``mpmath.mp`` precision.  NumPy arrays are also accepted and evaluated in
the array's floating dtype, which is what the evolution engines use for
reference lines and initial guesses.

The self-similar profile and the modes are written as rational functions of
``x = rho**2`` so that exact zeros (for instance ``f0(1) = 0`` when ``d = 7``)
are reproduced without cancellation.
"""

from __future__ import annotations

import numpy as np
from mpmath import mp, mpf


def check_dimension(d) -> int:
    if isinstance(d, bool) or int(d) != d:
        raise ValueError(f"dimension must be an integer, got {d!r}")
    d = int(d)
    if d < 5:
        raise ValueError(f"dimension must satisfy d >= 5, got d={d}")
    return d


def _scalar(x):
    if isinstance(x, np.ndarray):
        return x
    return mpf(x)


def _check_rho(rho):
    if isinstance(rho, np.ndarray):
        if np.any(rho < 0):
            raise ValueError("rho must be non-negative")
    elif rho < 0:
        raise ValueError(f"rho must be non-negative, got {rho}")


def _sqrt_int(n, like):
    if isinstance(like, np.ndarray):
        return np.sqrt(like.dtype.type(n)) if like.dtype.kind == "f" else np.sqrt(float(n))
    return mp.sqrt(n)


def u_star_amplitude(d) -> mpf:
    """The constant ``2*sqrt(2(d-1)(d-4))`` in the numerator of ``U*``."""
    d = check_dimension(d)
    return 2 * mp.sqrt(2 * (d - 1) * (d - 4))


def u_star(d, rho):
    """Self-similar blowup profile ``U*(rho) = 2 sqrt(2(d-1)(d-4)) / (d-4+3 rho^2)``."""
    d = check_dimension(d)
    rho = _scalar(rho)
    _check_rho(rho)
    k = 2 * _sqrt_int(2 * (d - 1) * (d - 4), rho)
    return k / (d - 4 + 3 * rho * rho)


def ode_blowup(T, t):
    """Spatially homogeneous blowup ``sqrt(2) / (T - t)``."""
    T, t = _scalar(T), _scalar(t)
    if np.any(np.asarray(t >= T)):
        raise ValueError("ode_blowup requires t < T")
    return _sqrt_int(2, t if isinstance(t, np.ndarray) else T) / (T - t)


def gauge_mode_f0(d, rho):
    """Gauge mode ``f0 = (d-4-3 rho^2)/(d-4+3 rho^2)^2`` (eigenvalue 1)."""
    d = check_dimension(d)
    rho = _scalar(rho)
    _check_rho(rho)
    x = rho * rho
    den = d - 4 + 3 * x
    return (d - 4 - 3 * x) / (den * den)


def unstable_pair_d7(rho):
    """The ``d = 7`` unstable direction ``(f1, g1) = ((1+rho^2)^-2, 4 (1+rho^2)^-3)``.

    ``f1`` is the eigenvalue-3 mode profile; ``g1`` is the matching time
    derivative of the physical perturbation at ``t = 0``.
    """
    rho = _scalar(rho)
    _check_rho(rho)
    q = 1 + rho * rho
    return 1 / (q * q), 4 / (q * q * q)


def potential(d, rho):
    """Linearization potential ``3 U*(rho)^2 = 24(d-1)(d-4)/(d-4+3 rho^2)^2``."""
    d = check_dimension(d)
    rho = _scalar(rho)
    _check_rho(rho)
    den = d - 4 + 3 * rho * rho
    return 24 * (d - 1) * (d - 4) / (den * den)


def heun_variable_map(d, rho, f_value):
    """Map ``(rho, f)`` to the Heun variables ``(x, y) = (rho^2, f (d-4+3x)^2)``."""
    d = check_dimension(d)
    rho = _scalar(rho)
    _check_rho(rho)
    x = rho * rho
    den = d - 4 + 3 * x
    return x, _scalar(f_value) * den * den


def heun_variable_unmap(d, x, y_value):
    """Inverse of :func:`heun_variable_map`: returns ``(rho, f)``."""
    d = check_dimension(d)
    x = _scalar(x)
    if np.any(np.asarray(x < 0)):
        raise ValueError("x must be non-negative")
    den = d - 4 + 3 * x
    rho = np.sqrt(x) if isinstance(x, np.ndarray) else mp.sqrt(x)
    return rho, _scalar(y_value) / (den * den)


# Residual operators.  They take callables and differentiate numerically with
# mpmath so that they serve as independent checks of the hand-coded formulas.

def mode_equation_residual(d, lam, f, rho):
    """Residual of the mode ODE for the profile ``f`` at ``rho > 0``.

    ``(1-rho^2) f'' + ((d-1)/rho - 2(lam+2) rho) f'
    - ((lam+1)(lam+2) - 3 U*(rho)^2) f``
    """
    d = check_dimension(d)
    rho = mpf(rho)
    f0, f1, f2 = mp.diffs(f, rho, 2)
    return ((1 - rho**2) * f2
            + ((d - 1) / rho - 2 * (lam + 2) * rho) * f1
            - ((lam + 1) * (lam + 2) - potential(d, rho)) * f0)


def profile_equation_residual(d, U, rho):
    """Residual of the static self-similar profile equation for ``U`` at ``rho > 0``.

    Inserting ``u = (T-t)^-1 U(r/(T-t))`` into the radial wave equation gives
    ``(1-rho^2) U'' + ((d-1)/rho - 4 rho) U' - 2 U + U^3 = 0``.
    """
    d = check_dimension(d)
    rho = mpf(rho)
    u0, u1, u2 = mp.diffs(U, rho, 2)
    return (1 - rho**2) * u2 + ((d - 1) / rho - 4 * rho) * u1 - 2 * u0 + u0**3

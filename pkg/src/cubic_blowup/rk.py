"""Explicit seven-stage Runge-Kutta method of order six (Butcher 1964).

The tableau is rational, so it is stored as ``Fraction`` and cast to the
working precision of the state once.
"""

from __future__ import annotations

from fractions import Fraction as F

import numpy as np
from mpmath import mpf

C = (F(0), F(1, 3), F(2, 3), F(1, 3), F(1, 2), F(1, 2), F(1))
A = (
    (),
    (F(1, 3),),
    (F(0), F(2, 3)),
    (F(1, 12), F(1, 3), F(-1, 12)),
    (F(-1, 16), F(9, 8), F(-3, 16), F(-3, 8)),
    (F(0), F(9, 8), F(-3, 8), F(-3, 4), F(1, 2)),
    (F(9, 44), F(-9, 11), F(63, 44), F(18, 11), F(0), F(-16, 11)),
)
B = (F(11, 120), F(0), F(27, 40), F(27, 40), F(-4, 15), F(-4, 15), F(11, 120))


def cast(q: F, dtype):
    """``q`` in the scalar type used by arrays of ``dtype``."""
    dtype = np.dtype(dtype)
    if dtype == object:
        return mpf(q.numerator) / q.denominator
    return dtype.type(q.numerator) / dtype.type(q.denominator)


class RK6:
    """Fixed-step integrator for ``dy/ds = f(s, y)`` with ``y`` a 1-D array."""

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.c = [cast(q, dtype) for q in C]
        self.a = [[cast(q, dtype) for q in row] for row in A]
        self.b = [cast(q, dtype) for q in B]

    def step(self, f, s, y, ds):
        k = []
        for i in range(7):
            yi = y
            for aij, kj in zip(self.a[i], k):
                if aij != 0:
                    yi = yi + (ds * aij) * kj
            k.append(f(s + self.c[i] * ds, yi))
        out = y
        for bi, ki in zip(self.b, k):
            if bi != 0:
                out = out + (ds * bi) * ki
        return out

"""Finite-difference operators on a staggered radial grid.

Nodes sit at ``(j + 1/2) dx``, ``j = 0..n-1``.  Fields are even in the radius,
so the stencils near the origin read mirror values ``f(-x_j) = f(x_j)``.  The
last nodes use one-sided stencils of the same order.  Operators are stored as
banded matrices: a SciPy CSR matrix for binary floating dtypes and a list of
diagonals for object arrays (``mpmath.mpf`` entries).
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from mpmath import mpf


def fornberg_weights(z, offsets, m):
    """Weights of the order-``m`` derivative at ``z`` from values at ``offsets``.

    Exact when ``z`` and ``offsets`` are ``Fraction``/integers (Fornberg 1988).
    """
    x = [Fraction(o) for o in offsets]
    z = Fraction(z)
    n = len(x)
    c = [[Fraction(0)] * (m + 1) for _ in range(n)]
    c1 = Fraction(1)
    c4 = x[0] - z
    c[0][0] = Fraction(1)
    for i in range(1, n):
        mn = min(i, m)
        c2 = Fraction(1)
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2
            for k in range(mn, 0, -1):
                c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3
            c[j][0] = c4 * c[j][0] / c3
        c1 = c2
    return [c[i][m] for i in range(n)]


CENTERED = {
    1: fornberg_weights(0, range(-3, 4), 1),
    2: fornberg_weights(0, range(-3, 4), 2),
}
KO8 = [Fraction((-1) ** k * c) for k, c in enumerate([1, 8, 28, 56, 70, 56, 28, 8, 1])]


def _cast(w, dtype):
    if dtype == object:
        return mpf(w.numerator) / w.denominator
    return dtype.type(w.numerator) / dtype.type(w.denominator)


class BandedOperator:
    """Linear operator ``(L f)_i = sum_k entries[i][k] f[k]`` with rational entries."""

    def __init__(self, n, entries, dtype=np.float64):
        self.n = n
        self.dtype = np.dtype(dtype)
        rows, cols, vals = [], [], []
        for i, row in enumerate(entries):
            for k, w in row.items():
                if w != 0:
                    rows.append(i)
                    cols.append(k)
                    vals.append(w)
        self._rational = (rows, cols, vals)
        if self.dtype == object:
            diag = {}
            for i, k, w in zip(rows, cols, vals):
                diag.setdefault(k - i, [mpf(0)] * n)
                diag[k - i][i] = _cast(w, self.dtype)
            self._diagonals = {off: np.array(v, dtype=object) for off, v in diag.items()}
            self.matrix = None
        else:
            data = np.array([_cast(w, self.dtype) for w in vals], dtype=self.dtype)
            self.matrix = sp.csr_matrix((data, (rows, cols)), shape=(n, n), dtype=self.dtype)

    def __call__(self, f):
        if self.matrix is not None:
            return self.matrix @ f
        out = np.zeros(self.n, dtype=object)
        out[:] = mpf(0)
        for off, w in self._diagonals.items():
            if off >= 0:
                out[: self.n - off] += w[: self.n - off] * f[off:]
            else:
                out[-off:] += w[-off:] * f[: self.n + off]
        return out

    def scaled(self, factor):
        """Copy with all rational entries multiplied by ``factor`` (a Fraction)."""
        rows, cols, vals = self._rational
        entries = [dict() for _ in range(self.n)]
        for i, k, w in zip(rows, cols, vals):
            entries[i][k] = w * factor
        return BandedOperator(self.n, entries, self.dtype)


def _mirror(j):
    """Node index holding the value at staggered index ``j`` (possibly negative)."""
    return j if j >= 0 else -1 - j


def derivative_entries(n, order, boundary_points=8):
    """Rational entries of the 6th-order ``order``-th derivative in grid units.

    Divide by ``dx**order`` to obtain the physical derivative.
    """
    if n < boundary_points + 3:
        raise ValueError(f"grid too small: need at least {boundary_points + 3} nodes")
    w = CENTERED[order]
    entries = []
    for i in range(n):
        row = {}
        if i <= n - 4:
            for off, wk in zip(range(-3, 4), w):
                k = _mirror(i + off)
                row[k] = row.get(k, Fraction(0)) + wk
        else:
            nodes = list(range(n - boundary_points, n))
            wb = fornberg_weights(i, nodes, order)
            for k, wk in zip(nodes, wb):
                row[k] = wk
        entries.append(row)
    return entries


def dissipation_entries(n):
    """Undivided 8th difference at interior nodes (origin mirrored, last 4 nodes excluded)."""
    entries = []
    for i in range(n):
        row = {}
        if i <= n - 5:
            for off, wk in zip(range(-4, 5), KO8):
                k = _mirror(i + off)
                row[k] = row.get(k, Fraction(0)) + wk
        entries.append(row)
    return entries


class RadialOperators:
    """First and second derivatives and Kreiss-Oliger dissipation on a staggered grid.

    ``dissipation(f)`` returns ``-eps * dx**7 * D^8 f`` (a damping term).
    """

    def __init__(self, n, dx, dtype=np.float64, eps=Fraction(1, 100)):
        self.n = n
        self.dtype = np.dtype(dtype)
        dx = Fraction(dx)
        eps = Fraction(eps)
        self.dx = dx
        self.d1 = BandedOperator(n, derivative_entries(n, 1), dtype).scaled(1 / dx)
        self.d2 = BandedOperator(n, derivative_entries(n, 2), dtype).scaled(1 / dx**2)
        self.ko = BandedOperator(n, dissipation_entries(n), dtype).scaled(-eps / dx)
        self.nodes = self.cast_array([(j + Fraction(1, 2)) * dx for j in range(n)])

    def cast_array(self, values):
        return np.array([_cast(Fraction(v), self.dtype) for v in values], dtype=self.dtype)

    def dissipation(self, f):
        return self.ko(f)


ORIGIN_WEIGHTS = (Fraction(150, 128), Fraction(-25, 128), Fraction(3, 128))


def origin_value(f, weights=None):
    """Value at the origin of an even field from its first three staggered nodes.

    Degree-4 even interpolation, i.e. degree 5 through the three nodes and
    their mirror images.
    """
    if weights is None:
        return (150 * f[0] - 25 * f[1] + 3 * f[2]) / 128
    return weights[0] * f[0] + weights[1] * f[1] + weights[2] * f[2]

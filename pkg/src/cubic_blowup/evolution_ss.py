"""Radial cubic wave equation in self-adapting computational coordinates.

With ``t = int e^{-s} h(s) ds``, ``r = e^{-s} y`` and the fields
``V = e^{-s} u``, ``P = e^{-2s} u_t`` the equation becomes

    V_s = h P - V - y V_y,
    P_s = h (V_yy + (d-1)/y V_y + V^3) - 2 P - y P_y,

and the gauge ``h(s) = 1/P(s, 0)`` keeps both fields bounded while ``u``
blows up.  ``V(s, 0) -> 1`` always, and ``P(s, 0)`` tends to the inverse of
the central value of the self-similar profile that attracts the solution:
``1/sqrt(2)`` for the homogeneous blowup and ``1/U*(0)`` at the threshold.

The method of lines uses 6th-order stencils on a staggered grid, an 8th
difference dissipation term and the seven-stage RK6 step with a fixed step
size.  ``t`` is carried as an extra ODE component.

Precision is chosen by ``digits``: up to 15 runs in float64, up to 18 in
the x87 extended type (``np.longdouble``), beyond that in mpmath object
arrays (slow, meant for cross-checks).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np
from mpmath import mp, mpf

from .profiles import check_dimension
from .rk import RK6, cast
from .stencils import RadialOperators, origin_value

SUPERCRITICAL = "Supercritical"
SUBCRITICAL = "Subcritical"
UNDECIDED = "Undecided"


class GaugeBreakdownError(ArithmeticError):
    """``P(s, 0) <= 0``: the coordinate transformation is no longer valid."""

    def __init__(self, s, p0):
        super().__init__(f"gauge breakdown at s={float(s):.6g}: P(s,0)={float(p0):.3g}")
        self.s = s
        self.p0 = p0


class InstabilityError(FloatingPointError):
    def __init__(self, s, node):
        super().__init__(f"non-finite field value at s={float(s):.6g}, node {node}")
        self.s = s
        self.node = node


def dtype_for_digits(digits: int):
    if digits <= 15:
        return np.dtype(np.float64)
    if digits <= 18 and np.finfo(np.longdouble).precision >= 18:
        return np.dtype(np.longdouble)
    return np.dtype(object)


def as_scalar(a, dtype):
    """``a`` (number, decimal string or Fraction) in the scalar type of ``dtype``."""
    dtype = np.dtype(dtype)
    if isinstance(a, str):
        a = Fraction(a)
    if dtype == object:
        if isinstance(a, Fraction):
            return mpf(a.numerator) / a.denominator
        return mpf(a)
    if isinstance(a, mpf):
        a = Fraction(mp.nstr(a, 25, strip_zeros=False))
    if dtype == np.float64:
        return np.float64(float(a))
    if isinstance(a, Fraction):
        with mp.workdps(25):
            return dtype.type(mp.nstr(mpf(a.numerator) / a.denominator, 22))
    return dtype.type(a)


def _exp(x, dtype):
    if dtype == object:
        return mp.exp(x)
    return np.exp(x)


def _isfinite(a, dtype):
    if dtype == object:
        return all(mp.isfinite(v) for v in a)
    return bool(np.all(np.isfinite(a)))


@dataclass(frozen=True)
class Grid:
    """Staggered radial grid ``y_j = (j + 1/2) dy``, ``j = 0..n_cells-1``."""

    n_cells: int
    dy: Fraction

    def __post_init__(self):
        object.__setattr__(self, "dy", Fraction(self.dy))
        if self.dy <= 0:
            raise ValueError("dy must be positive")
        if self.n_cells < 12:
            raise ValueError("at least 12 cells are needed for the boundary stencils")

    @classmethod
    def from_extent(cls, y_max, dy):
        dy = Fraction(dy)
        n = Fraction(y_max) / dy
        if n.denominator != 1:
            raise ValueError("y_max must be a multiple of dy")
        return cls(int(n), dy)

    @property
    def y_max(self) -> Fraction:
        return self.n_cells * self.dy

    def nodes(self, dtype=np.float64):
        dtype = np.dtype(dtype)
        return np.array([cast((j + Fraction(1, 2)) * self.dy, dtype) for j in range(self.n_cells)],
                        dtype=dtype)


@dataclass(frozen=True)
class EvolutionParams:
    """Numerical parameters of a computational-coordinate run.

    ``ds = None`` selects the step automatically: the largest
    ``ds_max / 2**k`` obeying ``ds <= cfl dy / (y_max + h)``.  ``settle_h``
    keeps a supercritical run going until ``h`` has settled (needed for the
    blowup-time estimate).
    """

    grid: Grid = Grid(640, Fraction(1, 32))
    ds: Fraction | None = None
    cfl: Fraction = Fraction(1, 2)
    digits: int = 15
    eps_dissipation: Fraction = Fraction(1, 100)
    p_min: float = 1e-3
    tol_sup: float = 1e-3
    sustain: float = 2.0
    s_max: float = 40.0
    snapshot_times: tuple = ()
    stride: int = 1
    settle_h: bool = False
    h_drift: float = 1e-6

    def __post_init__(self):
        if self.cfl <= 0 or self.p_min <= 0 or self.tol_sup <= 0 or self.s_max <= 0:
            raise ValueError("cfl, p_min, tol_sup and s_max must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def dtype(self):
        return dtype_for_digits(self.digits)

    def to_dict(self):
        return {
            "n_cells": self.grid.n_cells, "dy": str(self.grid.dy), "ds": None if self.ds is None else str(self.ds),
            "cfl": str(self.cfl), "digits": self.digits, "eps_dissipation": str(self.eps_dissipation),
            "p_min": repr(self.p_min), "tol_sup": repr(self.tol_sup), "sustain": repr(self.sustain),
            "s_max": repr(self.s_max), "snapshot_times": [repr(x) for x in self.snapshot_times],
            "stride": self.stride, "settle_h": self.settle_h, "h_drift": repr(self.h_drift),
        }


@dataclass
class EvolutionState:
    V: np.ndarray
    P: np.ndarray
    s: object
    t: object
    h: object

    def origin(self):
        return origin_value(self.V), origin_value(self.P)


@dataclass
class Outcome:
    """Result of :func:`evolve`.

    ``trajectory`` has columns ``s, t, h, V0, P0`` (one row per recorded step);
    ``snapshots`` holds ``(s, V, P)`` at the first step past each requested time.
    """

    classification: str
    s_end: float
    trajectory: np.ndarray
    snapshots: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    a: object = None
    d: int | None = None

    @property
    def s(self):
        return self.trajectory[:, 0]

    @property
    def t(self):
        return self.trajectory[:, 1]

    @property
    def h(self):
        return self.trajectory[:, 2]

    @property
    def V0(self):
        return self.trajectory[:, 3]

    @property
    def P0(self):
        return self.trajectory[:, 4]

    def write_trajectory(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "t", "h", "V0", "P0"])
            for row in self.trajectory:
                w.writerow([_dec(x) for x in row])

    def write_snapshot(self, path, index, grid: Grid):
        s, V, P = self.snapshots[index]
        y = grid.nodes(np.asarray(V).dtype)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "V", "P"])
            for row in zip(y, V, P):
                w.writerow([_dec(x) for x in row])


def _dec(x):
    """Decimal string carrying every digit of ``x``."""
    if isinstance(x, mpf):
        return mp.nstr(x, mp.dps, min_fixed=-mp.inf, max_fixed=mp.inf) if x == 0 else mp.nstr(x, mp.dps)
    if isinstance(x, np.longdouble) and np.dtype(np.longdouble) != np.dtype(np.float64):
        return np.format_float_scientific(x, unique=True)
    return repr(float(x))


class SelfSimilarSystem:
    """Semi-discrete right-hand side on a fixed grid.

    The state vector is ``[V (n), P (n), t]``.  ``forcing(s, y, h)``, if given,
    returns source terms ``(F_V, F_P)`` added to the field equations; it exists
    for manufactured-solution tests.
    """

    def __init__(self, d: int, grid: Grid, digits: int = 15, eps=Fraction(1, 100), forcing=None):
        self.d = check_dimension(d)
        self.grid = grid
        self.dtype = dtype_for_digits(digits)
        self.digits = digits
        self.ops = RadialOperators(grid.n_cells, grid.dy, self.dtype, eps)
        self.y = self.ops.nodes
        self.c_lapl = cast(Fraction(d - 1), self.dtype) / self.y
        self.n = grid.n_cells
        self.forcing = forcing

    def split(self, Y):
        n = self.n
        return Y[:n], Y[n:2 * n], Y[2 * n]

    def pack(self, V, P, t):
        out = np.empty(2 * self.n + 1, dtype=self.dtype)
        out[:self.n] = V
        out[self.n:2 * self.n] = P
        out[2 * self.n] = t
        return out

    def gauge(self, P, s=None):
        p0 = origin_value(P)
        if not p0 > 0:
            raise GaugeBreakdownError(s, p0)
        return 1 / p0

    def field_rhs(self, V, P, h):
        ops = self.ops
        Vy = ops.d1(V)
        dV = h * P - V - self.y * Vy + ops.ko(V)
        dP = (h * (ops.d2(V) + self.c_lapl * Vy + V * V * V)
              - 2 * P - self.y * ops.d1(P) + ops.ko(P))
        return dV, dP

    def __call__(self, s, Y):
        V, P, _ = self.split(Y)
        h = self.gauge(P, s)
        dV, dP = self.field_rhs(V, P, h)
        if self.forcing is not None:
            fV, fP = self.forcing(s, self.y, h)
            dV, dP = dV + fV, dP + fP
        return self.pack(dV, dP, _exp(-s, self.dtype) * h)


def initial_data(a, grid: Grid, digits: int = 15) -> EvolutionState:
    """``V(0, y) = P(0, y) = a / cosh(y)`` with ``s = t = 0`` and ``h = 1/P(0, 0)``."""
    dtype = dtype_for_digits(digits)
    y = grid.nodes(dtype)
    if dtype == object:
        with mp.workdps(digits):
            a = as_scalar(a, dtype)
            if not a > 0:
                raise ValueError(f"amplitude must be positive, got {a}")
            V = np.array([a / mp.cosh(v) for v in y], dtype=object)
    else:
        a = as_scalar(a, dtype)
        if not a > 0:
            raise ValueError(f"amplitude must be positive, got {a}")
        V = a / np.cosh(y)
    zero = cast(Fraction(0), dtype)
    return EvolutionState(V, V.copy(), zero, zero, 1 / origin_value(V))


def rhs(state: EvolutionState, d: int, grid: Grid | None = None, digits: int | None = None,
        eps=Fraction(1, 100)):
    """``(dV/ds, dP/ds)`` for ``state``; raises :class:`GaugeBreakdownError` if ``P(s,0) <= 0``."""
    n = len(state.V)
    if grid is None:
        raise ValueError("grid is required")
    if digits is None:
        digits = {np.dtype(np.float64): 15, np.dtype(np.longdouble): 18}.get(np.asarray(state.V).dtype, mp.dps)
    if n != grid.n_cells:
        raise ValueError("state does not match grid")
    sys = SelfSimilarSystem(d, grid, digits, eps)
    h = sys.gauge(state.P, state.s)
    return sys.field_rhs(state.V, state.P, h)


def max_stable_step(grid: Grid, h, cfl=Fraction(1, 2)) -> float:
    return float(cfl) * float(grid.dy) / (float(grid.y_max) + float(h))


class Stepper:
    """Fixed-step RK6 integrator bound to a :class:`SelfSimilarSystem`."""

    def __init__(self, system: SelfSimilarSystem, cfl=Fraction(1, 2)):
        self.system = system
        self.rk = RK6(system.dtype)
        self.cfl = cfl

    def step(self, state: EvolutionState, ds) -> EvolutionState:
        sysm = self.system
        if float(ds) > max_stable_step(sysm.grid, state.h, self.cfl) * (1 + 1e-12):
            raise ValueError(f"ds={float(ds):.3g} exceeds the stability bound "
                             f"{max_stable_step(sysm.grid, state.h, self.cfl):.3g}")
        ds = cast(Fraction(ds), sysm.dtype) if isinstance(ds, Fraction) else ds
        Y0 = sysm.pack(state.V, state.P, state.t)
        try:
            Y = self.rk.step(sysm, state.s, Y0, ds)
        except GaugeBreakdownError as exc:
            if not _isfinite(Y0, sysm.dtype) or not mp.isfinite(exc.p0):
                raise InstabilityError(state.s + ds, _first_bad(Y0, sysm) or 0) from exc
            raise
        V, P, t = sysm.split(Y)
        if not _isfinite(Y, sysm.dtype):
            raise InstabilityError(state.s + ds, _first_bad(Y, sysm))
        s = state.s + ds
        return EvolutionState(V.copy(), P.copy(), s, t, sysm.gauge(P, s))


def _first_bad(Y, sysm):
    """Grid node of the first non-finite entry of a packed state, or None."""
    for i, v in enumerate(Y[:2 * sysm.n]):
        if not (mp.isfinite(v) if sysm.dtype == object else np.isfinite(v)):
            return i % sysm.n
    return None


def step(state: EvolutionState, d: int, ds, grid: Grid, digits: int = 15, cfl=Fraction(1, 2),
         eps=Fraction(1, 100)) -> EvolutionState:
    """One RK6 step of size ``ds`` (``h`` is re-evaluated at every stage)."""
    return Stepper(SelfSimilarSystem(d, grid, digits, eps), cfl).step(state, ds)


def _auto_step(params: EvolutionParams, h):
    """Largest ``ds_max / 2**k`` obeying the stability bound, as an exact fraction."""
    g = params.grid
    ds = params.ds if params.ds is not None else params.cfl * g.dy / (g.y_max + 2)
    ds = Fraction(ds)
    bound = max_stable_step(g, h, params.cfl)
    while float(ds) > bound:
        ds /= 2
    return ds


def evolve(d: int, a, params: EvolutionParams = EvolutionParams()) -> Outcome:
    """Evolve ``a / cosh(y)`` data and classify the run.

    Supercritical: ``P(s,0)`` stays within ``tol_sup`` of ``1/sqrt(2)`` for
    ``sustain`` units of ``s``.  Subcritical: ``P(s,0)`` drops below ``p_min``
    (a gauge breakdown counts as subcritical only when ``P(s,0)`` was
    decreasing into it).  Undecided otherwise at ``s_max``.
    """
    d = check_dimension(d)
    grid = params.grid
    system = SelfSimilarSystem(d, grid, params.digits, params.eps_dissipation)
    stepper = Stepper(system, params.cfl)
    ctx = mp.workdps(params.digits) if system.dtype == object else _NullCtx()
    with ctx:
        state = initial_data(a, grid, params.digits)
        target = 1 / math.sqrt(2)
        rows = []
        snaps = []
        pending = sorted(float(x) for x in params.snapshot_times)
        in_band_since = None
        classification, diag = UNDECIDED, {}
        nstep = 0

        def record(st):
            v0, p0 = st.origin()
            rows.append((st.s, st.t, st.h, v0, p0))

        record(state)
        p_prev = float(origin_value(state.P))
        decreasing = False
        while float(state.s) < params.s_max:
            while pending and float(state.s) >= pending[0]:
                snaps.append((state.s, state.V.copy(), state.P.copy()))
                pending.pop(0)
            ds = _auto_step(params, state.h)
            try:
                state = stepper.step(state, ds)
            except GaugeBreakdownError as exc:
                classification = SUBCRITICAL if decreasing else UNDECIDED
                diag = {"reason": "gauge breakdown", "s": float(exc.s), "P0_last": p_prev}
                break
            except InstabilityError as exc:
                classification, diag = UNDECIDED, {"reason": "instability", "s": float(exc.s), "node": exc.node}
                break
            nstep += 1
            if nstep % params.stride == 0:
                record(state)
            p0 = float(origin_value(state.P))
            s = float(state.s)
            decreasing = p0 < p_prev
            p_prev = p0
            if p0 < params.p_min:
                classification = SUBCRITICAL
                diag = {"reason": "P0 below p_min"}
                break
            if abs(p0 - target) < params.tol_sup:
                in_band_since = s if in_band_since is None else in_band_since
            else:
                in_band_since = None
            if classification != SUPERCRITICAL and in_band_since is not None and s - in_band_since >= params.sustain:
                classification = SUPERCRITICAL
                diag = {"reason": "P0 sustained near 1/sqrt(2)"}
                if not params.settle_h:
                    break
            if classification == SUPERCRITICAL and nstep % 64 == 0 and _h_settled(rows, params):
                diag["h_settled"] = True
                break
        if nstep % params.stride != 0:
            record(state)
        traj = np.array(rows, dtype=system.dtype)
        return Outcome(classification, float(state.s), traj, snaps, diag, a, d)


def _h_settled(rows, params: EvolutionParams) -> bool:
    """Relative drift of ``h`` per unit ``s`` below ``h_drift`` over the last ``sustain``."""
    s_end = float(rows[-1][0])
    if s_end < params.sustain:
        return False
    h_end = float(rows[-1][2])
    k = len(rows) - 1
    while k > 0 and s_end - float(rows[k][0]) < params.sustain:
        k -= 1
    seg = [float(r[2]) for r in rows[k:]]
    return (max(seg) - min(seg)) / abs(h_end) <= params.h_drift * params.sustain


def h_settled(outcome: Outcome, params: EvolutionParams) -> bool:
    return _h_settled(list(outcome.trajectory), params)


class _NullCtx:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False

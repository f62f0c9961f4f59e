"""Radial cubic wave equation in physical coordinates ``(t, r)``.

``u_tt = u_rr + (d-1)/r u_r + u^3`` is evolved as a first-order system in
``(u, u_t)`` with the same stencils, dissipation and RK6 step as the
computational-coordinate engine.  There is no boundary treatment; the domain
is made large enough that the outer edge is causally disconnected from the
region of interest.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from mpmath import mp

from .evolution_ss import Grid, _dec, _isfinite, as_scalar, dtype_for_digits
from .profiles import check_dimension
from .rk import RK6, cast
from .stencils import RadialOperators, _mirror, origin_value


class BoundaryContaminationError(ValueError):
    pass


@dataclass
class PhysState:
    u: np.ndarray
    ut: np.ndarray
    t: object
    grid: Grid

    @property
    def r_max(self):
        return self.grid.y_max


def support_radius(a, floor=1e-17) -> float:
    """Radius beyond which ``a/cosh(r)`` is below ``floor``."""
    return math.acosh(max(abs(float(a)) / floor, 1.0))


def domain_for(t_end, a, dr=Fraction(1, 32), margin=5, floor=1e-17) -> Grid:
    """Grid with ``r_max >= t_end + support + margin`` (rounded up to whole cells)."""
    r_max = float(t_end) + support_radius(a, floor) + margin
    dr = Fraction(dr)
    return Grid(int(math.ceil(r_max / dr)), dr)


def from_computational(a, grid: Grid, digits: int = 15) -> PhysState:
    """``u(0, r) = u_t(0, r) = a/cosh(r)``: the computational data at ``s = t = 0`` with ``r = y``."""
    dtype = dtype_for_digits(digits)
    r = grid.nodes(dtype)
    if dtype == object:
        with mp.workdps(digits):
            a = as_scalar(a, dtype)
            u = np.array([a / mp.cosh(x) for x in r], dtype=object)
    else:
        u = as_scalar(a, dtype) / np.cosh(r)
    return PhysState(u, u.copy(), cast(Fraction(0), dtype), grid)


@dataclass(frozen=True)
class PhysParams:
    dt: Fraction | None = None
    cfl: Fraction = Fraction(1, 2)
    digits: int = 15
    eps_dissipation: Fraction = Fraction(1, 100)
    u_ceiling: float = 1e4
    snapshot_times: tuple = ()
    stride: int = 1
    region_of_interest: float = 1.0


@dataclass
class PhysRun:
    """Trajectory ``(t, u(t,0), u_t(t,0))`` plus snapshots ``(t, u, u_t)``."""

    d: int
    grid: Grid
    t: np.ndarray
    u0: np.ndarray
    ut0: np.ndarray
    snapshots: list = field(default_factory=list)
    blowup: bool = False
    final: PhysState | None = None

    def write_trajectory(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "u0", "ut0"])
            for row in zip(self.t, self.u0, self.ut0):
                w.writerow([_dec(x) for x in row])

    def write_snapshot(self, path, index):
        t, u, ut = self.snapshots[index]
        r = self.grid.nodes(np.asarray(u).dtype)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "u", "ut"])
            for row in zip(r, u, ut):
                w.writerow([_dec(x) for x in row])


class PhysSystem:
    """Semi-discrete right-hand side for ``[u (n), u_t (n)]``.

    ``forcing(t, r)`` adds a source to the ``u_tt`` equation (manufactured-solution tests).
    """

    def __init__(self, d, grid: Grid, digits=15, eps=Fraction(1, 100), forcing=None):
        self.d = check_dimension(d)
        self.grid = grid
        self.dtype = dtype_for_digits(digits)
        self.ops = RadialOperators(grid.n_cells, grid.dy, self.dtype, eps)
        self.r = self.ops.nodes
        self.c_lapl = cast(Fraction(d - 1), self.dtype) / self.r
        self.n = grid.n_cells
        self.forcing = forcing

    def __call__(self, t, Y):
        n, ops = self.n, self.ops
        u, ut = Y[:n], Y[n:]
        out = np.empty_like(Y)
        out[:n] = ut + ops.ko(u)
        out[n:] = ops.d2(u) + self.c_lapl * ops.d1(u) + u * u * u + ops.ko(ut)
        if self.forcing is not None:
            out[n:] += self.forcing(t, self.r)
        return out


def evolve_phys(d: int, state: PhysState, t_end, params: PhysParams = PhysParams()) -> PhysRun:
    """Evolve to ``t_end`` recording the origin values and requested snapshots.

    Snapshot times that fall between steps are reached by a separate partial
    step, so they are realised exactly.

    Stops early with ``blowup=True`` if ``|u(t,0)|`` exceeds ``u_ceiling``.
    """
    d = check_dimension(d)
    grid = state.grid
    if float(grid.y_max) - float(t_end) < params.region_of_interest:
        raise BoundaryContaminationError(
            f"r_max={float(grid.y_max):g} too small for t_end={float(t_end):g}; use domain_for()")
    system = PhysSystem(d, grid, params.digits, params.eps_dissipation)
    if np.asarray(state.u).dtype != system.dtype:
        raise ValueError("state precision does not match params.digits")
    rk = RK6(system.dtype)
    dt = Fraction(params.dt) if params.dt is not None else params.cfl * grid.dy
    nsteps = int(math.ceil(Fraction(str(t_end)) / dt))
    dt_w = cast(dt, system.dtype)
    n = system.n
    Y = np.concatenate([state.u, state.ut])
    ts, u0s, ut0s, snaps = [], [], [], []
    pending = sorted(float(x) for x in params.snapshot_times)
    blow = False

    def record(k, Y):
        ts.append(state.t + k * dt_w)
        u0s.append(origin_value(Y[:n]))
        ut0s.append(origin_value(Y[n:]))

    record(0, Y)
    for k in range(1, nsteps + 1):
        t_k = state.t + (k - 1) * dt_w
        while pending and float(t_k) >= pending[0] - 1e-12:
            snaps.append((t_k, Y[:n].copy(), Y[n:].copy()))
            pending.pop(0)
        # snapshots strictly inside this step get their own partial step
        while pending and pending[0] < float(t_k + dt_w) - 1e-12:
            t_req = cast(Fraction(repr(pending.pop(0))), system.dtype)
            Z = rk.step(system, t_k, Y, t_req - t_k)
            snaps.append((t_req, Z[:n].copy(), Z[n:].copy()))
        Y = rk.step(system, t_k, Y, dt_w)
        if k % params.stride == 0 or k == nsteps:
            record(k, Y)
        if not _isfinite(Y[:1], system.dtype) or abs(float(origin_value(Y[:n]))) > params.u_ceiling:
            blow = True
            break
    t_final = state.t + k * dt_w
    while pending and float(t_final) >= pending[0] - 1e-12:
        snaps.append((t_final, Y[:n].copy(), Y[n:].copy()))
        pending.pop(0)
    arr = lambda v: np.array(v, dtype=system.dtype)
    return PhysRun(d, grid, arr(ts), arr(u0s), arr(ut0s), snaps, blow,
                   PhysState(Y[:n].copy(), Y[n:].copy(), t_final, grid))


def energy(d: int, u, ut, grid: Grid, nonlinear: bool = True):
    """Discrete energy ``sum (ut^2/2 + ur^2/2 - u^4/4) r^(d-1) dr`` (midpoint rule).

    The integrand is even in ``r`` and the nodes are staggered, so the
    midpoint sum is spectrally accurate for smooth decaying data.
    """
    dtype = np.asarray(u).dtype
    ops = RadialOperators(grid.n_cells, grid.dy, dtype, 0)
    r = ops.nodes
    ur = ops.d1(u)
    dens = ut * ut / 2 + ur * ur / 2
    if nonlinear:
        dens = dens - u**4 / 4
    return float(np.sum(dens * r ** (d - 1)) * float(grid.dy))


def decay_exponent(run: PhysRun, t_min=None, t_max=None):
    """Slope of ``log|u(t,0)|`` against ``log t`` through the oscillation envelope.

    The envelope is the largest ``|u|`` in each lobe between sign changes, so
    an oscillating tail is fitted through its maxima and a monotone tail
    through all of its samples.  Uses the final decade ``[t_end/10, t_end]``
    unless ``t_min`` / ``t_max`` are given.  Returns ``(p, t_env, u_env)``.
    """
    t = np.asarray(run.t, dtype=float)
    u = np.asarray(run.u0, dtype=float)
    t_min = t[-1] / 10 if t_min is None else t_min
    t_max = t[-1] if t_max is None else t_max
    m = (t >= t_min) & (t <= t_max) & (u != 0)
    t, u = t[m], u[m]
    cuts = np.flatnonzero(np.diff(np.sign(u)) != 0) + 1
    lobes = np.split(np.arange(len(u)), cuts)
    if len(lobes) >= 3:
        idx = np.array([lb[np.argmax(np.abs(u[lb]))] for lb in lobes])
    else:
        idx = np.arange(len(u))
    tp, up = t[idx], np.abs(u[idx])
    if len(tp) < 2:
        raise ValueError("not enough samples in the fit window")
    p = np.polyfit(np.log(tp), np.log(up), 1)[0]
    return float(p), tp, up


def interpolate_even(f, grid: Grid, r, order: int = 6):
    """Lagrange interpolation of an even field to radii ``r`` using ``order+1`` nodes."""
    dr = float(grid.dy)
    f = np.asarray(f, dtype=float)
    r = np.atleast_1d(np.asarray(r, dtype=float))
    npts = order + 1
    out = np.empty_like(r)
    for i, x in enumerate(r):
        j = int(math.floor(x / dr - 0.5))
        first = j - order // 2 + (0 if npts % 2 else 1)
        first = min(first, grid.n_cells - npts)
        idx = np.arange(first, first + npts)
        xs = (idx + 0.5) * dr
        vals = np.array([f[_mirror(k)] for k in idx])
        w = np.ones(npts)
        for k in range(npts):
            for m in range(npts):
                if m != k:
                    w[k] *= (x - xs[m]) / (xs[k] - xs[m])
        out[i] = w @ vals
    return out


@dataclass
class SelfSimilarFrame:
    """``psi(tau, rho) = e^{-tau} u(T - e^{-tau}, e^{-tau} rho)``; ``psi[i, j]`` at ``(tau[i], rho[j])``."""

    T: float
    tau: np.ndarray
    rho: np.ndarray
    psi: np.ndarray

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "rho", "psi"])
            for i, ta in enumerate(self.tau):
                for j, rh in enumerate(self.rho):
                    w.writerow([repr(float(ta)), repr(float(rh)), repr(float(self.psi[i, j]))])


def snapshot_times_for(T, taus):
    """Physical times ``T - e^{-tau}`` at which snapshots realise the given ``taus``."""
    return tuple(float(T) - math.exp(-float(x)) for x in taus)


def to_self_similar(run: PhysRun, T, rho=None, taus=None) -> SelfSimilarFrame:
    """Map snapshots to self-similar variables with blowup time ``T``.

    Without ``taus`` every snapshot taken before ``T`` is used.  With
    ``taus`` each value must correspond to a snapshot (see
    :func:`snapshot_times_for`); values past the end of the run are rejected.
    """
    T = float(T)
    rho = np.linspace(0, 1, 21) if rho is None else np.asarray(rho, dtype=float)
    snaps = [(float(t), u) for t, u, _ in run.snapshots]
    t_last = float(run.t[-1])
    if taus is None:
        chosen = [(t, u) for t, u in snaps if t < T]
    else:
        chosen = []
        for x in taus:
            t_req = T - math.exp(-float(x))
            if t_req > t_last + 1e-12:
                raise ValueError(f"tau={float(x):g} lies beyond the end of the run (t={t_last:g})")
            hit = [(t, u) for t, u in snaps if abs(t - t_req) <= 1e-9 * max(1.0, abs(t_req)) + 1e-6 * float(run.grid.dy)]
            if not hit:
                raise ValueError(f"no snapshot at t={t_req:g} for tau={float(x):g}")
            chosen.append(hit[0])
    if not chosen:
        raise ValueError("no snapshot before T")
    tau = np.array([-math.log(T - t) for t, _ in chosen])
    psi = np.array([math.exp(-ta) * interpolate_even(u, run.grid, math.exp(-ta) * rho)
                    for ta, (_, u) in zip(tau, chosen)])
    return SelfSimilarFrame(T, tau, rho, psi)


def psi_origin(run: PhysRun, T):
    """``(tau, psi(tau, 0))`` from the origin trajectory, restricted to ``t < T``."""
    t = np.asarray(run.t, dtype=float)
    u0 = np.asarray(run.u0, dtype=float)
    m = t < T
    gap = float(T) - t[m]
    return -np.log(gap), gap * u0[m]

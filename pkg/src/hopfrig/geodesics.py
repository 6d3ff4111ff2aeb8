"""Geodesics, scalar Jacobi fields, conjugate points and polar charts.

The geodesic ODE is integrated in the engine chart of the surface (see
:mod:`hopfrig.metric`) with an adaptive embedded Runge-Kutta pair.  Jacobi
fields ``lam'' + K(gamma(s)) lam = 0`` are carried in the same state vector
as the geodesic, so curvature is always evaluated at the integrated point.
Batches of geodesics share one state vector; every batch is a pure function
of its inputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq, minimize_scalar

from .metric import TWO_PI, PointChart, SurfaceSpec
from .numerics import chunk_map

DEFAULT_TOL = 1e-10


class GeodesicError(RuntimeError):
    """Integration failure (step-size underflow, blow-up, leaving the domain)."""

    def __init__(self, message, s=None):
        super().__init__(message if s is None else f"{message} (at s={s:.6g})")
        self.s = s


class DegenerateZeroError(RuntimeError):
    """Jacobi field grazes zero: both lam and lam' are below tolerance."""

    def __init__(self, s):
        super().__init__(f"degenerate zero of the Jacobi field near s={s:.10g}, refine")
        self.s = s


@dataclass(frozen=True)
class UnitTangent:
    """Unit vector at ``base``, ``angle`` measured in the Gram-Schmidt frame."""

    base: PointChart
    angle: float

    def vector(self, spec: SurfaceSpec):
        x1, x2 = spec.to_chart(self.base)
        v1, v2 = spec.tangent(x1, x2, self.angle)
        return (x1, x2), (float(v1), float(v2))


def _rhs(spec, n, m):
    def rhs(s, y):
        y = y.reshape(4 + 2 * m, n)
        out = np.empty_like(y)
        out[0] = y[2]
        out[1] = y[3]
        a1, a2 = spec.accel(y[0], y[1], y[2], y[3])
        out[2] = a1
        out[3] = a2
        if m:
            K = spec.gauss(y[0], y[1])
            out[4::2] = y[5::2]
            out[5::2] = -K * y[4::2]
        return out.ravel()

    return rhs


def abs_tol(spec, y0, tol):
    """Absolute tolerances.  On cylinders the angular velocity gets one
    scaled to its initial size, which is tiny for near-axial geodesics
    (it keeps its sign along the flow, so a relative control is safe)."""
    atol = np.full(y0.shape, tol * 1e-3)
    if spec.is_cylinder:
        atol[3] = np.minimum(atol[3], np.maximum(np.abs(y0[3]) * tol * 1e-6, 1e-300))
    return atol.ravel()


def flow(spec, x0, v0, jac0=(), s_end=1.0, s_eval=None, tol=DEFAULT_TOL,
         dense=False, events=None):
    """Integrate a batch of geodesics with co-integrated Jacobi fields.

    Parameters
    ----------
    x0, v0 : array_like, shape (n, 2)
        Chart positions and velocities.
    jac0 : sequence of (lam0, dlam0)
        Initial data of the Jacobi fields carried along every geodesic;
        each entry is a pair of scalars or of arrays of shape (n,).
    s_end : float
        Final arc parameter (negative for backward integration).

    Returns the raw ``solve_ivp`` result; its ``y`` has shape
    ``(4 + 2 m, n, len(t))`` after :func:`unpack`.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    n = x0.shape[0]
    m = len(jac0)
    y0 = np.empty((4 + 2 * m, n))
    y0[0], y0[1] = x0[:, 0], x0[:, 1]
    y0[2], y0[3] = v0[:, 0], v0[:, 1]
    for k, (a, b) in enumerate(jac0):
        y0[4 + 2 * k] = a
        y0[5 + 2 * k] = b
    with np.errstate(all="ignore"):
        sol = solve_ivp(_rhs(spec, n, m), (0.0, s_end), y0.ravel(), method="DOP853",
                        t_eval=s_eval, rtol=tol, atol=abs_tol(spec, y0, tol), dense_output=dense,
                        events=events)
    if sol.status == -1:
        s_fail = float(sol.t[-1]) if len(sol.t) else None
        raise GeodesicError(f"integration failed: {sol.message}", s_fail)
    if not np.all(np.isfinite(sol.y)):
        bad = np.where(~np.all(np.isfinite(sol.y), axis=0))[0]
        raise GeodesicError("state left the numerically valid domain", float(sol.t[bad[0]]))
    sol.n, sol.m = n, m
    return sol


def unpack(sol):
    return sol.y.reshape(4 + 2 * sol.m, sol.n, -1)


# -- single paths ----------------------------------------------------------


@dataclass
class GeodesicPath:
    """A sampled unit-speed geodesic.

    ``X`` and ``V`` hold chart positions and velocities at the arc
    parameters ``s``.
    """

    spec: SurfaceSpec
    s: np.ndarray
    X: np.ndarray
    V: np.ndarray
    tol: float
    speed_drift: float = 0.0
    _x0: tuple = field(default=(), repr=False)
    _v0: tuple = field(default=(), repr=False)

    @property
    def s_max(self):
        return float(self.s[-1])

    @property
    def samples(self):
        """List of ``(s, PointChart, UnitTangent)`` triples."""
        out = []
        for s, (x1, x2), (v1, v2) in zip(self.s, self.X, self.V):
            (a1, a2), (b1, b2) = self.spec.frame(x1, x2)
            c = float(self.spec.inner(x1, x2, (v1, v2), (a1, a2)))
            d = float(self.spec.inner(x1, x2, (v1, v2), (b1, b2)))
            base = self.spec.from_chart(x1, x2)
            out.append((float(s), base, UnitTangent(base, math.atan2(d, c) % TWO_PI)))
        return out

    def local_defect(self, n_checks=8):
        """Max deviation after re-integrating sample-to-sample at tol/100."""
        idx = np.unique(np.linspace(0, len(self.s) - 2, n_checks).astype(int))
        worst = 0.0
        for k in idx:
            ds = self.s[k + 1] - self.s[k]
            sol = flow(self.spec, self.X[k][None], self.V[k][None], s_end=ds,
                       tol=self.tol * 1e-2)
            y = unpack(sol)[:, 0, -1]
            dev = max(np.max(np.abs(y[:2] - self.X[k + 1])), np.max(np.abs(y[2:4] - self.V[k + 1])))
            worst = max(worst, float(dev))
        return worst


def shoot_geodesic(spec, v: UnitTangent, s_max, tol=DEFAULT_TOL, n_samples=513):
    """Integrate the unit-speed geodesic with initial vector ``v``.

    The speed is never renormalized; a drift above ``10 * tol`` raises
    :class:`GeodesicError`.
    """
    if not s_max > 0 or not tol > 0:
        raise ValueError("s_max and tol must be positive")
    x0, v0 = v.vector(spec)
    return _shoot(spec, x0, v0, s_max, tol, n_samples)


def _shoot(spec, x0, v0, s_max, tol, n_samples):
    s = np.linspace(0.0, s_max, n_samples)
    sol = flow(spec, [x0], [v0], s_end=s_max, s_eval=s, tol=tol * 1e-2)
    y = unpack(sol)[:, 0, :]
    X = y[:2].T.copy()
    V = y[2:4].T.copy()
    speed = spec.norm(X[:, 0], X[:, 1], V[:, 0], V[:, 1])
    drift = float(np.max(np.abs(speed - 1.0)))
    if drift > 10 * tol:
        k = int(np.argmax(np.abs(speed - 1.0)))
        raise GeodesicError(f"unit-speed drift {drift:.3g} exceeds 10*tol", float(s[k]))
    return GeodesicPath(spec, s, X, V, tol, drift, tuple(x0), tuple(v0))


def reverse(path: GeodesicPath, n_samples=None):
    """Geodesic from the end point of ``path`` with reversed velocity."""
    n = n_samples or len(path.s)
    return _shoot(path.spec, tuple(path.X[-1]), tuple(-path.V[-1]), path.s_max, path.tol, n)


@dataclass
class JacobiRecord:
    path: GeodesicPath
    s: np.ndarray
    lam: np.ndarray
    dlam: np.ndarray
    init: tuple


def jacobi_along(path: GeodesicPath, lam0, dlam0) -> JacobiRecord:
    """Solve ``lam'' + K lam = 0`` along ``path`` (co-integrated with it)."""
    sol = flow(path.spec, [path._x0], [path._v0], jac0=[(lam0, dlam0)], s_end=path.s_max,
               s_eval=path.s, tol=path.tol * 1e-2)
    y = unpack(sol)[:, 0, :]
    return JacobiRecord(path, path.s.copy(), y[4].copy(), y[5].copy(), (float(lam0), float(dlam0)))


def wronskian(a: JacobiRecord, b: JacobiRecord):
    return a.lam * b.dlam - b.lam * a.dlam


def first_conjugate(path: GeodesicPath, tol=1e-10):
    """Smallest ``s* > 0`` where the (0, 1) Jacobi field vanishes, else None."""
    sol = flow(path.spec, [path._x0], [path._v0], jac0=[(0.0, 1.0)], s_end=path.s_max,
               tol=path.tol * 1e-2, dense=True)
    return _first_zero(lambda s: sol.sol(s)[4], lambda s: sol.sol(s)[5],
                       np.union1d(sol.t, path.s), tol)


def _first_zero(lam, dlam, grid, tol):
    grid = np.asarray(grid)
    grid = grid[grid > 0]
    vals = np.array([lam(s) for s in grid])
    dvals = np.array([dlam(s) for s in grid])
    hit = np.nonzero(vals <= 0.0)[0]
    stop = hit[0] if len(hit) else len(grid)
    graze = np.nonzero((np.abs(vals[:stop]) < tol) & (np.abs(dvals[:stop]) < tol))[0]
    if len(graze):
        raise DegenerateZeroError(float(grid[graze[0]]))
    # a dip towards zero between grid points without a sign change
    turn = np.nonzero((dvals[:stop - 1] < 0) & (dvals[1:stop] > 0))[0] if stop > 1 else []
    for k in turn:
        res = minimize_scalar(lam, bounds=(grid[k], grid[k + 1]), method="bounded",
                              options={"xatol": tol})
        if res.fun <= 0.0:
            stop = min(stop, k + 1)
            grid = grid.copy()
            grid[k + 1] = res.x
            break
        if res.fun < tol and abs(dlam(res.x)) < tol:
            raise DegenerateZeroError(float(res.x))
    if stop >= len(grid):
        return None
    hi = grid[stop]
    lo = grid[stop - 1] if stop > 0 else hi * 1e-3
    if lam(hi) == 0.0:
        return float(hi)
    return float(brentq(lam, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps))


# -- polar charts -----------------------------------------------------------


@dataclass
class RadialChart:
    """Polar chart at ``p``: Jacobi field ``lam(theta_j, r_k)`` on a grid.

    ``theta`` are the initial angles in the Gram-Schmidt frame at ``p``.
    Entries at or beyond the first conjugate point of a direction are
    flagged in ``flags``; ``conj`` holds that parameter (nan if none).
    """

    spec: SurfaceSpec
    p: PointChart
    theta: np.ndarray
    r: np.ndarray
    lam: np.ndarray
    dlam: np.ndarray
    K: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    conj: np.ndarray
    flags: np.ndarray

    @property
    def dtheta(self):
        return TWO_PI / len(self.theta)

    @property
    def truncated(self):
        return bool(self.flags.any())

    def boundary_length(self):
        """Periodic trapezoid in theta of lam, i.e. H^1 of the metric circles."""
        return self.lam.sum(axis=0) * self.dtheta

    def boundary_length_rate(self):
        return self.dlam.sum(axis=0) * self.dtheta

    def first_flag(self):
        if not self.truncated:
            return None
        j, k = np.unravel_index(np.argmin(np.where(self.flags, self.r[None, :], np.inf)),
                                self.flags.shape)
        return float(self.theta[j]), float(self.r[k])

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "r", "lambda", "conjugate_flag"])
            for j, th in enumerate(self.theta):
                for k, r in enumerate(self.r):
                    w.writerow([repr(float(th)), repr(float(r)), repr(float(self.lam[j, k])),
                                int(self.flags[j, k])])


def radial_chart(spec, p: PointChart, r_max, n_theta=256, dr=None, tol=DEFAULT_TOL, chunk=64):
    """Build the polar chart of radial geodesics leaving ``p``.

    Only conjugate points along the sampled directions are detected; that
    ``exp_p`` is injective off rotational planes is assumed, not checked.
    """
    dr = dr if dr is not None else r_max / 2048
    n_r = int(round(r_max / dr)) + 1
    r = np.linspace(0.0, r_max, n_r)
    theta = TWO_PI * np.arange(n_theta) / n_theta
    x0 = spec.to_chart(p)
    v1, v2 = spec.tangent(np.full(n_theta, x0[0]), np.full(n_theta, x0[1]), theta)
    V0 = np.stack([v1, v2], axis=1)
    X0 = np.tile(np.asarray(x0, dtype=float), (n_theta, 1))

    def run(a, b):
        sol = flow(spec, X0[a:b], V0[a:b], jac0=[(0.0, 1.0)], s_end=r_max, s_eval=r, tol=tol)
        return unpack(sol)

    parts = chunk_map(run, n_theta, chunk)
    y = np.concatenate(parts, axis=1)
    x1, x2, w1, w2, lam, dlam = y
    K = spec.gauss(x1, x2)
    conj = np.full(n_theta, np.nan)
    flags = np.zeros_like(lam, dtype=bool)
    for j in range(n_theta):
        neg = np.nonzero(lam[j, 1:] <= 0.0)[0]
        if len(neg) == 0:
            continue
        k = neg[0] + 1
        sol = flow(spec, X0[j:j + 1], V0[j:j + 1], jac0=[(0.0, 1.0)], s_end=r[k], tol=tol,
                   dense=True)
        f = lambda s: sol.sol(s)[4]
        conj[j] = r[k] if f(r[k]) == 0.0 else brentq(f, r[k - 1] if k > 1 else r[1] * 1e-3, r[k],
                                                     xtol=1e-10)
        flags[j, r >= conj[j]] = True
    return RadialChart(spec, p, theta, r, lam, dlam, K, x1, x2, w1, w2, conj, flags)

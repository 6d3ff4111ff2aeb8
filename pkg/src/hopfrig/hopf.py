"""Stable Riccati solutions, Liouville sampling and the Hopf balance.

The stable solution at ``v`` is the limit of ``u_T(0) = J_T'(0)/J_T(0)`` for
Jacobi fields ``J_T`` with ``J_T(T) = 0``.  Writing ``J_T`` in the basis
``lam1 (1, 0)``, ``lam2 (0, 1)`` gives ``u_T(0) = -lam1(T)/lam2(T)``, so one
forward integration to the top of the ladder yields every rung at once.
The rungs are combined by Aitken extrapolation, which is exact for the
``-1/T`` behaviour of flat regions and harmless for the exponential
convergence seen under negative curvature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geodesics import DEFAULT_TOL, UnitTangent, flow, radial_chart, unpack
from .metric import TWO_PI, DomainError, PointChart, SurfaceSpec
from .numerics import chunk_map, cumsimpson, gauss_legendre

DEFAULT_LADDER = (2.0, 4.0, 8.0, 16.0)
FIBER_NODES = 64
UNDERFLOW = 1e-250


class ConjugatePointError(RuntimeError):
    """Premise violated: a Jacobi field vanishing at 0 vanishes again."""

    def __init__(self, message, s=None):
        super().__init__(message)
        self.s = s


@dataclass(frozen=True)
class RiccatiSample:
    v: UnitTangent
    U: float
    T: float
    ladder: tuple
    u: tuple
    delta: float
    raw_delta: float
    status: str
    monotone: bool


def aitken(u):
    """Extrapolated limit and error estimate from rung values ``u`` (last is top).

    Returns ``(U, err)``.  With fewer than three rungs the top value is
    returned with the last difference as error.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[0] < 2:
        return u[-1], np.full_like(u[-1], np.inf)
    if u.shape[0] < 3:
        return u[-1], np.abs(u[-1] - u[-2])
    est = _aitken3(u[-3], u[-2], u[-1])
    if u.shape[0] >= 4:
        prev = _aitken3(u[-4], u[-3], u[-2])
        err = np.abs(est - prev)
    else:
        err = np.abs(est - u[-1])
    return est, err


def _aitken3(a, b, c):
    d1 = b - a
    d2 = c - b
    den = d2 - d1
    scale = np.maximum(np.maximum(np.abs(a), np.abs(c)), 1.0)
    with np.errstate(all="ignore"):
        ratio = d2 / d1
        out = c - d2 * d2 / den
    ok = (np.abs(d1) > 1e-13 * scale) & (np.abs(den) > 1e-13 * scale) & (ratio > -1) & (ratio < 1)
    return np.where(ok, out, c)


@dataclass
class RiccatiBatch:
    """Vectorised result for many tangents (chart positions and velocities)."""

    X: np.ndarray
    V: np.ndarray
    ladder: tuple
    u: np.ndarray          # shape (len(ladder), n)
    U: np.ndarray
    delta: np.ndarray
    raw_delta: np.ndarray
    monotone: np.ndarray
    tol: float

    @property
    def converged(self):
        return self.delta < self.tol


def _check_ladder(ladder):
    ladder = tuple(float(t) for t in ladder)
    if not ladder or any(t <= 0 for t in ladder) or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("T ladder must be positive and increasing")
    return ladder


def riccati_batch(spec, X, V, ladder=DEFAULT_LADDER, tol=1e-4, ode_tol=DEFAULT_TOL, chunk=2048,
                  n_check=257):
    """Stable Riccati values for tangents with chart data ``X``, ``V`` (n, 2)."""
    ladder = _check_ladder(ladder)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    T = ladder[-1]
    s_eval = np.union1d(np.linspace(0.0, T, n_check), ladder)
    rungs = np.searchsorted(s_eval, ladder)

    def run(a, b):
        sol = flow(spec, X[a:b], V[a:b], jac0=[(1.0, 0.0), (0.0, 1.0)], s_end=T, s_eval=s_eval,
                   tol=ode_tol)
        y = unpack(sol)
        lam1, lam2 = y[4], y[6]
        bad = np.nonzero(np.any(lam2[:, 1:] <= 0.0, axis=1))[0]
        if len(bad):
            k = np.argmax(lam2[bad[0], 1:] <= 0.0) + 1
            raise ConjugatePointError(
                f"conjugate point along the geodesic from chart point {tuple(X[a + bad[0]])}"
                f" before s={s_eval[k]:.6g}", float(s_eval[k]))
        l2 = lam2[:, rungs]
        if np.any(np.abs(l2) < UNDERFLOW):
            raise ConjugatePointError("J_T(0) below the underflow guard")
        return (-lam1[:, rungs] / l2).T

    u = np.concatenate(chunk_map(run, X.shape[0], chunk), axis=1)
    U, delta = aitken(u)
    raw = np.abs(u[-1] - u[-2]) if len(ladder) > 1 else np.full(X.shape[0], np.inf)
    # for K <= 0 the rung values increase towards U
    mono = np.all(np.diff(u, axis=0) >= -1e-12 * np.maximum(1.0, np.abs(u[1:])), axis=0)
    return RiccatiBatch(X, V, ladder, u, U, delta, raw, mono, tol)


def stable_riccati(spec, v: UnitTangent, ladder=DEFAULT_LADDER, tol=1e-4,
                   ode_tol=DEFAULT_TOL) -> RiccatiSample:
    x0, v0 = v.vector(spec)
    b = riccati_batch(spec, [x0], [v0], ladder, tol, ode_tol)
    status = "converged" if b.delta[0] < tol else "not-converged"
    return RiccatiSample(v, float(b.U[0]), b.ladder[-1], b.ladder, tuple(map(float, b.u[:, 0])),
                         float(b.delta[0]), float(b.raw_delta[0]), status, bool(b.monotone[0]))


def riccati_along(spec, v: UnitTangent, s_grid, T, ode_tol=DEFAULT_TOL):
    """``u(s) = J_T'(s)/J_T(s)`` along ``gamma_v`` for one horizon ``T``.

    By flow invariance this is the Riccati solution attached to ``Phi^s v``
    with horizon ``T - s``.  Returns ``(u, K)`` on ``s_grid``.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid[-1] >= T:
        raise ValueError("s_grid must stay below the horizon")
    x0, v0 = v.vector(spec)
    s_eval = np.append(s_grid, T)
    sol = flow(spec, [x0], [v0], jac0=[(1.0, 0.0), (0.0, 1.0)], s_end=T, s_eval=s_eval,
               tol=ode_tol)
    y = unpack(sol)[:, 0, :]
    l1, d1, l2, d2 = y[4], y[5], y[6], y[7]
    J = l2[-1] * l1[:-1] - l1[-1] * l2[:-1]
    dJ = l2[-1] * d1[:-1] - l1[-1] * d2[:-1]
    return dJ / J, spec.gauss(y[0, :-1], y[1, :-1])


def riccati_residual(spec, v: UnitTangent, s_max, T, ds=1e-3, ode_tol=DEFAULT_TOL,
                     sample: RiccatiSample | None = None):
    """max |u' + u^2 + K| on [ds, s_max - ds], u' by centered differences."""
    if sample is not None and sample.status != "converged":
        raise ValueError("riccati_residual needs a converged sample")
    n = int(round(s_max / ds))
    s = ds * np.arange(n + 1)
    u, K = riccati_along(spec, v, s, T, ode_tol)
    du = (u[2:] - u[:-2]) / (2 * ds)
    return float(np.max(np.abs(du + u[1:-1] ** 2 + K[1:-1])))


# -- regions and Liouville sampling -------------------------------------------


@dataclass(frozen=True)
class Ball:
    center: PointChart
    radius: float

    def describe(self):
        return f"ball(center={self.center.coords}, radius={self.radius:g})"


@dataclass(frozen=True)
class Band:
    """Coordinate subcylinder ``t0 <= t <= t1``."""

    t0: float
    t1: float

    def describe(self):
        return f"band(t0={self.t0:g}, t1={self.t1:g})"


@dataclass
class LiouvilleSample:
    """Base points (engine chart) and fiber angles drawn from the Liouville measure."""

    spec: SurfaceSpec
    X: np.ndarray
    angle: np.ndarray
    area: float
    seed: int

    def __len__(self):
        return len(self.angle)

    def velocities(self):
        v1, v2 = self.spec.tangent(self.X[:, 0], self.X[:, 1], self.angle)
        return np.stack([v1, v2], axis=1)

    def tangents(self):
        return [UnitTangent(self.spec.from_chart(x1, x2), float(a))
                for (x1, x2), a in zip(self.X, self.angle)]


SAMPLE_CHUNK = 4096


def _streams(seed, n):
    """Per-chunk counter-based generators; independent of scheduling."""
    out = []
    for idx, a in enumerate(range(0, n, SAMPLE_CHUNK)):
        g = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), idx])))
        out.append((g, min(SAMPLE_CHUNK, n - a)))
    return out


def _inverse_cdf(grid, density, u):
    cdf = cumsimpson(density, grid)
    cdf = np.maximum.accumulate(cdf)
    return np.interp(u * cdf[-1], cdf, grid), float(cdf[-1])


def region_area(spec, Q, n_quad=256):
    if isinstance(Q, Band):
        x, w = gauss_legendre(Q.t0, Q.t1, n_quad)
        return float(TWO_PI * np.sum(w * spec.f(x)))
    if spec.homogeneous_at(Q.center):
        x, w = gauss_legendre(0.0, Q.radius, n_quad)
        return float(TWO_PI * np.sum(w * _radial_profile(spec, x)))
    ch = radial_chart(spec, Q.center, Q.radius, n_theta=128, dr=Q.radius / 512)
    return float(cumsimpson(ch.boundary_length(), ch.r)[-1])


def _radial_profile(spec, r):
    return r if spec.family == "flat_plane" else spec.f(r)


def sample_liouville(spec: SurfaceSpec, Q, n, seed, n_grid=4097) -> LiouvilleSample:
    if n <= 0:
        raise ValueError("n must be positive")
    xs, angles = [], []
    if isinstance(Q, Band):
        if not spec.is_cylinder:
            raise DomainError("a band needs a cylinder")
        grid = np.linspace(Q.t0, Q.t1, n_grid)
        dens = spec.f(grid)
        for g, m in _streams(seed, n):
            t, _ = _inverse_cdf(grid, dens, g.random(m))
            th = TWO_PI * g.random(m)
            xs.append(np.stack([t, th], axis=1))
            angles.append(TWO_PI * g.random(m))
        area = region_area(spec, Q)
    elif isinstance(Q, Ball):
        if not spec.is_plane:
            raise DomainError("metric balls are supported on planes")
        if spec.homogeneous_at(Q.center):
            grid = np.linspace(0.0, Q.radius, n_grid)
            dens = _radial_profile(spec, grid)
            cx, cy = spec.to_chart(Q.center)
            for g, m in _streams(seed, n):
                r, _ = _inverse_cdf(grid, dens, g.random(m))
                th = TWO_PI * g.random(m)
                xs.append(np.stack([cx + r * np.cos(th), cy + r * np.sin(th)], axis=1))
                angles.append(TWO_PI * g.random(m))
            area = region_area(spec, Q)
        else:
            ch = radial_chart(spec, Q.center, Q.radius, n_theta=256, dr=Q.radius / 1024)
            if ch.truncated:
                raise ConjugatePointError("radial chart truncated by conjugate points",
                                          ch.first_flag()[1])
            mass = np.array([cumsimpson(row, ch.r)[-1] for row in ch.lam])
            area = float(mass.sum() * ch.dtheta)
            p = mass / mass.sum()
            for g, m in _streams(seed, n):
                j = g.choice(len(p), size=m, p=p)
                u = g.random(m)
                pts = np.empty((m, 2))
                for jj in np.unique(j):
                    sel = j == jj
                    r, _ = _inverse_cdf(ch.r, ch.lam[jj], u[sel])
                    pts[sel, 0] = np.interp(r, ch.r, ch.x1[jj])
                    pts[sel, 1] = np.interp(r, ch.r, ch.x2[jj])
                xs.append(pts)
                angles.append(TWO_PI * g.random(m))
    else:
        raise TypeError("region must be a Ball or a Band")
    return LiouvilleSample(spec, np.concatenate(xs), np.concatenate(angles), area, int(seed))


# -- balance -------------------------------------------------------------------


@dataclass
class BalanceReport:
    region: str
    lhs: float
    curvature_term: float
    boundary_term: float
    discrepancy: float
    stderr: float
    budget: float
    n: int
    seed: int
    n_not_converged: int
    verdict: str
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "region": self.region,
            "lhs": self.lhs,
            "curvature_term": self.curvature_term,
            "boundary_term": self.boundary_term,
            "discrepancy": self.discrepancy,
            "stderr": self.stderr,
            "budget": self.budget,
            "n": self.n,
            "seed": self.seed,
            "n_not_converged": self.n_not_converged,
            "verdict": self.verdict,
            **self.extras,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def curvature_integral(spec, Q, n_quad=256):
    """``int_Q K dA`` by Gauss-Legendre quadrature in the natural coordinates."""
    if isinstance(Q, Band):
        x, w = gauss_legendre(Q.t0, Q.t1, n_quad)
        return float(TWO_PI * np.sum(w * spec.gauss(x, 0.0 * x) * spec.f(x)))
    if spec.family == "flat_plane":
        return 0.0
    if spec.homogeneous_at(Q.center):
        x, w = gauss_legendre(0.0, Q.radius, n_quad)
        return float(TWO_PI * np.sum(w * spec.gauss(x, 0.0 * x) * spec.f(x)))
    ch = radial_chart(spec, Q.center, Q.radius, n_theta=256, dr=Q.radius / 1024)
    return float(cumsimpson((ch.K * ch.lam).sum(axis=0) * ch.dtheta, ch.r)[-1])


def _boundary_points(spec, Q, n_b):
    """Boundary points, inner normals (chart components) and arc weights."""
    if isinstance(Q, Band):
        pts, normals, weights = [], [], []
        for t, sign in ((Q.t0, 1.0), (Q.t1, -1.0)):
            th = TWO_PI * np.arange(n_b) / n_b
            pts.append(np.stack([np.full(n_b, t), th], axis=1))
            normals.append(np.tile([sign, 0.0], (n_b, 1)))
            weights.append(np.full(n_b, TWO_PI * float(spec.f(t)) / n_b))
        return np.concatenate(pts), np.concatenate(normals), np.concatenate(weights)
    ch = radial_chart(spec, Q.center, Q.radius, n_theta=n_b, dr=Q.radius / 256)
    X = np.stack([ch.x1[:, -1], ch.x2[:, -1]], axis=1)
    N = -np.stack([ch.v1[:, -1], ch.v2[:, -1]], axis=1)
    return X, N, ch.lam[:, -1] * ch.dtheta


def boundary_term(spec, Q, ladder, tol, n_fiber=FIBER_NODES, n_b=None):
    """``int U(v) <v, N> dnu`` over the boundary, N the inner normal.

    Rotational symmetry of the region lets one boundary point per circle
    stand for the whole circle.
    """
    symmetric = isinstance(Q, Band) or spec.homogeneous_at(Q.center)
    if isinstance(Q, Ball) and spec.family == "flat_plane":
        symmetric = True
    n_b = n_b or (1 if symmetric else 64)
    X, N, w = _boundary_points(spec, Q, n_b)
    if symmetric and isinstance(Q, Band):
        X, N = X[[0, n_b]], N[[0, n_b]]
        w = np.array([w[:n_b].sum(), w[n_b:].sum()])
    elif symmetric:
        X, N, w = X[:1], N[:1], np.array([w.sum()])

    def value(nf):
        alpha = TWO_PI * np.arange(nf) / nf
        XX = np.repeat(X, nf, axis=0)
        AA = np.tile(alpha, len(X))
        v1, v2 = spec.tangent(XX[:, 0], XX[:, 1], AA)
        NN = np.repeat(N, nf, axis=0)
        cos = spec.inner(XX[:, 0], XX[:, 1], (v1, v2), (NN[:, 0], NN[:, 1]))
        b = riccati_batch(spec, XX, np.stack([v1, v2], axis=1), ladder, tol)
        per = (b.U * cos).reshape(len(X), nf).sum(axis=1) * (TWO_PI / nf)
        unc = (b.delta * np.abs(cos)).reshape(len(X), nf).sum(axis=1) * (TWO_PI / nf)
        return float(np.sum(w * per)), float(np.sum(w * unc))

    full, unc = value(n_fiber)
    half, _ = value(n_fiber // 2)
    return full, abs(full - half) + unc


def hopf_balance(spec: SurfaceSpec, Q, n, ladder=DEFAULT_LADDER, tol=1e-4, seed=0,
                 ode_tol=DEFAULT_TOL) -> BalanceReport:
    """Monte Carlo check of the Hopf balance on the region ``Q``."""
    samp = sample_liouville(spec, Q, n, seed)
    b = riccati_batch(spec, samp.X, samp.velocities(), ladder, tol, ode_tol)
    mass = TWO_PI * samp.area
    U2 = b.U ** 2
    lhs = float(mass * np.mean(U2))
    stderr = float(mass * np.std(U2, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    bias = float(mass * np.mean(2 * np.abs(b.U) * b.delta + b.delta ** 2))
    omega = curvature_integral(spec, Q)
    omega2 = curvature_integral(spec, Q, n_quad=128)
    curv = -TWO_PI * omega
    bterm, bbudget = boundary_term(spec, Q, ladder, tol)
    # area enters the MC mass; compare two quadrature resolutions
    area_err = abs(region_area(spec, Q) - region_area(spec, Q, n_quad=128)) * TWO_PI * float(np.mean(U2))
    budget = bias + TWO_PI * abs(omega - omega2) + bbudget + area_err
    disc = lhs - curv - bterm
    verdict = "pass" if abs(disc) <= 3.0 * (stderr + budget) else "fail"
    return BalanceReport(Q.describe(), lhs, curv, bterm, disc, stderr, budget, n, int(seed),
                         int(np.sum(~b.converged)), verdict,
                         {"area": samp.area, "mean_U2": float(np.mean(U2)),
                          "ladder": list(b.ladder), "tol": tol})

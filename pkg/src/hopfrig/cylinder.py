"""Busemann functions, horocyclic exhaustions and end diagnostics on cylinders.

Conventions: the rays start at the basepoint ``(t_b, theta0)`` and run along
the axial meridian.  End 1 is reached by ``t -> -inf`` and end 2 by
``t -> +inf``; ``SIGN[i]`` is the direction of ``t`` along ``gamma_i``.
On the supported (rotational) cylinders the level sets of ``b_{gamma_i}`` are
the coordinate circles ``t = t_b + SIGN[i] * s``; this is validated against
fast-marching Busemann fields rather than assumed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .distance import grazing_angles, loop_length_shooting, solve_distance
from .geodesics import flow, unpack
from .hopf import DEFAULT_LADDER, aitken, riccati_batch
from .metric import TWO_PI, DomainError, PointChart, SurfaceSpec
from .numerics import cumsimpson, deriv, gauss_legendre, tail_liminf
from .odelemma import LemmaPreconditionError, OdeLemmaData, check_hypothesis, sharp_bound

SIGN = {1: -1.0, 2: 1.0}
A_CONST = TWO_PI
B_CONST = math.sqrt(TWO_PI)


def _sign(end):
    if end not in SIGN:
        raise ValueError("end must be 1 or 2")
    return SIGN[end]


def _need_cylinder(spec):
    if not spec.is_cylinder:
        raise DomainError(f"{spec.family} is not a cylinder")


# -- Busemann functions -----------------------------------------------------------


@dataclass(frozen=True)
class BusemannValue:
    value: float
    ladder: tuple
    truncated: tuple
    error: float
    monotone: bool


def busemann_value(spec: SurfaceSpec, p: PointChart, end=None, ray=None, ladder=(8.0, 16.0, 32.0),
                   h=0.05, t_b=0.0, theta0=0.0) -> BusemannValue:
    """``lim d(p, gamma(T)) - T`` from one distance field with source ``p``.

    Cylinders use the axial ray toward ``end``.  Planes need
    ``ray=(start, angle)``; the ray is then the geodesic from ``start``
    with that frame angle, which must be minimal (true on the supported
    planes without conjugate points).
    """
    ladder = tuple(float(T) for T in ladder)
    if spec.is_cylinder:
        s = _sign(end)
        pts = [(t_b + s * T, theta0) for T in ladder]
        ts = [a for a, _ in pts] + [p.coords[0], t_b]
        lo, hi = min(ts) - 2.0, max(ts) + 2.0
        field_ = solve_distance(spec, (lo, hi, 0.0, TWO_PI), h, p)
        vals = field_.value_at(np.array([a for a, _ in pts]), np.array([b for _, b in pts]))
    else:
        if ray is None:
            raise ValueError("planes need ray=(start, angle)")
        from .geodesics import UnitTangent, shoot_geodesic

        start, angle = ray
        path = shoot_geodesic(spec, UnitTangent(start, angle), ladder[-1], n_samples=2049)
        idx = [int(np.argmin(np.abs(path.s - T))) for T in ladder]
        ends = [path.X[k] for k in idx]
        if spec.family == "rotational_plane":
            rr = [math.hypot(*e) for e in ends] + [math.hypot(*spec.to_chart(p))]
            field_ = solve_distance(spec, (0.0, max(rr) + 2.0, 0.0, TWO_PI), h, p)
            vals = field_.value_at(np.array([math.hypot(*e) for e in ends]),
                                   np.array([math.atan2(e[1], e[0]) for e in ends]))
        else:
            xs = [e[0] for e in ends] + [spec.to_chart(p)[0]]
            ys = [e[1] for e in ends] + [spec.to_chart(p)[1]]
            win = (min(xs) - 2.0, max(xs) + 2.0, min(ys) - 2.0, max(ys) + 2.0)
            field_ = solve_distance(spec, win, h, p)
            vals = field_.value_at(np.array([e[0] for e in ends]), np.array([e[1] for e in ends]))
    trunc = np.asarray(vals, dtype=float) - np.array(ladder)
    if np.any(~np.isfinite(trunc)):
        raise ValueError("ray leaves the distance window")
    U, err = aitken(trunc[:, None])
    mono = bool(np.all(np.diff(trunc) <= 2 * h))
    return BusemannValue(float(U[0]), ladder, tuple(map(float, trunc)), float(err[0]), mono)


@dataclass
class BusemannField:
    """Busemann function of the axial ray toward ``end`` on a cylinder window.

    ``b[k]`` holds the truncation ``d(., gamma(T_k)) - T_k`` for each rung;
    ``value`` is the Aitken-extrapolated limit.
    """

    spec: SurfaceSpec
    end: int
    t_b: float
    t: np.ndarray
    theta: np.ndarray
    ladder: tuple
    b: np.ndarray
    value: np.ndarray
    error: np.ndarray
    h: float
    ray_defect: float
    monotone_violation: float

    def level_deviation(self, levels):
        """For each level ``s``, how far the set ``{b = -s}`` is from the circle
        ``t = t_b + SIGN * s``: returns the max over theta of
        ``|t(theta) - t_circle|`` found by interpolation along each column."""
        s = _sign(self.end)
        out = []
        for lev in levels:
            target = -lev
            dev = 0.0
            for j in range(len(self.theta)):
                col = self.value[:, j]
                # b decreases along the ray direction
                order = np.argsort(col)
                tt = np.interp(target, col[order], self.t[order])
                dev = max(dev, abs(tt - (self.t_b + s * lev)))
            out.append(dev)
        return np.array(out)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "theta", "busemann", "error"])
            for i, a in enumerate(self.t):
                for j, b in enumerate(self.theta):
                    w.writerow([repr(float(a)), repr(float(b)), repr(float(self.value[i, j])),
                                repr(float(self.error[i, j]))])


def busemann_field(spec: SurfaceSpec, end, window=(0.0, 3.0), ladder=(8.0, 16.0, 32.0), h=0.05,
                   t_b=0.0, theta0=0.0, pad=2.0) -> BusemannField:
    """Fast-marching Busemann field on ``t_b + SIGN * [window]``.

    One field per rung with source ``gamma(T)``.  Also checks that the
    ray is minimal (``d(gamma(0), gamma(T)) = T``) and that the truncations
    do not increase with ``T`` (within one grid spacing).
    """
    _need_cylinder(spec)
    s = _sign(end)
    ladder = tuple(float(T) for T in ladder)
    roi = sorted([t_b + s * window[0], t_b + s * window[1]])
    tops = [t_b + s * T for T in ladder]
    lo = min(roi[0], min(tops)) - pad
    hi = max(roi[1], max(tops)) + pad
    rungs = []
    ray_def = 0.0
    t_axis = theta_axis = None
    for T, top in zip(ladder, tops):
        f = solve_distance(spec, (lo, hi, 0.0, TWO_PI), h, PointChart.cylinder(top, theta0))
        sel = (f.u1 >= roi[0] - 1e-12) & (f.u1 <= roi[1] + 1e-12)
        t_axis, theta_axis = f.u1[sel], f.u2
        rungs.append(f.d[sel] - T)
        ray_def = max(ray_def, abs(float(f.value_at(np.array([t_b]), np.array([theta0]))[0]) - T))
    b = np.array(rungs)
    U, err = aitken(b)
    mono = float(np.max(np.diff(b, axis=0))) if len(ladder) > 1 else 0.0
    return BusemannField(spec, end, t_b, t_axis, theta_axis, ladder, b, U, err, h, ray_def,
                         max(mono, 0.0))


# -- exhaustion curves ------------------------------------------------------------


@dataclass
class ExhaustionCurve:
    """``H_i``, ``h_i``, ``omega_i`` (and optionally ``F_i``) on the grid ``t``."""

    spec: SurfaceSpec
    end: int
    t_b: float
    t: np.ndarray
    H: np.ndarray
    h: np.ndarray
    omega: np.ndarray
    rotation: np.ndarray
    errH: np.ndarray
    dH_defect: np.ndarray
    omega_defect: np.ndarray
    rotation_defect: np.ndarray
    F: np.ndarray | None = None
    dF: np.ndarray | None = None
    errF: np.ndarray | None = None
    levels_checked: dict = field(default_factory=dict)

    def to_csv(self, path):
        nan = np.full_like(self.t, np.nan)
        F = self.F if self.F is not None else nan
        errF = self.errF if self.errF is not None else nan
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "H", "h", "omega", "F", "errH", "errF"])
            for row in zip(self.t, self.H, self.h, self.omega, F, self.errH, errF):
                w.writerow([repr(float(x)) for x in row])


def _cum_gl(fn, grid, n=16):
    """Cumulative Gauss-Legendre integral of ``fn`` over the cells of ``grid``."""
    a, b = grid[:-1], grid[1:]
    x, w = gauss_legendre(0.0, 1.0, n)
    nodes = a[:, None] + (b - a)[:, None] * x[None, :]
    cells = (fn(nodes) * w[None, :]).sum(axis=1) * (b - a)
    return np.concatenate([[0.0], np.cumsum(cells)])


def exhaustion_curves(spec: SurfaceSpec, end, t_max, n=2001, t_b=0.0) -> ExhaustionCurve:
    """Exhaustion data for the coordinate-circle levels of a rotational cylinder.

    ``h = 2 pi f``, ``H`` by Gauss-Legendre area quadrature, the rotation of
    the level circle w.r.t. the inward normal is ``2 pi SIGN f'`` and
    ``omega = 2 pi - rotation``.  Independent checks: ``H' = h`` by
    fourth-order differences, ``omega`` against ``omega(0)`` plus the
    curvature integral over the strip, and ``h' = 2 pi - omega``.
    """
    _need_cylinder(spec)
    s = _sign(end)
    t = np.linspace(0.0, float(t_max), n)
    u = t_b + s * t
    h = TWO_PI * spec.f(u)
    rot = TWO_PI * s * spec.f(u, 1)
    omega = TWO_PI - rot
    H = _cum_gl(lambda x: TWO_PI * spec.f(t_b + s * x), t)
    H8 = _cum_gl(lambda x: TWO_PI * spec.f(t_b + s * x), t, n=8)
    Kint = _cum_gl(lambda x: TWO_PI * spec.gauss(t_b + s * x, 0.0 * x) * spec.f(t_b + s * x), t)
    omega_q = omega[0] + Kint
    return ExhaustionCurve(spec, end, t_b, t, H, h, omega, rot, np.abs(H - H8),
                           np.abs(deriv(H, t) - h), np.abs(omega - omega_q),
                           np.abs(deriv(h, t) - (TWO_PI - omega)))


def validate_levels(spec, end, levels=(0.5, 1.0, 1.5), t_b=0.0, h=0.05, ladder=(8.0, 16.0, 32.0)):
    """Max distance between the numerical Busemann level sets and coordinate circles."""
    bf = busemann_field(spec, end, window=(0.0, max(levels) + 0.5), ladder=ladder, h=h, t_b=t_b)
    dev = bf.level_deviation(levels)
    return {"levels": list(map(float, levels)), "deviation": list(map(float, dev)),
            "tolerance": float(4 * h + np.max(bf.error)), "ray_defect": bf.ray_defect,
            "circles": bool(np.all(dev <= 4 * h + np.max(bf.error)))}


def fiber_energy_end(spec, curve: ExhaustionCurve, n_ang=32, ladder=DEFAULT_LADDER, tol=1e-4,
                     n_coarse=65):
    """Fill ``F_i`` by integrating ``h(t) * int U^2 dalpha`` over the levels."""
    s = _sign(curve.end)
    tc = np.linspace(curve.t[0], curve.t[-1], n_coarse)
    u = curve.t_b + s * tc
    alpha = TWO_PI * np.arange(n_ang) / n_ang
    X = np.stack([np.repeat(u, n_ang), np.zeros(n_ang * len(u))], axis=1)
    A = np.tile(alpha, len(u))
    v1, v2 = spec.tangent(X[:, 0], X[:, 1], A)
    b = riccati_batch(spec, X, np.stack([v1, v2], 1), ladder, tol)
    U2 = (b.U ** 2).reshape(len(u), n_ang)
    G = TWO_PI * spec.f(u) * U2.sum(axis=1) * (TWO_PI / n_ang)
    Gh = TWO_PI * spec.f(u) * U2[:, ::2].sum(axis=1) * (TWO_PI / (n_ang // 2))
    pch = PchipInterpolator(tc, G)
    anti = pch.antiderivative()
    F = np.maximum.accumulate(np.maximum(anti(curve.t) - anti(tc[0]), 0.0))
    dF = np.maximum(pch(curve.t), 0.0)
    # budget: interpolant vs Simpson on the nodes plus the halved angular rule, doubled
    Fs = cumsimpson(G, tc)
    err = np.abs(anti(tc) - anti(tc[0]) - Fs) + np.abs(Fs - cumsimpson(Gh, tc))
    curve.F, curve.dF = F, dF
    curve.errF = 2.0 * np.interp(curve.t, tc, np.maximum.accumulate(err))
    return curve


def bol_fiala_check(curve: ExhaustionCurve):
    """``h(r) - int_0^r (2 pi - omega)``; returns (margin array, min margin)."""
    rhs = cumsimpson(TWO_PI - curve.omega, curve.t)
    margin = curve.h - rhs
    return margin, float(np.min(margin))


def doubling_identity(spec, r1, r2, t_b=0.0, n=256):
    """Both sides of ``int K dA = omega_1(r1) + omega_2(r2) - 4 pi`` over
    the subcylinder ``[t_b - r1, t_b + r2]``; returns (lhs, rhs)."""
    _need_cylinder(spec)
    a, b = t_b - r1, t_b + r2
    # split at the basepoint so each end is integrated on its own panel
    lhs = 0.0
    for lo, hi in ((a, t_b), (t_b, b)):
        x, w = gauss_legendre(lo, hi, n)
        lhs += float(TWO_PI * np.sum(w * spec.gauss(x, 0.0 * x) * spec.f(x)))
    om1 = TWO_PI - TWO_PI * SIGN[1] * float(spec.f(a, 1))
    om2 = TWO_PI - TWO_PI * SIGN[2] * float(spec.f(b, 1))
    return lhs, om1 + om2 - 2 * TWO_PI


# -- sphere lengths in an end -------------------------------------------------------


def _shoot_batch(spec, t0, alphas, r, tol):
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    X = np.stack([np.full(len(alphas), t0), np.zeros(len(alphas))], 1)
    v1, v2 = spec.tangent(X[:, 0], X[:, 1], alphas)
    sol = flow(spec, X, np.stack([v1, v2], 1), jac0=[(0.0, 1.0)], s_end=r, s_eval=[r], tol=tol)
    y = unpack(sol)[:, :, -1]
    return y[0], y[1], y[4]


WRAP = math.pi + 0.5


def _shoot_one(spec, t0, alpha, r, tol):
    """End point of one geodesic, stopped once ``theta~`` passes ``WRAP``.

    ``theta~`` is monotone along geodesics of a rotational cylinder
    (Clairaut), so a stopped geodesic stays outside the admissible set;
    its angle is reported as ``WRAP`` to keep the bisector test continuous.
    """
    def stop(s, y):
        return y[1] - WRAP

    stop.terminal = True
    stop.direction = 1
    v1, v2 = spec.tangent(np.array([t0]), np.array([0.0]), np.array([alpha]))
    sol = flow(spec, [[t0, 0.0]], [[v1[0], v2[0]]], s_end=r, tol=tol, events=stop)
    y = unpack(sol)[:, 0, -1]
    if sol.status == 1:
        return float(y[0]), WRAP
    return float(y[0]), float(y[1])


def sphere_length_in_end(spec, t0, r, end, n_scan=129, n_gl=48, tol=1e-11):
    """``H^1(U cap dB(p, r))`` for ``p = (t0, theta0)`` and ``U`` the half
    cylinder on the side of ``end``.

    The sphere is traced in the universal cover as ``exp_p(r v(alpha))``;
    a point belongs to the sphere of the cylinder iff ``|theta~| <= pi``
    (the bisector with the deck translates is the line ``theta~ = pi`` by
    reflection symmetry).  The length is ``int lambda dalpha`` over the
    admissible angles, with ``lambda`` the normalized Jacobi field.
    Requires a cover without conjugate points.
    """
    s = _sign(end)
    alphas = np.union1d(np.linspace(0.0, math.pi, n_scan), grazing_angles())
    ends = np.array([_shoot_one(spec, t0, a, r, tol) for a in alphas])
    t, th = ends[:, 0], ends[:, 1]

    def g_theta(a):
        return math.pi - _shoot_one(spec, t0, a, r, tol)[1]

    def g_side(a):
        return s * (_shoot_one(spec, t0, a, r, tol)[0] - t0)

    ok = (th <= math.pi) & (s * (t - t0) > 0)
    # breakpoints where either condition flips
    brk = []
    for k in range(len(alphas) - 1):
        for fn, vals in ((g_theta, math.pi - th), (g_side, s * (t - t0))):
            if (vals[k] > 0) != (vals[k + 1] > 0):
                brk.append(brentq(fn, alphas[k], alphas[k + 1], xtol=1e-14))
    edges = np.unique(np.concatenate([[0.0, math.pi], brk]))
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a < 1e-15:
            continue
        mid = 0.5 * (a + b)
        tm, thm = _shoot_one(spec, t0, mid, r, tol)
        if not (thm <= math.pi and s * (tm - t0) > 0):
            continue
        x, w = gauss_legendre(a, b, n_gl)
        lam_gl = _shoot_batch(spec, t0, x, r, tol)[2]
        if np.any(lam_gl <= 0):
            raise RuntimeError("conjugate point inside the sphere radius")
        total += float(np.sum(w * lam_gl))
    return 2.0 * total, bool(ok.any())


# -- end diagnostics ----------------------------------------------------------------


@dataclass
class EndOpeningReport:
    end: int
    s: list
    loop: list
    ratio: list
    opens_less_than_linearly: str
    ratio_tail: dict
    area_r: list
    area: list
    subquadratic: str
    area_tail: dict
    sphere_r: list
    sphere_margin: list
    area_bounds: list
    agreement: bool
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {k: getattr(self, k) for k in (
            "end", "s", "loop", "ratio", "opens_less_than_linearly", "ratio_tail", "area_r", "area",
            "subquadratic", "area_tail", "sphere_r", "sphere_margin", "area_bounds", "agreement",
            "notes")}


def _tail_dict(est):
    v = est.value
    return {"value": v if math.isfinite(v) else "inf", "window_min": est.window_min,
            "window": list(est.window), "slope": est.slope, "trend": est.trend,
            "monotone": est.monotone}


def end_opening_report(spec: SurfaceSpec, end, s_ladder=None, t_b=0.0, theta0=0.0, tail=0.5,
                       n_area=17, yes_tol=1e-3) -> EndOpeningReport:
    """Loop-length ratios, area growth in the end and the consistency checks.

    ``s_ladder`` are the ray parameters ``s_j`` of ``p_j = gamma_i(s_j)``
    (default geometric 1, 2, 4, ..., 32).
    """
    _need_cylinder(spec)
    sg = _sign(end)
    s_ladder = np.asarray(s_ladder if s_ladder is not None else 2.0 ** np.arange(6), dtype=float)
    loops = []
    for s in s_ladder:
        p = PointChart.cylinder(t_b + sg * s, theta0)
        loops.append(loop_length_shooting(spec, p).length)
    loops = np.array(loops)
    ratio = loops / s_ladder
    rt = tail_liminf(s_ladder, ratio, frac=tail)
    opens = "yes" if (rt.trend == "decaying" or rt.value <= yes_tol) else "no"

    l0 = loop_length_shooting(spec, PointChart.cylinder(t_b, theta0)).length
    r_grid = np.linspace(0.0, float(s_ladder[-1]), n_area)
    cache = {}

    def sphere(r):
        if r not in cache:
            cache[r] = sphere_length_in_end(spec, t_b, r, end)[0] if r > 0 else 0.0
        return cache[r]

    sph = np.array([sphere(float(r)) for r in r_grid])
    area = cumsimpson(sph, r_grid)
    at = tail_liminf(r_grid[1:], area[1:] / r_grid[1:] ** 2, frac=tail)
    subq = "yes" if (at.trend == "decaying" or at.value <= yes_tol) else "no"

    # the lemma relating loops and spheres applies beyond half the basepoint loop
    r_sph = [float(s) for s in s_ladder if s > 0.5 * l0]
    m_sph = []
    for r in r_sph:
        sl = sphere(r)
        lr = loops[list(s_ladder).index(r)]
        m_sph.append(sl - lr)
    notes = [f"basepoint loop length {l0:.10g}"]
    # area bound for the horocyclic pieces, with Gamma_0 the basepoint circle
    g0 = TWO_PI * float(spec.f(t_b))
    area_bounds = []
    for s, l in zip(s_ladder, loops):
        rj = s - l
        if rj <= 0:
            continue
        Hr = float(_cum_gl(lambda x: TWO_PI * spec.f(t_b + sg * x), np.array([0.0, rj]), n=64)[-1])
        L = 0.5 * (g0 + l)
        bound = 8.0 / math.pi * (s + L) * L
        area_bounds.append({"s": float(s), "r": float(rj), "H": Hr, "bound": bound,
                        "slack": bound - Hr})
    agree = opens == subq
    if not agree:
        notes.append("loop-length and area-growth verdicts disagree at this scale")
    return EndOpeningReport(end, list(map(float, s_ladder)), list(map(float, loops)),
                            list(map(float, ratio)), opens, _tail_dict(rt), list(map(float, r_grid)),
                            list(map(float, area)), subq, _tail_dict(at), r_sph, m_sph, area_bounds, agree,
                            notes)


# -- assembly -------------------------------------------------------------------


@dataclass
class Theorem2Report:
    label: str
    ends: dict
    doubling_max_rel: float
    hypothesis_defect: dict
    inequality_max_violation: float
    inequality_budget: float
    sup_F: dict
    tail_H: dict
    bound: float | None
    total_U2: float
    max_abs_K: float
    verdict: str
    findings: list = field(default_factory=list)

    def to_dict(self):
        def fin(x):
            return x if x is None or (isinstance(x, float) and math.isfinite(x)) or not isinstance(
                x, float) else "inf"

        return {
            "label": self.label,
            "ends": self.ends,
            "doubling_max_rel": self.doubling_max_rel,
            "hypothesis_defect": self.hypothesis_defect,
            "inequality_max_violation": self.inequality_max_violation,
            "inequality_budget": self.inequality_budget,
            "sup_F": self.sup_F,
            "tail_H_over_r2": {k: fin(v) for k, v in self.tail_H.items()},
            "bound": fin(self.bound),
            "total_U2": self.total_U2,
            "max_abs_K": self.max_abs_K,
            "verdict": self.verdict,
            "findings": list(self.findings),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def theorem2_report(spec: SurfaceSpec, r_max=8.0, t_b=0.0, n=801, n_ang=16,
                    ladder=DEFAULT_LADDER, riccati_tol=1e-4, tail=0.5, s_ladder=None,
                    flat_tol=1e-8, K_tol=1e-10, n_pairs=9):
    """Assemble the cylinder argument on the grid ``0 <= r_1, r_2 <= r_max``."""
    _need_cylinder(spec)
    ends, curves, findings = {}, {}, []
    for i in (1, 2):
        rep = end_opening_report(spec, i, s_ladder=s_ladder, t_b=t_b, tail=tail)
        ends[i] = rep.to_dict()
        c = exhaustion_curves(spec, i, r_max, n=n, t_b=t_b)
        curves[i] = fiber_energy_end(spec, c, n_ang=n_ang, ladder=ladder, tol=riccati_tol)
        if rep.opens_less_than_linearly != "yes":
            findings.append(f"premise violated at end {i}: end opens linearly, theorem premise not"
                            " met, no flatness conclusion")
    # (i) curvature bookkeeping
    rs = np.linspace(r_max / n_pairs, r_max, n_pairs)
    worst = 0.0
    for r1 in rs:
        for r2 in rs:
            lhs, rhs = doubling_identity(spec, r1, r2, t_b)
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    # (ii) the two-end differential inequality; F_0 vanishes (H^0 is the basepoint circle)
    F0 = 0.0
    c1, c2 = curves[1], curves[2]
    idx = np.linspace(1, len(c1.t) - 1, n_pairs).astype(int)
    viol, budget = -math.inf, 0.0
    for a in idx:
        for b in idx:
            lhs = F0 + c1.F[a] + c2.F[b]
            rhs = (A_CONST * ((TWO_PI - c1.omega[a]) + (TWO_PI - c2.omega[b]))
                   + B_CONST * (math.sqrt(c1.dF[a] * c1.h[a]) + math.sqrt(c2.dF[b] * c2.h[b])))
            viol = max(viol, lhs - rhs)
            budget = max(budget, c1.errF[a] + c2.errF[b] + 1e-9 * max(1.0, abs(lhs)))
    # (iii) hypothesis of the lemma on each end
    hyp = {}
    tails = {}
    supF = {}
    for i, c in curves.items():
        hyp[i] = check_hypothesis(c.t, c.H, TWO_PI - c.omega)
        pos = c.t > 0
        est = tail_liminf(c.t[pos], c.H[pos] / c.t[pos] ** 2, frac=tail)
        tails[i] = est.value
        supF[i] = float(np.max(c.F))
    total = F0 + supF[1] + supF[2]
    max_K = max(float(np.max(np.abs(spec.gauss(c.t_b + SIGN[i] * c.t, 0.0 * c.t))))
                for i, c in curves.items())
    # (iv) the lemma, end 2 first with the end-1 bookkeeping, then end 1
    bound = None
    if not findings:
        try:
            k = len(c1.t) // 2
            cr1 = (A_CONST * (TWO_PI - c1.omega[k]) + B_CONST * math.sqrt(c1.dF[k] * c1.h[k])
                   - F0 - c1.F[k])
            pos = c2.t > 0
            v2 = sharp_bound(OdeLemmaData(c2.t[pos], c2.H[pos], c2.F[pos], (TWO_PI - c2.omega)[pos],
                                          A_CONST, B_CONST, cr1, dF=c2.dF[pos], dA=c2.h[pos]),
                             tail=tail, tol=1e-6)
            cst = 2 * A_CONST * tails[2] - supF[2] - F0
            pos = c1.t > 0
            sharp_bound(OdeLemmaData(c1.t[pos], c1.H[pos], c1.F[pos], (TWO_PI - c1.omega)[pos],
                                     A_CONST, B_CONST, cst, dF=c1.dF[pos], dA=c1.h[pos]),
                        tail=tail, tol=1e-6)
            bound = 2 * A_CONST * (tails[1] + tails[2])
            if not v2.passed:
                findings.append("lemma bound for end 2 not attained on the grid")
        except (LemmaPreconditionError, ValueError, ArithmeticError) as exc:
            findings.append(f"lemma step failed: {exc}")
    if viol > budget:
        findings.append(f"two-end differential inequality violated by {viol:.3e}")
    for i in (1, 2):
        if hyp[i] > 1e-6 * max(1.0, float(np.max(curves[i].H))):
            findings.append(f"hypothesis of the lemma fails at end {i} (defect {hyp[i]:.3e})")
    if worst > 1e-6:
        findings.append(f"curvature bookkeeping off by {worst:.3e} (relative)")
    if findings:
        verdict = "premise-violated" if any("premise" in f for f in findings) else "finding"
    elif bound is not None and bound <= flat_tol and total <= flat_tol and max_K <= K_tol:
        verdict = "consistent-flat"
    else:
        verdict = "finding"
        findings.append("both ends open less than linearly but the surface is not flat at the"
                        " sampled scale")
    return Theorem2Report(spec.label, {str(k): v for k, v in ends.items()}, worst,
                          {str(k): v for k, v in hyp.items()}, float(viol), float(budget),
                          {str(k): v for k, v in supF.items()},
                          {str(k): v for k, v in tails.items()}, bound, float(total), max_K,
                          verdict, findings)

"""Area growth of metric balls, fiber energy and the area-growth verdict for planes.

Everything is read off the polar chart at ``p``: the boundary length of the
metric circle of radius ``r`` is ``L(r) = int lam(theta, r) dtheta``, its
derivative ``int lam' dtheta`` is the rotation of the circle, and the
curvature integral over the ball is ``int int K lam dtheta dr``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

from .geodesics import DEFAULT_TOL, radial_chart
from .hopf import DEFAULT_LADDER, ConjugatePointError, riccati_batch
from .metric import TWO_PI, DomainError, PointChart, SurfaceSpec
from .numerics import cumhermite, cumsimpson, tail_liminf
from .odelemma import OdeLemmaData, sharp_bound

A_CONST = TWO_PI
B_CONST = math.sqrt(TWO_PI)
C_CONST = -4.0 * math.pi ** 2


class PremiseViolated(RuntimeError):
    """The surface has conjugate points where the analysis needs none."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


@dataclass
class GrowthCurve:
    """Ball growth data on the radial grid ``r``.

    ``Asecond`` is the rotation of the metric circle (the derivative of
    ``L``), ``gb_defect`` is ``Asecond - (2 pi - omega)``.  ``F`` and
    ``dF`` stay None until :func:`fiber_energy` fills them.
    """

    spec: SurfaceSpec
    p: PointChart
    r: np.ndarray
    A: np.ndarray
    L: np.ndarray
    Asecond: np.ndarray
    omega: np.ndarray
    errA: np.ndarray
    max_abs_K: float
    F: np.ndarray | None = None
    dF: np.ndarray | None = None
    errF: np.ndarray | None = None
    F_unreliable: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def gb_defect(self):
        return self.Asecond - (TWO_PI - self.omega)

    def to_csv(self, path):
        F = self.F if self.F is not None else np.full_like(self.r, np.nan)
        errF = self.errF if self.errF is not None else np.full_like(self.r, np.nan)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "A", "L", "Asecond", "omega", "F", "errA", "errF"])
            for row in zip(self.r, self.A, self.L, self.Asecond, self.omega, F, self.errA, errF):
                w.writerow([repr(float(x)) for x in row])


def ball_growth(spec: SurfaceSpec, p: PointChart, r_max, n_theta=256, dr=None,
                tol=DEFAULT_TOL) -> GrowthCurve:
    if not spec.is_plane:
        raise DomainError("ball growth is defined here for planes")
    ch = radial_chart(spec, p, r_max, n_theta=n_theta, dr=dr, tol=tol)
    if ch.truncated:
        th, r = ch.first_flag()
        raise PremiseViolated(f"conjugate point on the radial geodesic theta={th:.6g} at r={r:.6g}",
                              (th, r))
    dth = ch.dtheta
    L = ch.lam.sum(axis=0) * dth
    dL = ch.dlam.sum(axis=0) * dth
    w = (ch.K * ch.lam).sum(axis=0) * dth
    omega = cumsimpson(w, ch.r)
    A = cumsimpson(L, ch.r)
    errA = np.abs(A - cumhermite(L, dL, ch.r))
    return GrowthCurve(spec, p, ch.r, A, L, dL, omega, errA, float(np.max(np.abs(ch.K))),
                       meta={"n_theta": n_theta, "dr": float(ch.r[1] - ch.r[0]), "tol": tol})


def _fiber_integrals(spec, p, r_nodes, n_theta, n_ang, ladder, tol):
    """``G(r) = sum_j lam dtheta int U^2 dalpha`` at ``r_nodes`` (full and half fiber rule)."""
    homogeneous = spec.homogeneous_at(p)
    nt = 1 if homogeneous else n_theta
    ch = radial_chart(spec, p, float(r_nodes[-1]), n_theta=n_theta,
                      dr=float(r_nodes[1] - r_nodes[0]))
    if ch.truncated:
        raise PremiseViolated("conjugate point inside the fiber-energy window", ch.first_flag())
    k = np.rint(r_nodes / (ch.r[1] - ch.r[0])).astype(int)
    alpha = TWO_PI * np.arange(n_ang) / n_ang
    rows = np.arange(nt)
    X1 = ch.x1[np.ix_(rows, k)]
    X2 = ch.x2[np.ix_(rows, k)]
    # fiber angles are measured from the radial direction so that the
    # homogeneous shortcut reuses one direction for every theta
    v1r = ch.v1[np.ix_(rows, k)]
    v2r = ch.v2[np.ix_(rows, k)]
    (e1, e2) = spec.frame(X1, X2)
    base = np.arctan2(spec.inner(X1, X2, (v1r, v2r), e2), spec.inner(X1, X2, (v1r, v2r), e1))
    ang = (base[..., None] + alpha).reshape(-1)
    XX = np.repeat(X1.reshape(-1), n_ang)
    YY = np.repeat(X2.reshape(-1), n_ang)
    t1, t2 = spec.tangent(XX, YY, ang)
    b = riccati_batch(spec, np.stack([XX, YY], 1), np.stack([t1, t2], 1), ladder, tol)
    U2 = (b.U ** 2).reshape(nt, len(k), n_ang)
    fib_full = U2.sum(axis=2) * (TWO_PI / n_ang)
    fib_half = U2[..., ::2].sum(axis=2) * (TWO_PI / (n_ang // 2))
    lam = ch.lam[np.ix_(rows, k)]
    if homogeneous:
        weight = ch.lam[:, k].sum(axis=0) * ch.dtheta
        G, Gh = weight * fib_full[0], weight * fib_half[0]
    else:
        G = (lam * fib_full).sum(axis=0) * ch.dtheta
        Gh = (lam * fib_half).sum(axis=0) * ch.dtheta
    frac_bad = float(np.mean(~b.converged))
    return G, Gh, frac_bad


def fiber_energy(spec: SurfaceSpec, p: PointChart, curve: GrowthCurve, n_ang=32,
                 ladder=DEFAULT_LADDER, tol=1e-4, n_coarse=65, n_theta=64,
                 bad_fraction=0.05) -> GrowthCurve:
    """Fill ``F`` (and ``dF``) by integrating the fiber integral of ``U^2`` in r.

    The fiber integral is computed on ``n_coarse`` radii and integrated with a
    monotone (PCHIP) interpolant, so ``F`` is non-decreasing by construction.
    """
    if n_ang % 2:
        raise ValueError("n_ang must be even")
    r_max = float(curve.r[-1])
    rc = np.linspace(0.0, r_max, n_coarse)
    G, Gh, frac_bad = _fiber_integrals(spec, p, rc, n_theta, n_ang, ladder, tol)
    G = np.maximum(G, 0.0)
    pch = PchipInterpolator(rc, G)
    Fint = pch.antiderivative()
    F = Fint(curve.r) - Fint(0.0)
    F = np.maximum.accumulate(np.maximum(F, 0.0))
    dF = np.maximum(pch(curve.r), 0.0)
    trap = np.interp(curve.r, rc, cumsimpson(np.maximum(Gh, 0.0), rc))
    lin = np.interp(curve.r, rc, np.concatenate([[0.0], np.cumsum(0.5 * np.diff(rc) * (G[1:] + G[:-1]))]))
    errF = np.abs(F - trap) + np.abs(F - lin)
    meta = dict(curve.meta, n_ang=n_ang, ladder=list(ladder), riccati_tol=tol, n_coarse=n_coarse,
                not_converged_fraction=frac_bad)
    return replace(curve, F=F, dF=dF, errF=errF, F_unreliable=frac_bad > bad_fraction, meta=meta)


def section3_violation(curve: GrowthCurve):
    """Pointwise ``F - (2 pi A'' + sqrt(2 pi) sqrt(F' A') - 4 pi^2)`` on the grid."""
    if curve.F is None:
        raise ValueError("fiber energy not computed")
    rhs = A_CONST * curve.Asecond + B_CONST * np.sqrt(np.maximum(curve.dF * curve.L, 0.0)) + C_CONST
    return curve.F - rhs


@dataclass
class Theorem1Report:
    label: str
    ratio: float
    ratio_window_min: float
    window: tuple
    trend: str
    monotone: str
    F_tail: float
    max_abs_K: float
    inequality_max_violation: float
    inequality_budget: float
    lemma_bound: float | None
    verdict: str
    diagnostics: list = field(default_factory=list)

    def to_dict(self):
        def fin(x):
            return x if x is None or math.isfinite(x) else ("inf" if x > 0 else "-inf")

        return {
            "label": self.label,
            "liminf_ratio": fin(self.ratio),
            "ratio_window_min": self.ratio_window_min,
            "window": list(self.window),
            "trend": self.trend,
            "monotone": self.monotone,
            "F_tail": self.F_tail,
            "max_abs_K": self.max_abs_K,
            "inequality_max_violation": self.inequality_max_violation,
            "inequality_budget": self.inequality_budget,
            "lemma_bound": fin(self.lemma_bound),
            "verdict": self.verdict,
            "diagnostics": list(self.diagnostics),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def theorem1_report(spec: SurfaceSpec, p: PointChart, r_max, tail=0.5, n_theta=256, dr=None,
                    n_ang=32, ladder=DEFAULT_LADDER, riccati_tol=1e-4, ratio_tol=1e-6,
                    F_tol=1e-8, K_tol=1e-10, n_coarse=65):
    """Tail estimate of ``A/(pi r^2)``, fiber energy and the resulting verdict."""
    label = spec.label
    try:
        curve = ball_growth(spec, p, r_max, n_theta=n_theta, dr=dr)
        curve = fiber_energy(spec, p, curve, n_ang=n_ang, ladder=ladder, tol=riccati_tol,
                             n_coarse=n_coarse)
    except (PremiseViolated, ConjugatePointError) as exc:
        return None, Theorem1Report(label, math.nan, math.nan, (math.nan, math.nan), "n/a", "n/a",
                                    math.nan, math.nan, math.nan, math.nan, None,
                                    "premise-violated", [str(exc)])
    r = curve.r
    pos = r > 0
    est = tail_liminf(r[pos], curve.A[pos] / (math.pi * r[pos] ** 2), frac=tail)
    viol = section3_violation(curve)
    budget = curve.errF + A_CONST * np.abs(curve.gb_defect) + 1e-9 * np.maximum(1.0, np.abs(curve.F))
    diag = [f"tail window [{est.window[0]:.6g}, {est.window[1]:.6g}], trend {est.trend},"
            f" {est.monotone}"]
    if curve.F_unreliable:
        diag.append("fiber energy unreliable: too many non-converged Riccati samples")
    excess = viol - budget
    if np.any(excess > 0):
        k = int(np.argmax(excess))
        diag.append(f"differential inequality exceeds its budget at r={r[k]:.6g} by {excess[k]:.3e}")
    bound = None
    try:
        data = OdeLemmaData(r[pos], curve.A[pos], curve.F[pos], curve.Asecond[pos], A_CONST, B_CONST,
                            C_CONST, dF=curve.dF[pos], dA=curve.L[pos])
        bound = sharp_bound(data, tail=tail, tol=1e-6).bound
    except (ValueError, ArithmeticError) as exc:
        diag.append(f"lemma check skipped: {exc}")
    F_tail = float(curve.F[-1])
    ratio = est.value
    if ratio < 1.0 - ratio_tol:
        verdict = "premise-violated"
        diag.append(f"tail ratio {ratio:.8g} below 1; the no-conjugate-point premise cannot hold"
                    " or the window is unresolved")
    elif abs(ratio - 1.0) <= ratio_tol and F_tail <= F_tol and curve.max_abs_K <= K_tol:
        verdict = "consistent-flat"
    else:
        verdict = "strictly-above-1"
        if abs(ratio - 1.0) <= ratio_tol:
            diag.append("ratio within tolerance of 1 while curvature or F is nonzero;"
                        " the tail window is too short to separate")
        if est.trend == "diverging":
            diag.append("A/(pi r^2) grows without bound on the tail window")
    rep = Theorem1Report(label, ratio, est.window_min, est.window, est.trend, est.monotone, F_tail,
                         curve.max_abs_K, float(np.max(viol)), float(np.max(budget)), bound, verdict,
                         diag)
    return curve, rep

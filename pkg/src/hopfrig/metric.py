"""Surface families, metric spec files, curvature and Christoffel symbols.

Every supported surface is a complete plane or cylinder described by one
profile expression:

* ``flat_plane`` -- Euclidean R^2, Cartesian chart.
* ``conformal_plane`` -- ``g = exp(2 phi(x, y)) (dx^2 + dy^2)``.
* ``rotational_plane`` -- ``g = dr^2 + f(r)^2 dtheta^2`` around a pole at the
  origin.  Geodesics are integrated in the Cartesian chart of the polar
  coordinates so that paths through the pole stay regular.
* ``flat_cylinder`` -- ``dt^2 + radius^2 dtheta^2``.
* ``rotational_cylinder`` -- ``dt^2 + f(t)^2 dtheta^2``, t in R.

Cylinders are handled in the chart ``(t, theta)`` with theta unwrapped, which
is the universal cover; the deck translation is ``theta -> theta + 2 pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import ExprSyntaxError, Expr, compile_expr, parse_expr

TWO_PI = 2.0 * math.pi
EPS_POLE = 1e-6
_EPS_POLE_SERIES = 1e-4

FAMILIES = (
    "flat_plane",
    "flat_cylinder",
    "conformal_plane",
    "rotational_plane",
    "rotational_cylinder",
)


class SpecSyntaxError(ValueError):
    """Malformed metric spec file; ``line`` and ``column`` are 1-based."""

    def __init__(self, message, line, column):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class InvariantError(ValueError):
    """A spec failed one of its family invariants."""

    def __init__(self, check, point, detail=""):
        msg = f"invariant {check!r} violated at {point}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.check = check
        self.point = point


class DomainError(ValueError):
    """Evaluation outside the numerically valid domain of a spec."""


@dataclass(frozen=True)
class PointChart:
    """A point in one of the charts.

    ``kind`` is ``"cartesian"`` (x, y) or ``"polar"`` (r, theta) for planes
    and ``"cylinder"`` (t, theta) for cylinders.  Angles are stored in
    ``[0, 2 pi)``; a negative polar radius is folded through the origin.
    """

    coords: tuple
    kind: str = "cartesian"

    def __post_init__(self):
        a, b = (float(c) for c in self.coords)
        if self.kind == "polar":
            if a < 0.0:
                a, b = -a, b + math.pi
            b = math.fmod(b, TWO_PI)
            if b < 0.0:
                b += TWO_PI
        elif self.kind == "cylinder":
            b = math.fmod(b, TWO_PI)
            if b < 0.0:
                b += TWO_PI
        elif self.kind != "cartesian":
            raise ValueError(f"unknown chart kind {self.kind!r}")
        object.__setattr__(self, "coords", (a, b))

    @classmethod
    def cartesian(cls, x, y):
        return cls((x, y), "cartesian")

    @classmethod
    def polar(cls, r, theta):
        return cls((r, theta), "polar")

    @classmethod
    def cylinder(cls, t, theta):
        return cls((t, theta), "cylinder")


@dataclass(frozen=True)
class CurvatureSample:
    point: PointChart
    K: float


@dataclass(frozen=True)
class Christoffels:
    """Christoffel symbols ``gamma[k, i, j]`` of the chart named ``chart``."""

    chart: str
    gamma: np.ndarray

    def __getitem__(self, idx):
        return self.gamma[idx]


def _as_array(value, like):
    return np.asarray(value, dtype=float) + np.zeros_like(like, dtype=float)


@dataclass(frozen=True, eq=False)
class SurfaceSpec:
    """A complete surface from one of the supported families.

    Use the family constructors (``SurfaceSpec.rotational_plane("sinh(r)")``
    etc.) or :func:`parse_metric_spec`.  All evaluation methods take chart
    coordinates as numpy arrays and broadcast.
    """

    family: str
    label: str = ""
    source: str = ""
    radius: float | None = None
    profile: Expr | None = None
    variable: str = ""
    _d: dict = field(default_factory=dict, repr=False)

    # -- constructors ------------------------------------------------------

    @classmethod
    def flat_plane(cls, label="flat_plane"):
        return cls("flat_plane", label)

    @classmethod
    def flat_cylinder(cls, radius=1.0, label="", check=True):
        radius = float(radius)
        if check and not (radius > 0.0 and math.isfinite(radius)):
            raise InvariantError("radius > 0", radius)
        return cls("flat_cylinder", label or f"flat_cylinder(radius={radius:g})", radius=radius)

    @classmethod
    def conformal_plane(cls, phi, label="", check=True):
        expr = parse_expr(phi, ("x", "y")) if isinstance(phi, str) else phi
        spec = cls("conformal_plane", label or f"conformal_plane(phi={phi})", str(phi),
                   profile=expr, variable="x,y")
        spec._prepare()
        if check:
            spec._check()
        return spec

    @classmethod
    def rotational_plane(cls, f, label="", check=True):
        expr, var = _parse_profile(f)
        spec = cls("rotational_plane", label or f"rotational_plane(f={f})", str(f),
                   profile=expr, variable=var)
        spec._prepare()
        if check:
            spec._check()
        return spec

    @classmethod
    def rotational_cylinder(cls, f, label="", check=True):
        expr, var = _parse_profile(f)
        spec = cls("rotational_cylinder", label or f"rotational_cylinder(f={f})", str(f),
                   profile=expr, variable=var)
        spec._prepare()
        if check:
            spec._check()
        return spec

    # -- classification ----------------------------------------------------

    @property
    def is_plane(self):
        return self.family.endswith("plane")

    @property
    def is_cylinder(self):
        return self.family.endswith("cylinder")

    @property
    def is_rotational(self):
        """Warped-product structure ``du^2 + f(u)^2 dtheta^2``."""
        return self.family in ("rotational_plane", "rotational_cylinder", "flat_cylinder")

    @property
    def is_flat(self):
        return self.family in ("flat_plane", "flat_cylinder")

    def homogeneous_at(self, p: PointChart) -> bool:
        """True when the geometry seen from ``p`` is invariant under rotating
        the unit circle at ``p`` (flat plane anywhere, rotational plane at
        its pole)."""
        if self.family == "flat_plane":
            return True
        if self.family == "rotational_plane":
            x, y = self.to_chart(p)
            return math.hypot(x, y) < EPS_POLE
        return False

    def to_chart(self, p: PointChart):
        """Chart coordinates used by the geodesic engine."""
        a, b = p.coords
        if self.is_plane:
            if p.kind == "polar":
                return a * math.cos(b), a * math.sin(b)
            if p.kind == "cartesian":
                return a, b
        elif p.kind == "cylinder":
            return a, b
        raise DomainError(f"point of kind {p.kind!r} does not belong to a {self.family}")

    def from_chart(self, x1, x2) -> PointChart:
        if self.is_plane:
            return PointChart.cartesian(x1, x2)
        return PointChart.cylinder(x1, x2)

    # -- profile -----------------------------------------------------------

    def _prepare(self):
        d = self._d
        if self.family == "conformal_plane":
            phi = self.profile
            d["phi"] = phi
            d["phi_x"] = phi.diff("x")
            d["phi_y"] = phi.diff("y")
            d["phi_xx"] = d["phi_x"].diff("x")
            d["phi_yy"] = d["phi_y"].diff("y")
        elif self.profile is not None:
            ders = [self.profile]
            for _ in range(5):
                ders.append(ders[-1].diff(self.variable))
            d["f"] = ders
            d["fc"] = [compile_expr(e, (self.variable,)) for e in ders]
            if self.family == "rotational_plane":
                with np.errstate(all="ignore"):
                    d["a3"] = float(ders[3](**{self.variable: 0.0})) / 6.0
                    d["a5"] = float(ders[5](**{self.variable: 0.0})) / 120.0

    def f(self, u, k=0):
        """k-th derivative of the warping profile at ``u`` (k <= 5)."""
        if isinstance(u, float) and "fc" in self._d:
            # scalar fast path for the one-geodesic integrators
            with np.errstate(all="ignore"):
                return np.float64(self._d["fc"][k](np.float64(u)))
        u = np.asarray(u, dtype=float)
        if self.family == "flat_cylinder":
            return _as_array(self.radius if k == 0 else 0.0, u)
        if "f" not in self._d:
            raise DomainError(f"{self.family} has no warping profile")
        with np.errstate(all="ignore"):
            return _as_array(self._d["fc"][k](u), u)

    def phi(self, x, y, which="phi"):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.family == "flat_plane":
            return np.zeros(np.broadcast(x, y).shape)
        with np.errstate(all="ignore"):
            return _as_array(self._d[which](x=x, y=y), x + y)

    def _check(self, n=401):
        fam = self.family
        if fam == "rotational_plane":
            f0 = float(self.f(0.0))
            if abs(f0) > 1e-12:
                raise InvariantError("f(0)=0", 0.0, f"f(0)={f0:.3g}")
            h = 1e-4

            def d1(step):
                return float((self.f(step) - self.f(0.0)) / step)

            slope = (4.0 * d1(h / 2) - d1(h)) / 3.0
            if not abs(slope - 1.0) < 1e-6:
                raise InvariantError("f'(0)=1", 0.0, f"finite-difference slope {slope:.6g}")
            curv = float((self.f(2 * h) - 2 * self.f(h) + self.f(0.0)) / h**2)
            if not abs(curv) < 1e-3:
                raise InvariantError("f''(0)=0", 0.0, f"finite-difference value {curv:.3g}")
            r = np.linspace(0.0, 20.0, n)[1:]
            vals = self.f(r)
            bad = ~(np.isfinite(vals) & (vals > 0.0))
            if bad.any():
                raise InvariantError("f(r)>0", float(r[np.argmax(bad)]))
        elif fam == "rotational_cylinder":
            t = np.linspace(-20.0, 20.0, n)
            vals = self.f(t)
            bad = ~(np.isfinite(vals) & (vals > 0.0))
            if bad.any():
                raise InvariantError("f(t)>0", float(t[np.argmax(bad)]))
        elif fam == "conformal_plane":
            g = np.linspace(-10.0, 10.0, 81)
            X, Y = np.meshgrid(g, g, indexing="ij")
            for key in ("phi", "phi_x", "phi_y", "phi_xx", "phi_yy"):
                vals = self.phi(X, Y, key)
                bad = ~np.isfinite(vals)
                if bad.any():
                    i = np.argmax(bad.ravel())
                    raise InvariantError(f"{key} finite", (float(X.ravel()[i]), float(Y.ravel()[i])))

    # -- vectorized geometry in chart coordinates ---------------------------

    def _pole_terms(self, r):
        """rho=f/r, A=(f f'-r)/r^2, B=(f-r f')/(r f) with pole series."""
        a3, a5 = self._d["a3"], self._d["a5"]
        f0 = self.f(r)
        f1 = self.f(r, 1)
        with np.errstate(all="ignore"):
            rho = np.where(r < EPS_POLE, 1.0 + a3 * r**2, f0 / r)
            A = np.where(r < _EPS_POLE_SERIES, 4 * a3 * r + (6 * a5 + 3 * a3**2) * r**3,
                         (f0 * f1 - r) / r**2)
            B = np.where(r < _EPS_POLE_SERIES, -2 * a3 * r + (2 * a3**2 - 4 * a5) * r**3,
                         (f0 - r * f1) / (r * f0))
        return rho, A, B

    def metric(self, x1, x2):
        """Metric components (g11, g12, g22) in the engine chart."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        fam = self.family
        if fam in ("flat_plane", "conformal_plane"):
            w = np.exp(2.0 * self.phi(x1, x2))
            return w, np.zeros_like(w), w
        if fam == "rotational_plane":
            r = np.hypot(x1, x2)
            rho, _, _ = self._pole_terms(r)
            safe = np.where(r > 0, r, 1.0)
            e1 = np.where(r > 0, x1 / safe, 1.0)
            e2 = np.where(r > 0, x2 / safe, 0.0)
            q = rho**2
            return e1 * e1 + q * (1 - e1 * e1), (1 - q) * e1 * e2, e2 * e2 + q * (1 - e2 * e2)
        f = self.f(x1)
        return np.ones_like(f), np.zeros_like(f), f * f

    def accel(self, x1, x2, v1, v2):
        """Geodesic acceleration ``-Gamma^k_ij v^i v^j`` in the engine chart."""
        fam = self.family
        if fam == "flat_plane":
            return np.zeros_like(v1), np.zeros_like(v2)
        if fam == "conformal_plane":
            px = self.phi(x1, x2, "phi_x")
            py = self.phi(x1, x2, "phi_y")
            a1 = -(px * (v1 * v1 - v2 * v2) + 2.0 * py * v1 * v2)
            a2 = -(py * (v2 * v2 - v1 * v1) + 2.0 * px * v1 * v2)
            return a1, a2
        if fam == "rotational_plane":
            r = np.hypot(x1, x2)
            _, A, B = self._pole_terms(r)
            safe = np.where(r > 0, r, 1.0)
            e1 = np.where(r > 0, x1 / safe, 1.0)
            e2 = np.where(r > 0, x2 / safe, 0.0)
            vr = v1 * e1 + v2 * e2
            vp = -v1 * e2 + v2 * e1
            ra = A * vp * vp
            pa = 2.0 * B * vr * vp
            return ra * e1 - pa * e2, ra * e2 + pa * e1
        f = self.f(x1)
        f1 = self.f(x1, 1)
        return f * f1 * v2 * v2, -2.0 * (f1 / f) * v1 * v2

    def gauss(self, x1, x2):
        """Gaussian curvature at chart points."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        fam = self.family
        if fam in ("flat_plane", "flat_cylinder"):
            return np.zeros(np.broadcast(x1, x2).shape)
        if fam == "conformal_plane":
            lap = self.phi(x1, x2, "phi_xx") + self.phi(x1, x2, "phi_yy")
            return -np.exp(-2.0 * self.phi(x1, x2)) * lap
        if fam == "rotational_plane":
            r = np.hypot(x1, x2)
            a3, a5 = self._d["a3"], self._d["a5"]
            with np.errstate(all="ignore"):
                K = np.where(r < EPS_POLE, -6 * a3 + (6 * a3**2 - 20 * a5) * r**2,
                             -self.f(r, 2) / self.f(r))
            return K
        return -self.f(x1, 2) / self.f(x1)

    def frame(self, x1, x2):
        """Orthonormal frame by Gram-Schmidt on the coordinate basis.

        Returns ``(E1, E2)`` each as a pair of component arrays.
        """
        g11, g12, g22 = self.metric(x1, x2)
        s1 = np.sqrt(g11)
        e1 = (1.0 / s1, np.zeros_like(s1))
        n2 = np.sqrt(g22 - g12 * g12 / g11)
        e2 = (-(g12 / g11) / n2, 1.0 / n2)
        return e1, e2

    def tangent(self, x1, x2, angle):
        """Unit vector at angle ``angle`` in :meth:`frame`."""
        (a1, a2), (b1, b2) = self.frame(x1, x2)
        c, s = np.cos(angle), np.sin(angle)
        return c * a1 + s * b1, c * a2 + s * b2

    def norm(self, x1, x2, v1, v2):
        g11, g12, g22 = self.metric(x1, x2)
        return np.sqrt(g11 * v1 * v1 + 2 * g12 * v1 * v2 + g22 * v2 * v2)

    def inner(self, x1, x2, u, v):
        g11, g12, g22 = self.metric(x1, x2)
        return g11 * u[0] * v[0] + g12 * (u[0] * v[1] + u[1] * v[0]) + g22 * u[1] * v[1]


def _parse_profile(f):
    if isinstance(f, Expr):
        vars_ = sorted(f.variables()) or ["r"]
        return f, vars_[0]
    expr = parse_expr(f, ("r", "t"))
    vars_ = sorted(expr.variables())
    if len(vars_) > 1:
        raise ExprSyntaxError("profile must use a single free variable (r or t)", 1)
    return expr, (vars_[0] if vars_ else "r")


# -- operations -----------------------------------------------------------


def _checked_point(spec, p):
    x1, x2 = spec.to_chart(p)
    if spec.is_rotational and spec.family != "rotational_plane":
        fv = float(spec.f(x1))
        if not math.isfinite(fv):
            raise DomainError(f"profile not finite at t={x1:g}")
        if fv <= 0.0:
            raise DomainError(f"ill-posed spec: f({x1:g})={fv:g} vanishes away from a pole")
    if spec.family == "rotational_plane":
        r = math.hypot(x1, x2)
        if r >= EPS_POLE and not float(spec.f(r)) > 0.0:
            raise DomainError(f"ill-posed spec: f({r:g}) vanishes away from the pole")
    return x1, x2


def curvature_at(spec: SurfaceSpec, p: PointChart) -> CurvatureSample:
    """Gaussian curvature ``K`` at ``p``."""
    x1, x2 = _checked_point(spec, p)
    K = float(spec.gauss(x1, x2))
    if not math.isfinite(K):
        raise DomainError(f"curvature not finite at {p}")
    return CurvatureSample(p, K)


def christoffels_at(spec: SurfaceSpec, p: PointChart) -> Christoffels:
    """Christoffel symbols at ``p``.

    The chart follows ``p.kind``: warped ``(u, theta)`` symbols for polar
    points of rotational planes and for cylinders, Cartesian symbols
    otherwise.
    """
    x1, x2 = _checked_point(spec, p)
    G = np.zeros((2, 2, 2))
    fam = spec.family
    if fam == "conformal_plane":
        px = float(spec.phi(x1, x2, "phi_x"))
        py = float(spec.phi(x1, x2, "phi_y"))
        G[0, 0, 0], G[0, 0, 1], G[0, 1, 1] = px, py, -px
        G[1, 0, 0], G[1, 0, 1], G[1, 1, 1] = -py, px, py
        G[0, 1, 0], G[1, 1, 0] = G[0, 0, 1], G[1, 0, 1]
        return Christoffels("cartesian", G)
    if fam == "flat_plane":
        return Christoffels("cartesian", G)
    if fam == "rotational_plane" and p.kind == "cartesian":
        r = math.hypot(x1, x2)
        _, A, B = spec._pole_terms(np.asarray(r))
        A, B = float(A), float(B)
        e = np.array([x1, x2]) / r if r > 0 else np.array([1.0, 0.0])
        ep = np.array([-e[1], e[0]])
        G = (-A * np.einsum("k,i,j->kij", e, ep, ep)
             - B * (np.einsum("k,i,j->kij", ep, e, ep) + np.einsum("k,i,j->kij", ep, ep, e)))
        return Christoffels("cartesian", G)
    u = p.coords[0]
    f = float(spec.f(u))
    f1 = float(spec.f(u, 1))
    if f == 0.0:
        raise DomainError("warped chart is singular at the pole; use a cartesian point")
    G[0, 1, 1] = -f * f1
    G[1, 0, 1] = G[1, 1, 0] = f1 / f
    return Christoffels("polar" if fam == "rotational_plane" else "cylinder", G)


def metric_at(spec: SurfaceSpec, p: PointChart) -> np.ndarray:
    """2x2 metric matrix in the same chart as :func:`christoffels_at`."""
    x1, x2 = spec.to_chart(p)
    if spec.family == "rotational_plane" and p.kind == "polar":
        f = float(spec.f(p.coords[0]))
        return np.array([[1.0, 0.0], [0.0, f * f]])
    g11, g12, g22 = (float(v) for v in spec.metric(x1, x2))
    return np.array([[g11, g12], [g12, g22]])


# -- spec files -----------------------------------------------------------

_KEYS = ("family", "f", "phi", "radius", "label")


def _norm_family(name):
    key = name.strip().lower().replace("_", "").replace("-", "")
    for fam in FAMILIES:
        if fam.replace("_", "") == key:
            return fam
    return None


def parse_metric_spec(source: str) -> SurfaceSpec:
    """Parse a metric spec file (``key=value`` lines, ``#`` comments).

    Example::

        family=rotational_plane
        f=1.5*r - 0.5*tanh(r)
        label=conical
    """
    entries = {}
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise SpecSyntaxError("expected key=value", lineno, col)
        key, value = line.split("=", 1)
        kcol = len(key) - len(key.lstrip()) + 1
        key = key.strip()
        if key not in _KEYS:
            raise SpecSyntaxError(f"unknown key {key!r}", lineno, kcol)
        if key in entries:
            raise SpecSyntaxError(f"duplicate key {key!r}", lineno, kcol)
        vcol = len(raw.split("=", 1)[0]) + 2
        vcol += len(value) - len(value.lstrip())
        entries[key] = (value.strip(), lineno, vcol)
    if "family" not in entries:
        raise SpecSyntaxError("missing 'family'", max(1, len(source.splitlines())), 1)
    fam_text, fl, fc = entries["family"]
    fam = _norm_family(fam_text)
    if fam is None:
        raise SpecSyntaxError(f"unknown family {fam_text!r}", fl, fc)
    label = entries.get("label", ("", 0, 0))[0]
    needed = {"conformal_plane": "phi", "rotational_plane": "f",
              "rotational_cylinder": "f", "flat_cylinder": "radius"}.get(fam)
    for key in ("f", "phi", "radius"):
        if key in entries and key != needed:
            _, ln, col = entries[key]
            raise SpecSyntaxError(f"key {key!r} not allowed for {fam}", ln, max(1, col - len(key) - 1))
    if needed is not None and needed not in entries:
        if not (fam == "flat_cylinder"):
            raise SpecSyntaxError(f"{fam} requires {needed!r}", fl, 1)
    try:
        if fam == "flat_plane":
            return SurfaceSpec.flat_plane(label or "flat_plane")
        if fam == "flat_cylinder":
            text, ln, col = entries.get("radius", ("1", fl, 1))
            try:
                radius = float(text)
            except ValueError:
                raise SpecSyntaxError(f"radius must be a number, got {text!r}", ln, col) from None
            return SurfaceSpec.flat_cylinder(radius, label)
        text, ln, col = entries[needed]
        ctor = {"conformal_plane": SurfaceSpec.conformal_plane,
                "rotational_plane": SurfaceSpec.rotational_plane,
                "rotational_cylinder": SurfaceSpec.rotational_cylinder}[fam]
        try:
            return ctor(text, label)
        except ExprSyntaxError as exc:
            raise SpecSyntaxError(str(exc).rsplit(" (column", 1)[0], ln, col + exc.column - 1) from None
    except SpecSyntaxError:
        raise

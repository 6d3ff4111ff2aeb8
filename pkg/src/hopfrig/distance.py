"""Grid distance fields by first-order fast marching.

All supported surfaces have a diagonal metric in some chart, so the upwind
update solves ``w1 (d - a)^2 + w2 (d - b)^2 = 1`` with ``w_i = 1/(h_i^2 g_ii)``.

Grids:

* ``cartesian``: flat and conformal planes, chart ``(x, y)``;
* ``polar``: rotational planes, chart ``(r, theta)`` with the ``r = 0`` row
  collapsed to a single pole node;
* ``cylinder``: cylinders, chart ``(t, theta)``, periodic in ``theta``;
* ``cover``: cylinders, strip ``(t, theta~)`` of the universal cover with
  ``theta~`` unbounded; the deck translation is ``theta~ -> theta~ + 2 pi``.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize_scalar

from .geodesics import abs_tol
from .metric import TWO_PI, DomainError, PointChart, SurfaceSpec

SAFETY = 3.0


class WindowError(ValueError):
    """Window too small for the requested query; carries a suggested window."""

    def __init__(self, message, suggested=None):
        if suggested is not None:
            message = f"{message}; try window={tuple(round(float(v), 6) for v in suggested)}"
        super().__init__(message)
        self.suggested = suggested


@dataclass(frozen=True)
class DistanceField:
    """Immutable result of :func:`solve_distance`.

    ``d[i, j]`` is the distance at ``(u1[i], u2[j])``.  On polar grids the
    row ``i = 0`` is the pole (all entries equal).  ``reliable`` is False in
    the boundary band and wherever a path leaving the window could be
    shorter than the in-window distance.
    """

    spec: SurfaceSpec
    kind: str
    u1: np.ndarray
    u2: np.ndarray
    d: np.ndarray
    h: tuple
    source: str
    source_nodes: tuple
    band: tuple
    reliable: np.ndarray

    @property
    def axis_names(self):
        return {"cartesian": ("x", "y"), "polar": ("r", "theta")}.get(self.kind, ("t", "theta"))

    def value_at(self, a, b):
        """Bilinear interpolation in the grid chart."""
        u2, d = self.u2, self.d
        if self.kind in ("polar", "cylinder"):
            b = np.mod(b, TWO_PI)
            u2 = np.append(u2, TWO_PI)
            d = np.concatenate([d, d[:, :1]], axis=1)
        interp = RegularGridInterpolator((self.u1, u2), d, bounds_error=False, fill_value=np.nan)
        return interp(np.stack(np.broadcast_arrays(a, b), axis=-1))

    def eikonal_residual(self):
        """``| |grad d|_g - 1 |`` by centered differences (interior nodes)."""
        g11, g22 = _diag_metric(self.spec, self.kind, self.u1[:, None], self.u2[None, :])
        d1 = (self.d[2:, 1:-1] - self.d[:-2, 1:-1]) / (2 * self.h[0])
        d2 = (self.d[1:-1, 2:] - self.d[1:-1, :-2]) / (2 * self.h[1])
        grad = np.sqrt(d1 ** 2 / g11[1:-1, 1:-1] + d2 ** 2 / g22[1:-1, 1:-1])
        return np.abs(grad - 1.0)

    def to_csv(self, path):
        n1, n2 = self.axis_names
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([n1, n2, "distance"])
            for i, a in enumerate(self.u1):
                for j, b in enumerate(self.u2):
                    w.writerow([repr(float(a)), repr(float(b)), repr(float(self.d[i, j]))])


@dataclass(frozen=True)
class LoopLengthSample:
    """Shortest non-contractible loop at ``p``.

    ``witness`` is a polyline in the cover chart from ``p~`` to its deck
    translate; ``witness_length`` is its metric length.
    """

    p: PointChart
    length: float
    witness: np.ndarray
    witness_length: float
    method: str


def _diag_metric(spec, kind, a, b):
    a = np.asarray(a, dtype=float)
    if kind == "cartesian":
        g11, g12, g22 = spec.metric(a, b)
        return g11 + 0 * g22, g22 + 0 * g11
    f = spec.f(a)
    return np.ones_like(f * b), (f * f) + 0 * b


def grid_kind(spec, cover=False):
    if spec.family in ("flat_plane", "conformal_plane"):
        return "cartesian"
    if spec.family == "rotational_plane":
        return "polar"
    return "cover" if cover else "cylinder"


def _axes(kind, window, h):
    h1, h2 = (h, h) if np.isscalar(h) else h
    if not (h1 > 0 and h2 > 0):
        raise ValueError("grid spacing must be positive")
    lo1, hi1, lo2, hi2 = (float(v) for v in window)
    if kind == "polar":
        lo1 = 0.0
    n1 = int(round((hi1 - lo1) / h1)) + 1
    u1 = lo1 + h1 * np.arange(n1)
    if kind in ("polar", "cylinder"):
        n2 = max(int(round(TWO_PI / h2)), 8)
        u2 = TWO_PI * np.arange(n2) / n2
    else:
        n2 = int(round((hi2 - lo2) / h2)) + 1
        u2 = lo2 + h2 * np.arange(n2)
    if n1 < 3 or n2 < 3:
        raise WindowError("window holds fewer than three nodes per axis")
    return u1, u2


def _source_nodes(spec, kind, u1, u2, source):
    pts = [source] if isinstance(source, PointChart) else list(source)
    if not pts:
        raise ValueError("empty source")
    out = []
    for p in pts:
        if kind == "polar":
            x, y = spec.to_chart(p)
            a, b = math.hypot(x, y), math.atan2(y, x) % TWO_PI
        else:
            a, b = spec.to_chart(p)
        if kind == "cylinder":
            b %= TWO_PI
        i = int(round((a - u1[0]) / (u1[1] - u1[0])))
        dj = u2[1] - u2[0]
        j = int(round((b - u2[0]) / dj))
        if kind in ("polar", "cylinder"):
            j %= len(u2)
        if kind == "polar" and i == 0:
            j = 0
        if not (0 <= i < len(u1) and 0 <= j < len(u2)):
            raise WindowError(f"source {p.coords} lies outside the window")
        out.append((i, j))
    return sorted(set(out))


def _march(kind, c1, c2, src):
    """Fast marching on an (n1, n2) grid; c_i = h_i^2 g_ii per node."""
    n1, n2 = c1.shape
    periodic = kind in ("polar", "cylinder")
    polar = kind == "polar"
    N = n1 * n2
    d = [math.inf] * N
    done = [False] * N
    c1l = c1.ravel().tolist()
    c2l = c2.ravel().tolist()
    pole = list(range(n2)) if polar else []

    def nbrs(k):
        i, j = divmod(k, n2)
        ax1 = []
        if i > 0:
            ax1.append(0 if (polar and i == 1) else k - n2)
        if i < n1 - 1:
            ax1.append(k + n2)
        ax2 = []
        if periodic:
            ax2 = [i * n2 + (j - 1) % n2, i * n2 + (j + 1) % n2]
        else:
            if j > 0:
                ax2.append(k - 1)
            if j < n2 - 1:
                ax2.append(k + 1)
        return ax1, ax2

    heap = []
    for i, j in src:
        k = 0 if (polar and i == 0) else i * n2 + j
        d[k] = 0.0
        heapq.heappush(heap, (0.0, k))
    while heap:
        dk, k = heapq.heappop(heap)
        if done[k]:
            continue
        done[k] = True
        if polar and k == 0:
            cand = [n2 + j for j in range(n2)]
        else:
            a1, a2 = nbrs(k)
            cand = a1 + a2
        for m in cand:
            if done[m] or (polar and 0 < m < n2):
                continue
            if polar and m == 0:
                new = min(d[q] + math.sqrt(c1l[q]) for q in range(n2, 2 * n2) if done[q])
            else:
                ax1, ax2 = nbrs(m)
                a = min((d[q] for q in ax1 if done[q]), default=math.inf)
                b = min((d[q] for q in ax2 if done[q]), default=math.inf)
                s1, s2 = c1l[m], c2l[m]
                new = min(a + math.sqrt(s1), b + math.sqrt(s2))
                if a < math.inf and b < math.inf:
                    w1, w2 = 1.0 / s1, 1.0 / s2
                    # w1 (x - a)^2 + w2 (x - b)^2 = 1
                    W = w1 + w2
                    B = w1 * a + w2 * b
                    disc = B * B - W * (w1 * a * a + w2 * b * b - 1.0)
                    if disc >= 0.0:
                        x = (B + math.sqrt(disc)) / W
                        if x >= max(a, b):
                            new = min(new, x)
            if new < d[m]:
                d[m] = new
                heapq.heappush(heap, (new, m))
    out = np.array(d).reshape(n1, n2)
    if polar:
        out[0, :] = out[0, 0]
    return out


def solve_distance(spec: SurfaceSpec, window, h, source, cover=False, safety=SAFETY):
    """Distance from ``source`` (a point or a list of points) on a grid.

    ``window = (lo1, hi1, lo2, hi2)`` in the grid chart (see module doc).
    For polar and periodic grids the ``theta`` bounds are ignored and
    ``lo1`` of a polar grid is forced to 0.  ``h`` is a spacing or a pair
    ``(h1, h2)``.
    """
    kind = grid_kind(spec, cover)
    if kind == "polar" and window[1] <= 0:
        raise WindowError("polar window needs a positive radius")
    u1, u2 = _axes(kind, window, h)
    h1, h2 = u1[1] - u1[0], u2[1] - u2[0]
    A, B = np.meshgrid(u1, u2, indexing="ij")
    g11, g22 = _diag_metric(spec, kind, A, B)
    if not (np.all(np.isfinite(g11)) and np.all(np.isfinite(g22))):
        raise DomainError("metric not finite on the window")
    src = _source_nodes(spec, kind, u1, u2, source)
    # per-axis band width in chart units: safety * spacing * speed contrast
    band = (safety * h1 * _contrast(g11), safety * h2 * _contrast(g22))
    edge = _edge_mask(kind, u1, u2, band)
    for i, j in src:
        if edge[i, j]:
            raise WindowError("source touches the boundary band of the window",
                              _grow(kind, window, 2 * max(band)))
    d = _march(kind, h1 * h1 * g11, h2 * h2 * g22, src)
    d_edge = d[edge].min() if edge.any() else math.inf
    reliable = ~edge & (d <= d_edge)
    desc = "; ".join(f"({u1[i]:.6g}, {u2[j]:.6g})" for i, j in src)
    return DistanceField(spec, kind, u1, u2, d, (h1, h2), desc, tuple(src), band, reliable)


def _contrast(g):
    g = g[g > 0]
    return float(np.sqrt(g.max() / g.min()))


def _edge_mask(kind, u1, u2, band):
    A, B = np.meshgrid(u1, u2, indexing="ij")
    m = np.zeros(A.shape, dtype=bool)
    if kind != "polar":
        m |= (A - u1[0] < band[0])
    m |= (u1[-1] - A < band[0])
    if kind in ("cartesian", "cover"):
        m |= (B - u2[0] < band[1]) | (u2[-1] - B < band[1])
    return m


def _grow(kind, window, by):
    lo1, hi1, lo2, hi2 = window
    if kind in ("polar", "cylinder"):
        return (lo1 - (by if kind != "polar" else 0), hi1 + by, lo2, hi2)
    return (lo1 - by, hi1 + by, lo2 - by, hi2 + by)


# -- loops -------------------------------------------------------------------


def _cover_window(spec, p, h, margin):
    t0, th0 = p.coords
    return (t0 - margin, t0 + margin, th0 - margin, th0 + TWO_PI + margin)


def loop_length(spec: SurfaceSpec, p: PointChart, window=None, h=0.02, margin=1.5):
    """Shortest non-contractible loop at ``p`` as a cover distance by fast marching.

    The cover grid is aligned so that ``p~`` and its deck translate are
    nodes.  Raises :class:`WindowError` when the witness enters the
    unreliable band.
    """
    if not spec.is_cylinder:
        raise DomainError("loop_length needs a cylinder")
    t0, th0 = p.coords
    n_th = max(int(round(TWO_PI / h)), 16)
    ht = TWO_PI / n_th
    if window is None:
        window = _cover_window(spec, p, h, margin)
    lo1, hi1, lo2, hi2 = window
    # snap the theta axis so that th0 and th0 + 2 pi are nodes
    k_lo = math.ceil((th0 - lo2) / ht)
    k_hi = math.ceil((hi2 - th0 - TWO_PI) / ht)
    win = (lo1, hi1, th0 - k_lo * ht, th0 + TWO_PI + k_hi * ht)
    field = solve_distance(spec, win, (h, ht), p, cover=True)
    i0 = int(round((t0 - field.u1[0]) / field.h[0]))
    j1 = k_lo + n_th
    length = float(field.d[i0, j1])
    circle = TWO_PI * float(spec.f(t0))
    if length > circle * (1 + 1e-12) + 1e-12:
        raise AssertionError(f"loop length {length} exceeds the coordinate circle {circle}")
    witness = _descend(field, (field.u1[i0], field.u2[j1]), (field.u1[i0], field.u2[k_lo]))
    nodes = _nearest_nodes(field, witness)
    edge = _edge_mask("cover", field.u1, field.u2, field.band)
    # a path leaving the window has length >= d(e) + d(T p~, e) for an edge
    # node e; the reflection theta~ -> 2 th0 + 2 pi - theta~ gives the second term
    if k_lo == k_hi:
        exit_bound = float(np.min((field.d + field.d[:, ::-1])[edge]))
    else:
        exit_bound = 2.0 * float(np.min(field.d[edge]))
    if np.any(edge[nodes[:, 0], nodes[:, 1]]) or length > exit_bound:
        raise WindowError("shortest path leaves the reliable band", _grow("cover", win, margin))
    wl = polyline_length(spec, witness)
    return LoopLengthSample(p, length, witness[::-1].copy(), wl, "fast-marching")


def polyline_length(spec, pts):
    """Metric length of a chart polyline (midpoint rule per segment)."""
    pts = np.asarray(pts, dtype=float)
    mid = 0.5 * (pts[1:] + pts[:-1])
    dx = np.diff(pts, axis=0)
    g11, g12, g22 = spec.metric(mid[:, 0], mid[:, 1])
    return float(np.sum(np.sqrt(g11 * dx[:, 0] ** 2 + 2 * g12 * dx[:, 0] * dx[:, 1]
                                + g22 * dx[:, 1] ** 2)))


def _nearest_nodes(field, pts):
    i = np.clip(np.rint((pts[:, 0] - field.u1[0]) / field.h[0]).astype(int), 0, len(field.u1) - 1)
    j = np.clip(np.rint((pts[:, 1] - field.u2[0]) / field.h[1]).astype(int), 0, len(field.u2) - 1)
    return np.stack([i, j], axis=1)


def _descend(field, start, goal, max_steps=200000):
    """Polyline from ``start`` down the distance field to the source.

    Follows the metric gradient flow ``x' = -g^{-1} grad d`` with bilinear
    gradients; where the gradient is ambiguous (near the cut locus or the
    source) it falls back to steepest discrete descent over the 8 neighbors.
    """
    h1, h2 = field.h
    d = field.d
    g1, g2 = np.gradient(d, h1, h2)
    axes = (field.u1, field.u2)
    grad1 = RegularGridInterpolator(axes, g1, bounds_error=False, fill_value=None)
    grad2 = RegularGridInterpolator(axes, g2, bounds_error=False, fill_value=None)
    dval = RegularGridInterpolator(axes, d, bounds_error=False, fill_value=None)
    x = np.array(start, dtype=float)
    goal = np.array(goal, dtype=float)
    path = [x.copy()]
    step = 0.5 * min(h1, h2)
    cur = float(dval(x[None])[0])
    for _ in range(max_steps):
        if abs(x[0] - goal[0]) <= 1.5 * h1 and abs(x[1] - goal[1]) <= 1.5 * h2:
            break
        a, b = float(grad1(x[None])[0]), float(grad2(x[None])[0])
        G11, G22 = _diag_metric(field.spec, field.kind, x[0], x[1])
        v = np.array([a / float(G11), b / float(G22)])
        nv = math.hypot(v[0] / h1, v[1] / h2)
        moved = False
        if nv > 1e-12:
            y = x - step * v / (nv * min(h1, h2))
            new = float(dval(y[None])[0])
            if new < cur:
                x, cur, moved = y, new, True
        if not moved:
            i, j = _nearest_nodes(field, x[None])[0]
            best = None
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    ii, jj = i + di, j + dj
                    if (di or dj) and 0 <= ii < d.shape[0] and 0 <= jj < d.shape[1]:
                        if best is None or d[ii, jj] < d[best]:
                            best = (ii, jj)
            if best is None or d[best] >= cur:
                break
            x = np.array([field.u1[best[0]], field.u2[best[1]]])
            cur = float(d[best])
        path.append(x.copy())
    path.append(goal)
    return np.array(path)


# -- loops by shooting ---------------------------------------------------------


def _half_loop_time(spec, t0, alpha, s_cap, tol):
    """First parameter at which the geodesic from (t0, 0) at frame angle
    ``alpha`` reaches ``theta~ = pi``; inf if it does not before ``s_cap``."""
    f0 = float(spec.f(t0))
    y0 = [t0, 0.0, math.cos(alpha), math.sin(alpha) / f0]

    def rhs(s, y):
        a1, a2 = spec.accel(y[0], y[1], y[2], y[3])
        return [y[2], y[3], float(a1), float(a2)]

    def hit(s, y):
        return y[1] - math.pi

    hit.terminal = True
    hit.direction = 1
    with np.errstate(all="ignore"):
        sol = solve_ivp(rhs, (0.0, s_cap), y0, method="DOP853", rtol=tol,
                        atol=abs_tol(spec, np.array(y0), tol), events=hit)
    if sol.t_events[0].size:
        return float(sol.t_events[0][0])
    return math.inf


def grazing_angles(smallest=1e-16, n=31):
    """Angles accumulating at 0 and pi, where near-axial geodesics live."""
    g = np.geomspace(smallest, 0.05, n)
    return np.concatenate([g, math.pi - g])


def _competitor_half_loop(spec, t0, reach=30.0, n=6001):
    """Half the length of the best loop made of an axial detour and a circle."""
    a = np.linspace(-reach, reach, n)
    return float(np.min(np.abs(a) + math.pi * spec.f(t0 + a)))


def loop_length_shooting(spec: SurfaceSpec, p: PointChart, n_scan=64, tol=1e-11):
    """Shortest non-contractible loop on a rotational cylinder by shooting.

    The reflection ``theta~ -> 2 pi - theta~`` of the cover swaps ``p~``
    and its deck translate, so any path between them crosses the line
    ``theta~ = pi`` and the loop length is twice the distance from ``p~``
    to that line.  That distance is the minimum over initial angles of the
    first hitting time of the line.
    """
    if not spec.is_cylinder:
        raise DomainError("loop_length_shooting needs a cylinder")
    t0 = float(p.coords[0])
    # generous cap so the scan brackets the optimum; the competitor only bounds it
    s_cap = 1.5 * _competitor_half_loop(spec, t0) + 1e-12
    alphas = np.union1d(math.pi * (np.arange(n_scan) + 0.5) / n_scan, grazing_angles())
    times = np.array([_half_loop_time(spec, t0, a, s_cap, tol) for a in alphas])
    k = int(np.argmin(times))
    if not math.isfinite(times[k]):
        raise AssertionError("no geodesic reached the symmetry line")
    lo = alphas[k - 1] if k > 0 else 0.5 * alphas[0]
    hi = alphas[k + 1] if k < len(alphas) - 1 else 0.5 * (alphas[-1] + math.pi)
    # optimise in log-distance from the nearer axis so grazing optima resolve
    flip = hi > math.pi / 2 and lo > math.pi / 2
    to_a = (lambda x: math.pi - math.exp(x)) if flip else (lambda x: math.exp(x))
    bounds = sorted([math.log(math.pi - lo), math.log(math.pi - hi)] if flip
                    else [math.log(lo), math.log(hi)])
    res = minimize_scalar(lambda x: _half_loop_time(spec, t0, to_a(x), s_cap, tol), bounds=bounds,
                          method="bounded", options={"xatol": 1e-12})
    best_a, best_s = (to_a(res.x), res.fun) if res.fun <= times[k] else (alphas[k], times[k])
    if not math.isfinite(best_s):
        raise AssertionError("no geodesic reached the symmetry line")
    half = _half_path(spec, t0, best_a, best_s, tol)
    mirror = np.column_stack([half[::-1, 0], TWO_PI - half[::-1, 1]])
    witness = np.vstack([half, mirror[1:]])
    witness[:, 1] += p.coords[1]
    length = 2.0 * best_s
    return LoopLengthSample(p, length, witness, polyline_length(spec, witness), "shooting")


def _half_path(spec, t0, alpha, s_end, tol, n=257):
    f0 = float(spec.f(t0))

    def rhs(s, y):
        a1, a2 = spec.accel(y[0], y[1], y[2], y[3])
        return [y[2], y[3], float(a1), float(a2)]

    y0 = [t0, 0.0, math.cos(alpha), math.sin(alpha) / f0]
    sol = solve_ivp(rhs, (0.0, s_end), y0,
                    method="DOP853", rtol=tol, atol=abs_tol(spec, np.array(y0), tol),
                    t_eval=np.linspace(0, s_end, n))
    return sol.y[:2].T

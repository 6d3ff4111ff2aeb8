"""Quadrature, differentiation and tail-window helpers shared by the modules."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

THREADS_ENV = "HOPFRIG_THREADS"


def cumsimpson(y, x):
    """Cumulative Simpson integral with value 0 at ``x[0]``."""
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        return np.concatenate([[0.0], np.cumsum(0.5 * np.diff(x) * (y[1:] + y[:-1]))])
    return cumulative_simpson(y, x=x, initial=0.0)


def cumhermite(y, dy, x):
    """Cumulative integral using values and derivatives (corrected trapezoid)."""
    h = np.diff(x)
    cell = 0.5 * h * (y[1:] + y[:-1]) + h * h / 12.0 * (dy[:-1] - dy[1:])
    return np.concatenate([[0.0], np.cumsum(cell)])


def deriv(y, x):
    """Fourth-order finite-difference derivative on a uniform grid."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    h = x[1] - x[0]
    if n < 5:
        return np.gradient(y, x, edge_order=2)
    d = np.empty(n)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * h)
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h)
    d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12 * h)
    d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * h)
    return d


def gauss_legendre(a, b, n):
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    t, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (t + 1.0), half * w


@dataclass(frozen=True)
class TailEstimate:
    """liminf of a sampled ratio, operationalized on a tail window.

    ``trend`` is ``"decaying"`` when the log-log slope over the window is at
    most ``-slope_tol``, ``"diverging"`` when it is at least ``slope_tol``,
    else ``"bounded"``.  ``value`` is the window minimum for bounded data, 0
    for decaying data and ``inf`` for diverging data; ``window_min`` is
    always the plain minimum.
    """

    value: float
    window_min: float
    window: tuple
    slope: float
    trend: str
    monotone: str


def tail_liminf(r, ratio, frac=0.5, slope_tol=0.5):
    r = np.asarray(r, dtype=float)
    ratio = np.asarray(ratio, dtype=float)
    mask = (r >= frac * r[-1]) & (r > 0)
    rr, vv = r[mask], ratio[mask]
    if len(rr) < 2:
        rr, vv = r[-2:], ratio[-2:]
    wmin = float(np.min(vv))
    pos = vv > 0
    if pos.sum() >= 2 and rr[pos][-1] > rr[pos][0]:
        slope = float(np.polyfit(np.log(rr[pos]), np.log(vv[pos]), 1)[0])
    else:
        slope = 0.0
    dv = np.diff(vv)
    scale = max(np.max(np.abs(vv)), 1e-300)
    if np.all(dv <= 1e-12 * scale):
        mono = "non-increasing"
    elif np.all(dv >= -1e-12 * scale):
        mono = "non-decreasing"
    else:
        mono = "oscillating"
    if np.all(np.abs(vv) <= 1e-300):
        trend, value = "decaying", 0.0
    elif slope <= -slope_tol:
        trend, value = "decaying", 0.0
    elif slope >= slope_tol:
        trend, value = "diverging", float("inf")
    else:
        trend, value = "bounded", wmin
    return TailEstimate(value, wmin, (float(rr[0]), float(rr[-1])), slope, trend, mono)


def chunk_map(fn, n, chunk):
    """Apply ``fn(start, stop)`` over fixed chunks of ``range(n)``.

    Chunk boundaries do not depend on the worker count, so results are
    identical for any value of ``HOPFRIG_THREADS``.
    """
    bounds = [(i, min(i + chunk, n)) for i in range(0, n, chunk)]
    workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    if workers <= 1 or len(bounds) == 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))

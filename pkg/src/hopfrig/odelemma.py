"""Sharp estimate for the differential inequality ``F <= a R + b sqrt(F'A') + c``.

Sampled functions are read as piecewise-linear interpolants of their grid
values.  Derivatives are then piecewise constant, and every integral below
is evaluated exactly cell by cell (up to round-off), so the chain of
inequalities is checked on the surrogate without quadrature error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import TailEstimate, tail_liminf

ROUNDOFF = 1e-12


class LemmaPreconditionError(ValueError):
    """Hypothesis or differential inequality fails; no verdict is issued."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class MonotonicityError(ValueError):
    pass


@dataclass(frozen=True)
class OdeLemmaData:
    """Samples of ``A``, ``F`` and ``R`` on a common grid, and the constants.

    ``dF`` and ``dA`` optionally carry derivative samples computed by the
    producer (for instance from coarea forms); when absent the slopes of the
    interpolants are used.
    """

    r: np.ndarray
    A: np.ndarray
    F: np.ndarray
    R: np.ndarray
    a: float
    b: float
    c: float
    dF: np.ndarray | None = None
    dA: np.ndarray | None = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or len(r) < 2 or np.any(np.diff(r) <= 0) or r[0] < 0:
            raise ValueError("grid must be increasing, nonnegative and hold two or more nodes")
        for name in ("A", "F", "R"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != r.shape:
                raise ValueError(f"{name} does not match the grid")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "r", r)
        if not (self.a > 0 and self.b > 0):
            raise ValueError("a and b must be positive")
        for name in ("A", "F"):
            v = getattr(self, name)
            scale = max(1.0, float(np.max(np.abs(v))))
            if np.any(v < -ROUNDOFF * scale) or np.any(np.diff(v) < -ROUNDOFF * scale):
                raise MonotonicityError(f"{name} must be nonnegative and non-decreasing")


@dataclass(frozen=True)
class IteratedIntegral:
    value: float
    single_form: float
    double_form: float

    @property
    def defect(self):
        return abs(self.single_form - self.double_form)


@dataclass
class LemmaVerdict:
    sup_F: float
    liminf: TailEstimate
    bound: float
    margin: float
    hypothesis_defect: float
    inequality_violation: float
    ineq_R_margin: float
    passed: bool
    a: float
    b: float
    c: float
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {
            "sup_F": self.sup_F,
            "liminf_A_over_r2": self.liminf.value,
            "liminf_window": list(self.liminf.window),
            "liminf_trend": self.liminf.trend,
            "bound": self.bound,
            "margin": self.margin,
            "hypothesis_defect": self.hypothesis_defect,
            "inequality_violation": self.inequality_violation,
            "ineq_R_margin": self.ineq_R_margin,
            "passed": self.passed,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "notes": list(self.notes),
        }


# -- piecewise-linear calculus ------------------------------------------------


def _restrict(x, y, q, r):
    """Nodes of the interpolant of (x, y) on [q, r], with q and r inserted."""
    if not q < r:
        raise ValueError("need q < r")
    if q < x[0] - 1e-15 or r > x[-1] + 1e-15:
        raise ValueError("[q, r] must lie inside the grid")
    inner = (x > q) & (x < r)
    xs = np.concatenate([[q], x[inner], [r]])
    ys = np.interp(xs, x, y)
    return xs, ys


def _double_pl(xs, ys):
    """int_q^r int_q^rho f dt drho for f linear on each cell [xs_k, xs_k+1]."""
    h = np.diff(xs)
    cell = 0.5 * h * (ys[1:] + ys[:-1])
    G = np.concatenate([[0.0], np.cumsum(cell)])
    # G is quadratic on each cell; Simpson is exact for it
    Gmid = G[:-1] + h * (3 * ys[:-1] + ys[1:]) / 8.0
    return float(np.sum(h / 6.0 * (G[:-1] + 4 * Gmid + G[1:])))


def _weighted_pl(xs, ys, r):
    """int_q^r (r - rho) f(rho) drho, exact for piecewise-linear f."""
    h = np.diff(xs)
    a, b = xs[:-1], xs[1:]
    mid = 0.5 * (a + b)
    fm = 0.5 * (ys[:-1] + ys[1:])
    # the integrand is quadratic per cell
    return float(np.sum(h / 6.0 * ((r - a) * ys[:-1] + 4 * (r - mid) * fm + (r - b) * ys[1:])))


def double_integral(r_grid, f, q, r):
    """Both sides of the integration-by-parts identity for the interpolant of f."""
    xs, ys = _restrict(np.asarray(r_grid, float), np.asarray(f, float), q, r)
    return _double_pl(xs, ys), _weighted_pl(xs, ys, r)


def iterated_integral(r_grid, F, q, r, tol=1e-10) -> IteratedIntegral:
    """``I(q, r)`` of the interpolant of ``F`` by both forms; they must agree."""
    Fq = float(np.interp(q, r_grid, F))
    dbl, single = double_integral(r_grid, np.asarray(F, float) - Fq, q, r)
    scale = max(1.0, abs(dbl), abs(single))
    if abs(dbl - single) > tol * scale:
        raise ArithmeticError(f"quadrature forms disagree: {dbl!r} vs {single!r}")
    return IteratedIntegral(single, single, dbl)


def _slopes(xs, ys, name):
    s = np.diff(ys) / np.diff(xs)
    scale = max(1.0, float(np.max(np.abs(ys))))
    if np.any(s * np.diff(xs) < -ROUNDOFF * scale):
        raise MonotonicityError(f"{name} decreases on the grid")
    return np.maximum(s, 0.0)


def check_ineq_R(r_grid, F, A, q, r):
    """``rhs - lhs`` of the Cauchy-Schwarz step.

    lhs is the double integral of ``sqrt(F'A')`` over ``q <= t <= rho <= r``,
    rhs is ``sqrt(2 I(q, r) A(r))``.  Returns ``(margin, lhs, rhs)``.
    """
    r_grid = np.asarray(r_grid, float)
    xs, Fs = _restrict(r_grid, np.asarray(F, float), q, r)
    _, As = _restrict(r_grid, np.asarray(A, float), q, r)
    s = np.sqrt(_slopes(xs, Fs, "F") * _slopes(xs, As, "A"))
    a, b = xs[:-1], xs[1:]
    lhs = float(np.sum(s * 0.5 * ((r - a) ** 2 - (r - b) ** 2)))
    I = iterated_integral(r_grid, F, q, r).value
    rhs = math.sqrt(max(2.0 * I, 0.0) * As[-1])
    return rhs - lhs, lhs, rhs


def _from_zero(r_grid, R):
    r_grid = np.asarray(r_grid, float)
    R = np.asarray(R, float)
    if r_grid[0] > 0:
        # R is taken constant on [0, r_1]
        return np.concatenate([[0.0], r_grid]), np.concatenate([[R[0]], R])
    return r_grid, R


def double_from_zero(r_grid, R):
    """``int_0^r int_0^rho R`` at every grid node."""
    x, y = _from_zero(r_grid, R)
    h = np.diff(x)
    G = np.concatenate([[0.0], np.cumsum(0.5 * h * (y[1:] + y[:-1]))])
    Gmid = G[:-1] + h * (3 * y[:-1] + y[1:]) / 8.0
    out = np.concatenate([[0.0], np.cumsum(h / 6.0 * (G[:-1] + 4 * Gmid + G[1:]))])
    return out[-len(r_grid):]


def check_hypothesis(r_grid, A, R):
    """max over the grid of ``int_0^r int_0^rho R - A(r)``."""
    return float(np.max(double_from_zero(r_grid, R) - np.asarray(A, float)))


def inequality_violation(data: OdeLemmaData):
    """max of ``F - (a R + b sqrt(F'A') + c)``.

    With producer derivatives it is evaluated at the nodes; otherwise at
    cell midpoints of the surrogate, where its derivatives exist.
    """
    if data.dF is not None and data.dA is not None:
        F, R = data.F, data.R
        prod = np.maximum(np.asarray(data.dF) * np.asarray(data.dA), 0.0)
    else:
        F = 0.5 * (data.F[1:] + data.F[:-1])
        R = 0.5 * (data.R[1:] + data.R[:-1])
        h = np.diff(data.r)
        prod = np.maximum(np.diff(data.F) / h, 0.0) * np.maximum(np.diff(data.A) / h, 0.0)
    rhs = data.a * R + data.b * np.sqrt(prod) + data.c
    return float(np.max(F - rhs))


def sharp_bound(data: OdeLemmaData, tail=0.5, tol=1e-9, q=None) -> LemmaVerdict:
    """Check the preconditions and compare ``sup F`` with ``2 a liminf A/r^2 + c``."""
    scale = max(1.0, float(np.max(np.abs(data.A))))
    hyp = check_hypothesis(data.r, data.A, data.R)
    ineq = inequality_violation(data)
    ineq_scale = max(1.0, abs(data.c), float(np.max(np.abs(data.F))))
    report = {"hypothesis_defect": hyp, "inequality_violation": ineq}
    if hyp > tol * scale:
        raise LemmaPreconditionError(f"hypothesis fails: defect {hyp:.3e}", report)
    if ineq > tol * ineq_scale:
        raise LemmaPreconditionError(f"differential inequality fails: violation {ineq:.3e}", report)
    r = data.r
    pos = r > 0
    est = tail_liminf(r[pos], data.A[pos] / r[pos] ** 2, frac=tail)
    bound = 2.0 * data.a * est.value + data.c
    sup_F = float(np.max(data.F))
    q = r[pos][0] if q is None else q
    mR = check_ineq_R(r, data.F, data.A, q, r[-1])[0] if q < r[-1] else 0.0
    margin = bound - sup_F
    passed = margin >= -tol * max(1.0, abs(sup_F), abs(data.c))
    notes = [f"liminf of A/r^2 from the tail window [{est.window[0]:.6g}, {est.window[1]:.6g}]"
             f" ({est.trend}, {est.monotone})"]
    if est.trend == "diverging":
        notes.append("A/r^2 grows on the tail window; bound reported as infinite")
    return LemmaVerdict(sup_F, est, bound, margin, hyp, ineq, mR, bool(passed), data.a, data.b,
                        data.c, notes)


def read_lemma_csv(path, a, b, c) -> OdeLemmaData:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    cols = {k: np.array([float(row[k]) for row in rows]) for k in ("r", "A", "F", "R")}
    return OdeLemmaData(cols["r"], cols["A"], cols["F"], cols["R"], a, b, c)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopfrig.geodesics import UnitTangent
from hopfrig.hopf import (
    Ball,
    Band,
    ConjugatePointError,
    aitken,
    curvature_integral,
    hopf_balance,
    region_area,
    riccati_batch,
    riccati_residual,
    sample_liouville,
    stable_riccati,
)
from hopfrig.metric import PointChart, SurfaceSpec

HYP = SurfaceSpec.rotational_plane("sinh(r)")
CONICAL = SurfaceSpec.rotational_plane("1.5*r - 0.5*tanh(r)")


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 10), st.floats(0.2, 0.8))
def test_aitken_exact_for_geometric_tails(limit, amp, q):
    u = np.array([limit + amp * q ** k for k in range(4)])
    U, err = aitken(u)
    assert U == pytest.approx(limit, abs=1e-9 * max(1.0, amp))
    assert err <= 1e-8 * max(1.0, amp)


def test_aitken_short_ladders():
    U, err = aitken(np.array([1.0, 2.0]))
    assert U == 2.0 and err == 1.0
    U, err = aitken(np.array([3.0]))
    assert U == 3.0 and math.isinf(err)


def test_flat_stable_solution_vanishes():
    s = stable_riccati(SurfaceSpec.flat_plane(), UnitTangent(PointChart.cartesian(0.2, 0.1), 0.9))
    assert abs(s.U) < 1e-3
    assert s.status == "converged"


def test_hyperbolic_stable_solution_is_minus_one():
    rng = np.random.default_rng(7)
    pts = rng.uniform(-1, 1, size=(100, 2))
    ang = rng.uniform(0, 2 * math.pi, 100)
    v1, v2 = HYP.tangent(pts[:, 0], pts[:, 1], ang)
    b = riccati_batch(HYP, pts, np.stack([v1, v2], 1), ladder=(2, 4, 8, 16))
    assert np.max(np.abs(b.U + 1.0)) < 1e-3
    assert b.converged.all()
    assert b.monotone.all()


def test_rungs_increase_for_nonpositive_curvature():
    s = stable_riccati(CONICAL, UnitTangent(PointChart.cartesian(1.0, 0.5), 2.0))
    assert s.monotone
    assert all(b >= a - 1e-12 for a, b in zip(s.u, s.u[1:]))


def test_riccati_residual_small():
    v = UnitTangent(PointChart.cartesian(0.4, -0.3), 0.3)
    s = stable_riccati(HYP, v, ladder=(2, 4, 8, 16))
    assert riccati_residual(HYP, v, 2.0, s.T, sample=s) <= 1e-6


def test_conjugate_points_are_rejected():
    sp = SurfaceSpec.rotational_plane("sin(r)", check=False)
    with pytest.raises(ConjugatePointError):
        stable_riccati(sp, UnitTangent(PointChart.cartesian(math.pi / 2, 0.0), math.pi / 2))


def test_ladder_validation():
    with pytest.raises(ValueError):
        stable_riccati(HYP, UnitTangent(PointChart.cartesian(0, 0), 0.0), ladder=(4, 2))


def test_region_area_and_curvature_integral():
    Q = Ball(PointChart.cartesian(0.0, 0.0), 2.0)
    assert region_area(HYP, Q) == pytest.approx(2 * math.pi * (math.cosh(2) - 1), rel=1e-12)
    assert curvature_integral(HYP, Q) == pytest.approx(-2 * math.pi * (math.cosh(2) - 1), rel=1e-10)
    band = Band(-1.0, 2.0)
    cyl = SurfaceSpec.rotational_cylinder("exp(-t)")
    assert region_area(cyl, band) == pytest.approx(2 * math.pi * (math.e - math.exp(-2)), rel=1e-12)


def test_sampling_is_reproducible_and_seed_sensitive():
    Q = Ball(PointChart.cartesian(0.0, 0.0), 1.0)
    a = sample_liouville(HYP, Q, 5000, seed=3)
    b = sample_liouville(HYP, Q, 5000, seed=3)
    c = sample_liouville(HYP, Q, 5000, seed=4)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.angle, b.angle)
    assert not np.array_equal(a.X, c.X)
    # prefix stability: chunked streams do not depend on the total count
    d = sample_liouville(HYP, Q, 9000, seed=3)
    assert np.array_equal(d.X[:4096], a.X[:4096])


def test_sampled_area_fraction():
    Q = Ball(PointChart.cartesian(0.0, 0.0), 2.0)
    s = sample_liouville(HYP, Q, 20000, seed=1)
    r = np.hypot(s.X[:, 0], s.X[:, 1])
    frac = np.mean(r <= 1.0)
    expect = (math.cosh(1) - 1) / (math.cosh(2) - 1)
    assert abs(frac - expect) < 4 * math.sqrt(expect * (1 - expect) / 20000)
    assert np.all(r <= 2.0)


def test_hopf_balance_small_run():
    Q = Ball(PointChart.cartesian(0.0, 0.0), 1.0)
    rep = hopf_balance(HYP, Q, 2000, ladder=(2, 4, 8, 16), seed=5)
    assert rep.verdict == "pass"
    assert abs(rep.discrepancy) <= 3 * (rep.stderr + rep.budget)
    assert '"verdict": "pass"' in rep.to_json()


def test_flat_balance_is_zero():
    rep = hopf_balance(SurfaceSpec.flat_plane(), Ball(PointChart.cartesian(0, 0), 1.0), 500, seed=0)
    assert abs(rep.discrepancy) < 1e-6
    assert rep.verdict == "pass"

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopfrig.geodesics import (
    UnitTangent,
    first_conjugate,
    jacobi_along,
    radial_chart,
    reverse,
    shoot_geodesic,
    wronskian,
)
from hopfrig.metric import PointChart, SurfaceSpec

HYP = SurfaceSpec.rotational_plane("sinh(r)")
SPHERE = SurfaceSpec.rotational_plane("sin(r)", check=False)
CONFORMAL = SurfaceSpec.conformal_plane("0.2*log(cosh(x)) + 0.1*log(cosh(y))")


def sphere_equator():
    return UnitTangent(PointChart.cartesian(math.pi / 2, 0.0), math.pi / 2)


def test_flat_geodesic_is_a_line():
    sp = SurfaceSpec.flat_plane()
    path = shoot_geodesic(sp, UnitTangent(PointChart.cartesian(1.0, 2.0), 0.3), 5.0)
    expect = np.array([1.0, 2.0]) + path.s[:, None] * [math.cos(0.3), math.sin(0.3)]
    np.testing.assert_allclose(path.X, expect, atol=1e-12)
    assert path.speed_drift < 1e-12


def test_hyperbolic_radial_jacobi_is_sinh():
    path = shoot_geodesic(HYP, UnitTangent(PointChart.cartesian(0.0, 0.0), 0.7), 3.0)
    rec = jacobi_along(path, 0.0, 1.0)
    np.testing.assert_allclose(rec.lam[1:], np.sinh(path.s[1:]), rtol=1e-8)


def test_wronskian_constant():
    path = shoot_geodesic(CONFORMAL, UnitTangent(PointChart.cartesian(0.3, -0.2), 1.1), 4.0)
    a = jacobi_along(path, 0.0, 1.0)
    b = jacobi_along(path, 1.0, 0.0)
    w = wronskian(a, b)
    assert np.max(np.abs(w - w[0])) < 1e-8


def test_time_reversal_returns_to_start():
    path = shoot_geodesic(CONFORMAL, UnitTangent(PointChart.cartesian(0.3, -0.2), 2.0), 3.0)
    back = reverse(path)
    np.testing.assert_allclose(back.X[-1], path.X[0], atol=1e-9)


def test_clairaut_constant_on_rotational_plane():
    path = shoot_geodesic(HYP, UnitTangent(PointChart.cartesian(0.8, 0.1), 1.2), 3.0)
    x, y = path.X.T
    vx, vy = path.V.T
    r = np.hypot(x, y)
    # angular momentum f(r)^2 dphi/ds with dphi/ds = (x vy - y vx) / r^2
    c = np.sinh(r) ** 2 * (x * vy - y * vx) / r ** 2
    assert np.max(np.abs(c - c[0])) < 1e-8


def test_conjugate_point_on_unit_sphere():
    path = shoot_geodesic(SPHERE, sphere_equator(), 4.0)
    assert first_conjugate(path) == pytest.approx(math.pi, abs=1e-8)


@pytest.mark.parametrize("spec", [SurfaceSpec.flat_plane(), HYP, CONFORMAL])
def test_no_conjugate_points_for_nonpositive_curvature(spec):
    path = shoot_geodesic(spec, UnitTangent(PointChart.cartesian(0.1, 0.2), 0.4), 8.0)
    assert first_conjugate(path) is None


def test_radial_chart_flags_sphere_and_clean_on_flat():
    ch = radial_chart(SPHERE, PointChart.cartesian(math.pi / 2, 0.0), 4.0, n_theta=16, dr=0.01)
    assert ch.truncated
    _, r = ch.first_flag()
    assert abs(r - math.pi) < 0.02
    flat = radial_chart(SurfaceSpec.flat_plane(), PointChart.cartesian(0.0, 0.0), 3.0, n_theta=16)
    assert not flat.truncated
    np.testing.assert_allclose(flat.boundary_length()[1:], 2 * math.pi * flat.r[1:], rtol=1e-12)


def test_radial_chart_csv(tmp_path):
    ch = radial_chart(HYP, PointChart.cartesian(0.0, 0.0), 1.0, n_theta=8, dr=0.25)
    ch.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "theta,r,lambda,conjugate_flag"
    assert len(lines) == 1 + 8 * len(ch.r)


def test_rejects_bad_arguments():
    with pytest.raises(ValueError):
        shoot_geodesic(HYP, UnitTangent(PointChart.cartesian(0, 0), 0.0), -1.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(0, 2 * math.pi), st.floats(0.5, 3.0))
def test_unit_speed_preserved(x, y, a, s):
    path = shoot_geodesic(CONFORMAL, UnitTangent(PointChart.cartesian(x, y), a), s)
    assert path.speed_drift <= 1e-9

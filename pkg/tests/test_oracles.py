import math

import pytest
from scipy.integrate import quad

import oracles as O


def test_conical_area_matches_quadrature():
    for r in (1.0, 10.0, 40.0):
        f = lambda s: 1.5 * s - 0.5 * math.tanh(s)
        num, _ = quad(lambda s: O.TWO_PI * f(s), 0.0, r, epsabs=1e-13, epsrel=1e-13, limit=200)
        assert num == pytest.approx(O.conical_area(r), rel=1e-11)


def test_frozen_ratios():
    assert O.conical_area(10) / (math.pi * 100) == pytest.approx(O.CONICAL_RATIO_10, abs=1e-14)
    assert O.conical_area(40) / (math.pi * 1600) == pytest.approx(O.CONICAL_RATIO_40, abs=1e-14)
    assert O.hyperbolic_area(2) == pytest.approx(O.HYPERBOLIC_AREA_2, rel=1e-14)


def test_cusp_loop_matches_half_plane_distance():
    # distance between (0, y) and (2 pi, y) in the upper half-plane, via the log formula
    for t0 in (0.5, 2.0, 6.0):
        y = math.exp(t0)
        d = math.acosh(1 + (2 * math.pi) ** 2 / (2 * y * y))
        assert O.cusp_loop(t0) == pytest.approx(d, rel=1e-12)


def test_flat_cylinder_sphere_by_chord():
    # the sphere is an arc of a Euclidean circle in the cover, cut by |theta| <= pi
    r = 7.0
    phi = math.asin(math.pi / r)
    assert O.flat_cylinder_sphere(r) == pytest.approx(2 * r * phi)
    arc, _ = quad(lambda a: r, -phi, phi)
    assert arc == pytest.approx(O.flat_cylinder_sphere(r), rel=1e-13)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from hopfrig.cylinder import (
    bol_fiala_check,
    busemann_field,
    busemann_value,
    doubling_identity,
    end_opening_report,
    exhaustion_curves,
    fiber_energy_end,
    sphere_length_in_end,
    theorem2_report,
    validate_levels,
)
from hopfrig.metric import DomainError, PointChart, SurfaceSpec

CUSP = SurfaceSpec.rotational_cylinder("exp(-t)")
FLAT = SurfaceSpec.flat_cylinder()
PROFILES = ["exp(-t)", "cosh(t)", "exp(t) + 0.5", "sqrt(1 + t^2)", "2 + tanh(t)"]


def test_cusp_closed_forms():
    c = exhaustion_curves(CUSP, 2, 6.0)
    t = c.t
    np.testing.assert_allclose(c.h, 2 * math.pi * np.exp(-t), rtol=1e-12)
    np.testing.assert_allclose(c.H, 2 * math.pi * (1 - np.exp(-t)), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(c.omega, 2 * math.pi + 2 * math.pi * np.exp(-t), rtol=1e-12)
    assert np.max(c.dH_defect) <= 1e-5
    assert np.max(c.omega_defect) <= 1e-10


def test_flare_closed_forms():
    c = exhaustion_curves(CUSP, 1, 3.0)
    np.testing.assert_allclose(c.h, 2 * math.pi * np.exp(c.t), rtol=1e-12)
    np.testing.assert_allclose(c.omega, 2 * math.pi - 2 * math.pi * np.exp(c.t), rtol=1e-12)


@pytest.mark.parametrize("end", [1, 2])
def test_bol_fiala_margin_is_initial_length(end):
    c = exhaustion_curves(CUSP, end, 4.0)
    margin, lo = bol_fiala_check(c)
    np.testing.assert_allclose(margin, 2 * math.pi, rtol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(PROFILES), st.floats(0.1, 4.0), st.floats(0.1, 4.0), st.floats(-1, 1))
def test_doubling_identity(profile, r1, r2, tb):
    sp = SurfaceSpec.rotational_cylinder(profile)
    lhs, rhs = doubling_identity(sp, r1, r2, t_b=tb)
    assert abs(lhs - rhs) <= 1e-6 * max(1.0, abs(rhs))


def test_doubling_on_flat_cylinder_is_zero():
    lhs, rhs = doubling_identity(FLAT, 1.0, 2.0)
    assert lhs == 0.0 and rhs == 0.0


@pytest.mark.parametrize("r", [3.3, 5.0, 12.0])
def test_flat_sphere_length(r):
    L, _ = sphere_length_in_end(FLAT, 0.0, r, 2)
    assert L == pytest.approx(O.flat_cylinder_sphere(r), rel=1e-9)


def test_sphere_below_half_loop_is_half_circle():
    L, _ = sphere_length_in_end(FLAT, 0.0, 1.0, 1)
    assert L == pytest.approx(math.pi, rel=1e-9)


def test_busemann_levels_are_circles_on_cusp():
    rep = validate_levels(CUSP, 2, h=0.1)
    assert rep["circles"]
    assert rep["ray_defect"] < 1e-9


def test_busemann_levels_fail_in_the_flare():
    assert not validate_levels(CUSP, 1, h=0.1)["circles"]


def test_busemann_field_flat_and_csv(tmp_path):
    bf = busemann_field(FLAT, 2, window=(0.0, 2.0), h=0.1)
    assert bf.monotone_violation < 1e-9
    dev = bf.level_deviation([0.5, 1.0, 1.5])
    assert np.all(dev <= 4 * bf.h + np.max(bf.error))
    bf.to_csv(tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().startswith("t,theta,busemann,error")


def test_busemann_value_on_flat_cylinder():
    v = busemann_value(FLAT, PointChart.cylinder(1.0, 0.5), end=2, h=0.05)
    assert v.value == pytest.approx(-1.0, abs=0.1)
    assert v.monotone


def test_fiber_energy_on_constant_curvature_end():
    c = exhaustion_curves(CUSP, 2, 3.0, n=301)
    fiber_energy_end(CUSP, c, n_ang=16, ladder=(2, 4, 8, 16), n_coarse=17)
    # U = -1 on a K = -1 surface, so F = 2 pi H
    assert np.all(np.abs(c.F - 2 * math.pi * c.H) <= c.errF + 1e-6)
    assert np.max(np.abs(c.F - 2 * math.pi * c.H)) < 1e-3 * (2 * math.pi * c.H[-1])


def test_exhaustion_csv(tmp_path):
    c = exhaustion_curves(CUSP, 2, 1.0, n=11)
    c.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "t,H,h,omega,F,errH,errF"
    assert len(lines) == 12


def test_flat_end_report():
    rep = end_opening_report(FLAT, 2, s_ladder=[1, 2, 4, 8, 16])
    assert rep.opens_less_than_linearly == "yes"
    assert rep.subquadratic == "yes"
    assert rep.agreement
    for r, m in zip(rep.sphere_r, rep.sphere_margin):
        assert m == pytest.approx(O.flat_cylinder_sphere(r) - 2 * math.pi, abs=1e-8)


def test_theorem2_flat_cylinder():
    rep = theorem2_report(FLAT, r_max=4.0, n=201, n_ang=8, s_ladder=[1, 2, 4, 8])
    assert rep.verdict == "consistent-flat"
    assert rep.findings == []


def test_planes_are_rejected():
    with pytest.raises(DomainError):
        exhaustion_curves(SurfaceSpec.flat_plane(), 1, 1.0)
    with pytest.raises(ValueError):
        exhaustion_curves(CUSP, 3, 1.0)

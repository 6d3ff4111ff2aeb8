import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopfrig.expr import ExprSyntaxError, compile_expr, parse_expr
from hopfrig.metric import (
    DomainError,
    InvariantError,
    PointChart,
    SpecSyntaxError,
    SurfaceSpec,
    christoffels_at,
    curvature_at,
    metric_at,
    parse_metric_spec,
)

PROFILES = ["sinh(t)", "exp(-t)*cosh(t)^2", "t^3 - 2*t + sqrt(1 + t^2)", "log(cosh(t)) * tanh(t)",
            "sech(t) + sin(t)*cos(2t)", "2^t"]


@pytest.mark.parametrize("text", PROFILES)
def test_derivative_matches_finite_differences(text):
    e = parse_expr(text, ("t",))
    d = e.diff("t")
    x = np.linspace(-1.3, 1.7, 11)
    h = 1e-5
    fd = (e(t=x + h) - e(t=x - h)) / (2 * h)
    np.testing.assert_allclose(d(t=x), fd, rtol=1e-7, atol=1e-7)


@pytest.mark.parametrize("text", PROFILES)
def test_compiled_matches_tree(text):
    e = parse_expr(text, ("t",))
    f = compile_expr(e.diff("t").diff("t"), ("t",))
    x = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(f(x), e.diff("t").diff("t")(t=x), rtol=1e-14)
    assert float(f(0.3)) == pytest.approx(float(e.diff("t").diff("t")(t=0.3)), rel=1e-14)


def test_implicit_product_and_power_synonym():
    e = parse_expr("2t**2", ("t",))
    assert float(e(t=3.0)) == 18.0


@pytest.mark.parametrize("text,col", [("sinh(t", 7), ("t + * 2", 5), ("foo(t)", 1), ("t $ 1", 3)])
def test_syntax_error_columns(text, col):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr(text, ("t",))
    assert info.value.column == col


def test_spec_file_errors_carry_line_and_column():
    with pytest.raises(SpecSyntaxError) as info:
        parse_metric_spec("family=rotational_plane\nf=sinh(r)+\n")
    assert (info.value.line, info.value.column) == (2, 11)
    with pytest.raises(SpecSyntaxError) as info:
        parse_metric_spec("# hi\nfamily=rotational_plane\nfoo=1\n")
    assert info.value.line == 3
    with pytest.raises(SpecSyntaxError):
        parse_metric_spec("family=flat_plane\nf=r\n")
    with pytest.raises(SpecSyntaxError):
        parse_metric_spec("f=r\n")


@pytest.mark.parametrize("ctor,text", [("rotational_plane", "2*r"), ("rotational_plane", "r + r^2"),
                                       ("rotational_cylinder", "t"),
                                       ("rotational_cylinder", "exp(-t) - 2")])
def test_invariants_rejected(ctor, text):
    with pytest.raises(InvariantError):
        getattr(SurfaceSpec, ctor)(text)


def test_hyperbolic_curvature_everywhere_including_pole():
    sp = SurfaceSpec.rotational_plane("sinh(r)")
    for p in [(0.0, 0.0), (1e-9, 0.0), (0.3, 0.4), (2.0, -1.0)]:
        assert curvature_at(sp, PointChart.cartesian(*p)).K == pytest.approx(-1.0, abs=1e-9)


def test_conformal_curvature_closed_form():
    sp = SurfaceSpec.conformal_plane("0.2*log(cosh(x)) + 0.1*log(cosh(y))")
    x, y = 0.3, -0.2
    phi = 0.2 * math.log(math.cosh(x)) + 0.1 * math.log(math.cosh(y))
    lap = 0.2 / math.cosh(x) ** 2 + 0.1 / math.cosh(y) ** 2
    K = curvature_at(sp, PointChart.cartesian(x, y)).K
    assert K == pytest.approx(-math.exp(-2 * phi) * lap, rel=1e-12)


def test_cylinder_curvature_and_metric():
    sp = SurfaceSpec.rotational_cylinder("cosh(t)")
    p = PointChart.cylinder(0.7, 1.0)
    assert curvature_at(sp, p).K == pytest.approx(-1.0, rel=1e-12)
    g = metric_at(sp, p)
    np.testing.assert_allclose(g, [[1, 0], [0, math.cosh(0.7) ** 2]], rtol=1e-14)


def test_christoffels_symmetric_and_flat_zero():
    sp = SurfaceSpec.conformal_plane("0.3*x*y")
    G = christoffels_at(sp, PointChart.cartesian(0.4, 0.9))
    gam = np.asarray(G.gamma)
    np.testing.assert_allclose(gam, np.swapaxes(gam, 1, 2), atol=1e-14)
    G0 = christoffels_at(SurfaceSpec.flat_plane(), PointChart.cartesian(1.0, 2.0))
    assert np.all(np.asarray(G0.gamma) == 0)


def test_wrong_chart_rejected():
    with pytest.raises(DomainError):
        curvature_at(SurfaceSpec.flat_plane(), PointChart.cylinder(0.0, 0.0))


def test_chart_round_trip():
    sp = SurfaceSpec.rotational_plane("sinh(r)")
    p = PointChart.polar(1.5, 5.0)
    x1, x2 = sp.to_chart(p)
    q = sp.from_chart(x1, x2)
    assert np.allclose(sp.to_chart(q), (x1, x2), atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 2 * math.pi))
def test_frame_is_orthonormal(x, y, a):
    sp = SurfaceSpec.conformal_plane("0.2*log(cosh(x)) + 0.1*log(cosh(y))")
    v1, v2 = sp.tangent(x, y, a)
    assert float(sp.norm(x, y, v1, v2)) == pytest.approx(1.0, abs=1e-12)
    w1, w2 = sp.tangent(x, y, a + math.pi / 2)
    assert float(sp.inner(x, y, (v1, v2), (w1, w2))) == pytest.approx(0.0, abs=1e-12)

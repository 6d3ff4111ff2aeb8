import math

import numpy as np
import pytest

import oracles as O
from hopfrig.metric import PointChart, SurfaceSpec
from hopfrig.plane import (
    PremiseViolated,
    ball_growth,
    fiber_energy,
    section3_violation,
    theorem1_report,
)

POLE = PointChart.cartesian(0.0, 0.0)
HYP = SurfaceSpec.rotational_plane("sinh(r)")
CONICAL = SurfaceSpec.rotational_plane(O.CONICAL_F)
CONFORMAL = SurfaceSpec.conformal_plane("0.2*log(cosh(x)) + 0.1*log(cosh(y))")


def test_flat_growth_is_exact():
    c = ball_growth(SurfaceSpec.flat_plane(), PointChart.cartesian(1.0, -2.0), 5.0)
    np.testing.assert_allclose(c.A[1:], math.pi * c.r[1:] ** 2, rtol=1e-12)
    assert np.max(np.abs(c.gb_defect)) < 1e-9


def test_hyperbolic_area_oracle():
    c = ball_growth(HYP, POLE, 2.0)
    assert c.A[-1] == pytest.approx(O.HYPERBOLIC_AREA_2, rel=1e-8)
    assert np.max(np.abs(c.gb_defect)) <= 1e-5


def test_conical_ratio_at_ten():
    c = ball_growth(CONICAL, POLE, 10.0)
    assert c.A[-1] / (math.pi * 100) == pytest.approx(O.CONICAL_RATIO_10, rel=1e-7)


def test_conformal_gauss_bonnet_and_refinement():
    p = PointChart.cartesian(0.3, -0.2)
    coarse = ball_growth(CONFORMAL, p, 3.0, n_theta=64, dr=3.0 / 256)
    fine = ball_growth(CONFORMAL, p, 3.0, n_theta=64, dr=3.0 / 512)
    e1, e2 = np.max(np.abs(coarse.gb_defect)), np.max(np.abs(fine.gb_defect))
    assert e2 <= 1e-5
    assert e2 < e1


def test_fiber_energy_hyperbolic():
    c = ball_growth(HYP, POLE, 2.0, n_theta=64)
    c = fiber_energy(HYP, POLE, c, ladder=(2, 4, 8, 16), n_coarse=33)
    # U = -1 everywhere, so F(r) = 2 pi A(r)
    np.testing.assert_allclose(c.F, 2 * math.pi * c.A, rtol=1e-4, atol=1e-4)
    assert np.all(np.diff(c.F) >= 0)
    assert not c.F_unreliable


def test_section3_inequality_hyperbolic():
    c = ball_growth(HYP, POLE, 2.0, n_theta=64)
    c = fiber_energy(HYP, POLE, c, ladder=(2, 4, 8, 16), n_coarse=33)
    v = section3_violation(c)
    assert np.max(v) <= np.max(c.errF) + 1e-6


def test_theorem1_flat_consistent(tmp_path):
    curve, rep = theorem1_report(SurfaceSpec.flat_plane(), POLE, 10.0)
    assert rep.verdict == "consistent-flat"
    assert abs(rep.ratio - 1) <= 1e-9
    assert rep.F_tail <= 1e-9
    curve.to_csv(tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_text().startswith("r,A,L,Asecond,omega,F,errA,errF")


def test_theorem1_hyperbolic_strictly_above():
    _, rep = theorem1_report(HYP, POLE, 4.0, ladder=(2, 4, 8, 16), n_coarse=33, n_theta=64)
    assert rep.verdict == "strictly-above-1"
    assert rep.trend == "diverging"


def test_positive_curvature_is_premise_violation():
    sp = SurfaceSpec.rotational_plane("sin(r)", check=False)
    with pytest.raises(PremiseViolated):
        ball_growth(sp, PointChart.cartesian(math.pi / 2, 0.0), 3.3, n_theta=16)
    curve, rep = theorem1_report(sp, PointChart.cartesian(math.pi / 2, 0.0), 3.3, n_theta=16)
    assert curve is None and rep.verdict == "premise-violated"

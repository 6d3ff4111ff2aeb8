import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hopfrig.odelemma import (
    LemmaPreconditionError,
    MonotonicityError,
    OdeLemmaData,
    check_hypothesis,
    check_ineq_R,
    double_from_zero,
    double_integral,
    iterated_integral,
    read_lemma_csv,
    sharp_bound,
)

A_, B_, C_ = 2 * math.pi, math.sqrt(2 * math.pi), -4 * math.pi ** 2


@st.composite
def instances(draw):
    n = draw(st.integers(3, 40))
    steps = draw(st.lists(st.floats(0.01, 2.0), min_size=n, max_size=n))
    r = np.concatenate([[0.0], np.cumsum(steps)])
    F = np.concatenate([[draw(st.floats(0, 5))],
                        draw(st.lists(st.floats(0, 3), min_size=n, max_size=n))])
    A = np.concatenate([[draw(st.floats(0, 5))],
                        draw(st.lists(st.floats(0, 3), min_size=n, max_size=n))])
    F, A = np.cumsum(F), np.cumsum(A)
    i = draw(st.integers(0, n - 1))
    j = draw(st.integers(i + 1, n))
    return r, F, A, r[i], r[j]


@settings(max_examples=100, deadline=None)
@given(instances())
def test_ineq_R_margin_nonnegative(inst):
    r, F, A, q, rr = inst
    margin, lhs, rhs = check_ineq_R(r, F, A, q, rr)
    assert margin >= -1e-9 * max(1.0, rhs)


@settings(max_examples=100, deadline=None)
@given(instances())
def test_integration_by_parts_identity(inst):
    r, F, _, q, rr = inst
    dbl, single = double_integral(r, F, q, rr)
    assert abs(dbl - single) <= 1e-10 * max(1.0, abs(dbl))


def test_iterated_integral_closed_form():
    r = np.linspace(0, 3, 7)
    # I(q, r) of F(t) = t is (r - q)^3 / 6, exact for the interpolant
    I = iterated_integral(r, r, 0.5, 3.0)
    assert I.value == pytest.approx(2.5 ** 3 / 6, rel=1e-14)
    assert I.defect < 1e-13


def test_double_from_zero_of_constant():
    r = np.linspace(0.5, 4, 8)
    np.testing.assert_allclose(double_from_zero(r, np.ones_like(r)), r ** 2 / 2, rtol=1e-14)


def test_synthetic_family_attains_bound():
    for eps in (0.0, 0.25, 0.5, 1.0):
        r = np.linspace(0, 50, 2001)
        A = math.pi * (1 + eps) * r ** 2
        R = np.full_like(r, 2 * math.pi * (1 + eps))
        # F equal to the bound; the differential inequality holds with F' = 0
        F = np.full_like(r, 4 * math.pi ** 2 * eps)
        data = OdeLemmaData(r, A, F, R, A_, B_, C_, dF=np.zeros_like(r), dA=2 * math.pi * (1 + eps) * r)
        v = sharp_bound(data)
        assert v.bound == pytest.approx(2 * A_ * math.pi * (1 + eps) + C_, abs=1e-9)
        assert v.bound == pytest.approx(4 * math.pi ** 2 * eps, abs=1e-9)
        assert abs(v.margin) <= 1e-9


def test_hypothesis_failure_raises():
    r = np.linspace(0, 5, 51)
    A = math.pi * r ** 2
    R = np.full_like(r, 2 * math.pi * 1.1)  # double integral exceeds A
    with pytest.raises(LemmaPreconditionError) as info:
        sharp_bound(OdeLemmaData(r, A, np.zeros_like(r), R, A_, B_, C_))
    assert info.value.report["hypothesis_defect"] > 0
    assert check_hypothesis(r, A, R) > 0


def test_inequality_failure_raises():
    r = np.linspace(0, 5, 51)
    A = math.pi * r ** 2
    R = np.full_like(r, 2 * math.pi)
    F = np.full_like(r, 2 * math.pi ** 2 + 1.0)
    with pytest.raises(LemmaPreconditionError):
        sharp_bound(OdeLemmaData(r, A, F, R, A_, B_, -4 * math.pi ** 2 + 2 * math.pi ** 2))


def test_monotonicity_enforced():
    r = np.linspace(0, 1, 5)
    with pytest.raises(MonotonicityError):
        OdeLemmaData(r, r, -r, r, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        OdeLemmaData(r[::-1], r, r, r, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        OdeLemmaData(r, r, r, r, -1.0, 1.0, 0.0)


def test_csv_round_trip(tmp_path):
    r = np.linspace(0, 10, 101)
    path = tmp_path / "lemma.csv"
    with open(path, "w") as fh:
        fh.write("r,A,F,R\n")
        for x in map(float, r):
            fh.write(f"{x!r},{math.pi * x * x!r},0.0,{2 * math.pi!r}\n")
    data = read_lemma_csv(path, A_, B_, C_)
    v = sharp_bound(data)
    assert v.passed
    assert abs(v.bound) <= 1e-9

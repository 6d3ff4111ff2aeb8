"""Closed forms and frozen reference values used across the tests.

Each frozen number was computed once from the closed form next to it and
cross-checked by an independent quadrature in ``test_oracles.py``.
"""

import math

TWO_PI = 2 * math.pi

# conical plane f = 1.5 r - 0.5 tanh r:  A(r) = 2 pi (0.75 r^2 - 0.5 log cosh r)
CONICAL_F = "1.5*r - 0.5*tanh(r)"


def conical_area(r):
    return TWO_PI * (0.75 * r * r - 0.5 * math.log(math.cosh(r)))


CONICAL_RATIO_10 = 1.406931471784988
CONICAL_RATIO_40 = 1.47543321698785


def hyperbolic_area(r):
    return TWO_PI * (math.cosh(r) - 1.0)


HYPERBOLIC_AREA_2 = 17.355387381771436


def cusp_loop(t0):
    """Shortest loop at height t0 on f = exp(-t), from the half-plane model."""
    # cosh d = 1 + 2 pi^2 e^{-2 t0}, written without cancellation
    return 2.0 * math.asinh(math.pi * math.exp(-t0))


def flat_cylinder_sphere(r):
    """Length of the half-cylinder part of a sphere of radius r > pi on the unit flat cylinder."""
    return 2.0 * r * math.asin(math.pi / r)

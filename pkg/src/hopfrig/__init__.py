"""Numerical laboratory for Hopf-type rigidity of planes and cylinders without conjugate points."""

__version__ = "0.1.0"

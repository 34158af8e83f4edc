"""Finite-volume ALE solver for a 1-DOF elastically mounted cylinder and a
POD-Galerkin / POD-RBF reduced-order model built on top of it."""

__version__ = "0.1.0"

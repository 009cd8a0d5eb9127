"""Coordinate-chart tensor calculus for numerically checking identities on
F-manifolds with eventual identities, their compatible metrics, flows of
hydrodynamic type and diagonal tt*-structures."""

__version__ = "0.1.0"

"""Exact constructions of nested-polytope instances from polynomial systems."""

__version__ = "0.1.0"

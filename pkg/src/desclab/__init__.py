"""Propagation estimates on compactified Minkowski space: geometry, metrics,
symbol flows, threshold orders and finite-difference resolvents."""

__version__ = "0.1.0"

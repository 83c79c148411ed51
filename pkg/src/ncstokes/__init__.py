"""Pressure-robust nonconforming Stokes discretisations on triangles."""

__version__ = "0.1.0"

"""Finite-volume laboratory for ``u_t = Lap(u^m) + div(u V)``."""

from ._backend import name as backend

__version__ = "0.1.0"

__all__ = ["backend", "__version__"]

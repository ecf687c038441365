"""Bulk-boundary correspondence for periodically driven lattice systems."""
from .errors import (ConfigError, DomainError, FloquetError, GapViolationError,
                     PreconditionError, UnsupportedGeometryError)
from .lattice import IndexSet, LatticeGeometry, LatticeOperator

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DomainError", "FloquetError", "GapViolationError", "PreconditionError",
    "UnsupportedGeometryError", "IndexSet", "LatticeGeometry", "LatticeOperator", "__version__",
]

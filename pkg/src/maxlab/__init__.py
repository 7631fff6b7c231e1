"""Numerical laboratory for damped shear waves and symmetric-hyperbolic Maxwell fluids."""

__version__ = "0.1.0"

from .core import ConfigurationError, DomainError, Eos, MaterialParams, StabilityError

__all__ = ["ConfigurationError", "DomainError", "Eos", "MaterialParams", "StabilityError", "__version__"]

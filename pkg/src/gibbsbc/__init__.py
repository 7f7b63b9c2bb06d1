"""Finite-volume spin systems with unbounded spins and heavy boundaries.

The package splits into graph truncations (``graphs``), single-site
measures with certified quadrature (``measures``), growth functionals of
boundary data (``boundary``), the exploration process that dominates
high-spin clusters (``exploration``), a heat-bath sampler (``sampler``),
small statistics helpers (``stats``) and the desk-scale experiment
drivers (``experiments``).
"""

from .errors import (ContractError, GibbsbcError, OverflowBudgetError,
                     QuadratureError, SchemaError)

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "GibbsbcError",
    "OverflowBudgetError",
    "QuadratureError",
    "SchemaError",
    "__version__",
]

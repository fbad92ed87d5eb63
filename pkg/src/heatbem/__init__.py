"""Space-time Galerkin boundary element solver for the 2D heat equation."""

from .geometry import BoundaryCurve
from .indexsets import (
    Density,
    DiscreteSpace,
    IndexSet,
    full_tensor_set,
    optimized_set,
    sparse_set,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryCurve",
    "Density",
    "DiscreteSpace",
    "IndexSet",
    "full_tensor_set",
    "optimized_set",
    "sparse_set",
    "__version__",
]

"""Distributed majorization-minimization for Laplacian regularized problems."""

from .core import SolveOptions, SolveTrace, solve
from .lapgraph import BlockPartition, WeightedLaplacian, laplacian_from_edges
from .majorize import (
    DiagonalMajorizer,
    block_identity_majorizer,
    diagonal_majorizer,
    general_quadratic_majorizer,
    spectral_majorizer,
)

__all__ = [
    "BlockPartition",
    "DiagonalMajorizer",
    "SolveOptions",
    "SolveTrace",
    "WeightedLaplacian",
    "block_identity_majorizer",
    "diagonal_majorizer",
    "general_quadratic_majorizer",
    "laplacian_from_edges",
    "solve",
    "spectral_majorizer",
]

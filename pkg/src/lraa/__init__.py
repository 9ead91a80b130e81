"""Low-rank solvers for nonlinear matrix equations.

The package provides a factored-SVD matrix type with truncated low-rank
linear algebra, an adaptive cross approximation with warm start, a low-rank
Anderson-accelerated fixed-point solver with residual-driven truncation
scheduling, an exponential-sum preconditioner for Laplacian-like operators,
and a collection of finite-difference benchmark problems.
"""

from .factored import (
    FactoredMatrix,
    TruncationSpec,
    LstsqResult,
    truncated_svd_dense,
    compress_factors,
    round_sum,
    diff_norm,
    lstsq_lowrank,
)
from .oracle import EntryOracle, FunctionOracle, CombinationOracle
from .cross import CrossConfig, CrossDiagnostics, qdeim, scross, cross_deim

__all__ = [
    "FactoredMatrix",
    "TruncationSpec",
    "LstsqResult",
    "truncated_svd_dense",
    "compress_factors",
    "round_sum",
    "diff_norm",
    "lstsq_lowrank",
    "EntryOracle",
    "FunctionOracle",
    "CombinationOracle",
    "CrossConfig",
    "CrossDiagnostics",
    "qdeim",
    "scross",
    "cross_deim",
]

__version__ = "0.1.0"

"""Matrix-free entry access: the sampling contract used by cross approximation.

An entry oracle exposes a matrix only through single entries, full rows and
full columns.  Accessors must be deterministic within a process and the
block accessors must agree entrywise with ``entry``.  ``FactoredMatrix``
already satisfies the contract through duck typing; the classes here cover
function-defined matrices and linear combinations of existing low-rank
matrices.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Callable, Sequence

import numpy as np

from .factored import FactoredMatrix

__all__ = ["EntryOracle", "FunctionOracle", "CombinationOracle"]


class EntryOracle(ABC):
    """Read-only matrix defined by its entries."""

    nrows: int
    ncols: int

    @abstractmethod
    def entry(self, i: int, j: int) -> float: ...

    @abstractmethod
    def row_block(self, rows) -> np.ndarray:
        """Dense block of the requested rows, shape (len(rows), ncols)."""

    @abstractmethod
    def col_block(self, cols) -> np.ndarray:
        """Dense block of the requested columns, shape (nrows, len(cols))."""


class FunctionOracle(EntryOracle):
    """Oracle backed by a vectorized index function ``fn(i, j)``.

    ``fn`` must accept broadcastable integer arrays of row/column indices
    and return the matching entries.
    """

    def __init__(self, nrows: int, ncols: int, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]):
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        self.fn = fn

    def entry(self, i, j):
        return float(self.fn(np.asarray(i), np.asarray(j)))

    def row_block(self, rows):
        rows = np.atleast_1d(np.asarray(rows, dtype=np.intp))
        jj = np.arange(self.ncols, dtype=np.intp)
        return np.asarray(self.fn(rows[:, None], jj[None, :]), dtype=np.float64)

    def col_block(self, cols):
        cols = np.atleast_1d(np.asarray(cols, dtype=np.intp))
        ii = np.arange(self.nrows, dtype=np.intp)
        return np.asarray(self.fn(ii[:, None], cols[None, :]), dtype=np.float64)


class CombinationOracle(EntryOracle):
    """Signed linear combination ``sum_j c_j * X_j`` of low-rank matrices.

    Entries are evaluated through the terms' own O(r) accessors, so the
    combination is never formed; this is what lets the solver compress an
    update by cross approximation instead of rounding.
    """

    def __init__(self, terms: Sequence[tuple[float, FactoredMatrix]]):
        if len(terms) == 0:
            raise ValueError("need at least one term")
        shape = terms[0][1].shape
        for _, fm in terms:
            if fm.shape != shape:
                raise ValueError(f"shape mismatch in combination: {fm.shape} vs {shape}")
        self.terms = [(float(c), fm) for c, fm in terms]
        self.nrows, self.ncols = shape

    def entry(self, i, j):
        return float(sum(c * fm.entry(i, j) for c, fm in self.terms))

    def row_block(self, rows):
        out = None
        for c, fm in self.terms:
            blk = c * fm.row_block(rows)
            out = blk if out is None else out + blk
        return out

    def col_block(self, cols):
        out = None
        for c, fm in self.terms:
            blk = c * fm.col_block(cols)
            out = blk if out is None else out + blk
        return out

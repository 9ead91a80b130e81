"""Low-rank matrices in SVD form and the truncated linear algebra built on them.

Everything downstream (cross approximation, the accelerated fixed-point
solver, the preconditioner) manipulates matrices exclusively through the
factored form ``U @ diag(S) @ V.T``.  The kernels here never materialize an
m-by-n matrix; all work happens on the factors and on small middle matrices
obtained by column-pivoted QR of stacked factor blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg as sla

__all__ = [
    "FactoredMatrix",
    "TruncationSpec",
    "LstsqResult",
    "truncated_svd_dense",
    "compress_factors",
    "round_sum",
    "diff_norm",
    "lstsq_lowrank",
]

_MEPS = float(np.finfo(np.float64).eps)


@dataclass(frozen=True)
class TruncationSpec:
    """Absolute Frobenius truncation tolerance plus a hard rank cap.

    ``eps`` bounds the Frobenius norm of the discarded part; ``r_max=None``
    disables the cap (it then defaults to ``min(m, n)`` of the operand).
    """

    eps: float = 0.0
    r_max: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.eps) or self.eps < 0:
            raise ValueError(f"eps must be finite and >= 0, got {self.eps}")
        if self.r_max is not None and self.r_max < 1:
            raise ValueError(f"r_max must be >= 1, got {self.r_max}")

    def cap(self, m: int, n: int) -> int:
        r = min(m, n)
        return r if self.r_max is None else min(self.r_max, r)


EXACT = TruncationSpec(0.0, None)


@dataclass(frozen=True)
class FactoredMatrix:
    """A real m-by-n matrix stored as ``U @ diag(S) @ V.T``.

    Invariants: U (m-by-r) and V (n-by-r) have orthonormal columns, S is
    nonnegative and nonincreasing, and ``1 <= r <= min(m, n)``.  The zero
    matrix is represented with r = 1 and S = [0].  Instances are immutable;
    all operations return new objects.

    ``trunc_tail`` records the Frobenius norm of whatever the truncation
    that produced this matrix discarded (0 for exact constructions).  It is
    diagnostic only and excluded from any notion of equality.
    """

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    trunc_tail: float = 0.0

    def __post_init__(self):
        U = np.ascontiguousarray(np.asarray(self.U, dtype=np.float64))
        S = np.ascontiguousarray(np.asarray(self.S, dtype=np.float64))
        V = np.ascontiguousarray(np.asarray(self.V, dtype=np.float64))
        if U.ndim != 2 or V.ndim != 2 or S.ndim != 1:
            raise ValueError("U, V must be 2-d and S 1-d")
        r = S.shape[0]
        if U.shape[1] != r or V.shape[1] != r:
            raise ValueError(
                f"factor shapes inconsistent: U {U.shape}, S ({r},), V {V.shape}"
            )
        if not (1 <= r <= min(U.shape[0], V.shape[0])):
            raise ValueError(f"rank {r} outside [1, min(m, n)]")
        if not (np.isfinite(U).all() and np.isfinite(S).all() and np.isfinite(V).all()):
            raise ValueError("non-finite entries in factors")
        if (S < 0).any() or (np.diff(S) > 0).any():
            raise ValueError("S must be nonnegative and nonincreasing")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "V", V)

    # -- shape ---------------------------------------------------------

    @property
    def nrows(self) -> int:
        return self.U.shape[0]

    @property
    def ncols(self) -> int:
        return self.V.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.U.shape[0], self.V.shape[0])

    @property
    def rank(self) -> int:
        return self.S.shape[0]

    # -- entry access (the oracle contract) ----------------------------

    def entry(self, i: int, j: int) -> float:
        """Single entry, cost O(r)."""
        m, n = self.shape
        if not (0 <= i < m and 0 <= j < n):
            raise IndexError(f"entry ({i}, {j}) outside {m}x{n}")
        return float((self.U[i] * self.S) @ self.V[j])

    def row_block(self, rows) -> np.ndarray:
        rows = _check_indices(rows, self.nrows, "row")
        return (self.U[rows] * self.S) @ self.V.T

    def col_block(self, cols) -> np.ndarray:
        cols = _check_indices(cols, self.ncols, "column")
        return (self.U * self.S) @ self.V[cols].T

    # -- misc -----------------------------------------------------------

    def norm(self) -> float:
        """Frobenius norm (= 2-norm of S)."""
        return float(np.linalg.norm(self.S))

    def check_invariants(self) -> None:
        """Raise if the orthonormality/ordering invariants are violated."""
        m, n = self.shape
        tol = 1e-12 * np.sqrt(max(m, n))
        r = self.rank
        du = np.abs(self.U.T @ self.U - np.eye(r)).max()
        dv = np.abs(self.V.T @ self.V - np.eye(r)).max()
        if du > tol or dv > tol:
            raise ValueError(f"factors not orthonormal: dev(U)={du:.2e}, dev(V)={dv:.2e}")
        if (self.S < 0).any() or (np.diff(self.S) > 0).any():
            raise ValueError("singular values not sorted nonincreasing/nonnegative")

    @classmethod
    def zero(cls, m: int, n: int) -> "FactoredMatrix":
        U = np.zeros((m, 1))
        U[0, 0] = 1.0
        V = np.zeros((n, 1))
        V[0, 0] = 1.0
        return cls(U, np.zeros(1), V)

    @classmethod
    def rank_one(cls, u, v, scale: float = 1.0) -> "FactoredMatrix":
        """Build ``scale * outer(u, v)`` (u, v need not be normalized)."""
        u = np.asarray(u, dtype=np.float64).reshape(-1)
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        s = abs(scale) * nu * nv
        if s == 0.0:
            return cls.zero(u.size, v.size)
        sign = 1.0 if scale >= 0 else -1.0
        return cls((u / nu)[:, None], np.array([s]), (sign * v / nv)[:, None])


def _check_indices(idx, limit: int, what: str) -> np.ndarray:
    idx = np.atleast_1d(np.asarray(idx, dtype=np.intp))
    if idx.size == 0:
        raise ValueError(f"empty {what} index set")
    if idx.min() < 0 or idx.max() >= limit:
        raise IndexError(f"{what} indices outside [0, {limit})")
    return idx


# ----------------------------------------------------------------------
# truncation helpers
# ----------------------------------------------------------------------

def _choose_rank(s: np.ndarray, eps: float) -> int:
    """Smallest r such that the discarded Frobenius tail satisfies
    ``sum_{l > r} s_l**2 <= eps**2``."""
    s2 = s * s
    suffix = np.concatenate([np.cumsum(s2[::-1])[::-1], [0.0]])
    return int(np.argmax(suffix <= eps * eps))


def _truncate_triplet(U, s, V, spec: TruncationSpec):
    """Apply the tail rule, the rank cap and the minimum-rank convention.

    Returns (U, s, V, tail).  When even the zero matrix meets the tolerance
    the canonical zero representation (r=1, S=[0]) is returned, so exact
    cancellations collapse cleanly instead of keeping roundoff noise.
    """
    r_star = _choose_rank(s, spec.eps)
    if r_star == 0:
        tail = float(np.linalg.norm(s))
        return U[:, :1], np.zeros(1), V[:, :1], tail
    r = max(min(r_star, spec.cap(U.shape[0], V.shape[0])), 1)
    tail = float(np.sqrt(np.sum(s[r:] ** 2)))
    return U[:, :r], s[:r].copy(), V[:, :r], tail


def truncated_svd_dense(A, spec: TruncationSpec) -> FactoredMatrix:
    """Truncated SVD of a small dense matrix.

    Keeps the smallest rank whose discarded singular values satisfy the
    Frobenius tail rule, then clamps to ``[1, r_max]``.  Intended for small
    blocks; the low-rank kernels below never call it on m-by-n data.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"expected a nonempty 2-d array, got shape {A.shape}")
    if not np.isfinite(A).all():
        bad = np.argwhere(~np.isfinite(A))[0]
        raise ValueError(f"non-finite entry at ({bad[0]}, {bad[1]})")
    Um, s, Vh = np.linalg.svd(A, full_matrices=False)
    U, s, V, tail = _truncate_triplet(Um, s, Vh.T, spec)
    return FactoredMatrix(U, s, V, trunc_tail=tail)


# ----------------------------------------------------------------------
# stacked-factor reductions
# ----------------------------------------------------------------------

def _cpqr(A: np.ndarray):
    """Column-pivoted economic QR with the triangular factor mapped back to
    the original column order, so that ``A = Q @ R`` exactly."""
    Q, R, piv = sla.qr(A, mode="economic", pivoting=True)
    Rout = np.empty_like(R)
    Rout[:, piv] = R
    return Q, Rout


def _cpqr_r(A: np.ndarray) -> np.ndarray:
    R, piv = sla.qr(A, mode="r", pivoting=True)
    Rout = np.empty_like(R)
    Rout[:, piv] = R
    return Rout


def compress_factors(
    L,
    R,
    spec: TruncationSpec = EXACT,
    relative: bool = False,
    rel_cap: float | None = None,
) -> FactoredMatrix:
    """Compress a general factorization ``A = L @ R.T`` into SVD form.

    Column-pivoted QR of both factor stacks reduces the problem to an SVD of
    the small middle matrix; with ``eps = 0`` the result reproduces A up to
    roundoff.  With ``relative=True`` the tolerance is taken relative to the
    Frobenius norm of A (read off the middle matrix before truncation);
    ``rel_cap`` additionally caps the tolerance at that fraction of the norm,
    so the result can never be truncated to nothing by an absolute tolerance
    that turns out to exceed the operand.  This is the workhorse behind sums
    of low-rank matrices and operator applications, at cost O((m + n) t^2)
    for t stacked columns.
    """
    L = np.asarray(L, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if L.ndim != 2 or R.ndim != 2 or L.shape[1] != R.shape[1]:
        raise ValueError(f"factor stacks inconsistent: {L.shape} vs {R.shape}")
    if L.shape[1] == 0:
        return FactoredMatrix.zero(L.shape[0], R.shape[0])
    Q1, R1 = _cpqr(L)
    Q2, R2 = _cpqr(R)
    M = R1 @ R2.T
    Um, s, Vh = np.linalg.svd(M, full_matrices=False)
    eps = spec.eps
    norm = float(np.linalg.norm(s))
    if relative:
        eps = eps * norm
    if rel_cap is not None:
        eps = min(eps, rel_cap * norm)
    Ut, st, Vt, tail = _truncate_triplet(Um, s, Vh.T, TruncationSpec(eps, spec.r_max))
    return FactoredMatrix(Q1 @ Ut, st, Q2 @ Vt, trunc_tail=tail)


def round_sum(
    terms: Sequence[tuple[float, FactoredMatrix]],
    spec: TruncationSpec,
) -> FactoredMatrix:
    """Round a linear combination ``sum_j c_j * X_j`` back to tolerance.

    The coefficients are folded into the singular values before the stacked
    QR so the pivoting sees the true column scales.  With ``eps = 0`` and an
    inactive rank cap the result equals the exact sum up to roundoff.
    """
    if len(terms) == 0:
        raise ValueError("round_sum needs at least one term")
    shape = terms[0][1].shape
    for _, fm in terms:
        if fm.shape != shape:
            raise ValueError(f"shape mismatch in sum: {fm.shape} vs {shape}")
    L = np.hstack([c * (fm.U * fm.S) for c, fm in terms])
    R = np.hstack([fm.V for _, fm in terms])
    return compress_factors(L, R, spec)


def diff_norm(A: FactoredMatrix, B: FactoredMatrix) -> float:
    """Frobenius norm of ``A - B`` without forming either matrix.

    Reduces the stacked difference to a small middle matrix by QR; the norm
    of that middle matrix equals the norm of the difference because the
    orthonormal outer factors drop out.
    """
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    L = np.hstack([A.U * A.S, -(B.U * B.S)])
    R = np.hstack([A.V, B.V])
    R1 = _cpqr_r(L)
    R2 = _cpqr_r(R)
    return float(np.linalg.norm(R1 @ R2.T))


class LstsqResult(NamedTuple):
    gamma: np.ndarray
    cond: float


_COND_SWITCH = 1e12


def lstsq_lowrank(D_terms: Sequence[FactoredMatrix], B: FactoredMatrix) -> LstsqResult:
    """Coefficients minimizing ``|| sum_j gamma_j D_j - B ||_F``.

    The stacked U and V factors of the D terms are reduced by column-pivoted
    QR; projecting B and each term onto those bases turns the matrix
    least-squares problem into an ordinary small one (exactly, since every
    D_j lies in the span of the bases).  Well-conditioned systems are solved
    by pivoted QR; past a condition estimate of 1e12 an SVD minimum-norm
    solve is used instead.  The condition estimate is reported alongside
    gamma.
    """
    if len(D_terms) == 0:
        raise ValueError("need at least one term")
    shape = B.shape
    for fm in D_terms:
        if fm.shape != shape:
            raise ValueError(f"shape mismatch: {fm.shape} vs {shape}")
    Q1, R1 = _cpqr(np.hstack([fm.U for fm in D_terms]))
    Q2, R2 = _cpqr(np.hstack([fm.V for fm in D_terms]))
    b = ((Q1.T @ (B.U * B.S)) @ (B.V.T @ Q2)).ravel()
    cols = []
    lo = 0
    for fm in D_terms:
        hi = lo + fm.rank
        cols.append(((R1[:, lo:hi] * fm.S) @ R2[:, lo:hi].T).ravel())
        lo = hi
    A = np.column_stack(cols)
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float("inf") if sv[-1] == 0.0 else float(sv[0] / sv[-1])
    if cond <= _COND_SWITCH:
        gamma = sla.lstsq(A, b, lapack_driver="gelsy")[0]
    else:
        # rank-deficient: minimum-norm solution with an explicit cutoff
        gamma = sla.lstsq(A, b, cond=max(A.shape) * _MEPS, lapack_driver="gelsd")[0]
    return LstsqResult(gamma, cond)

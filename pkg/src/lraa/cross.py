"""Adaptive cross approximation driven by DEIM-style index selection.

The approximation alternates between two views of the target matrix: an
approximate SVD assembled from sampled rows and columns, and index sets
chosen from the current singular-vector estimates by pivoted QR.  Index
sets are enriched each sweep (with a random safeguard so they can never
stall), redundant samples are pruned through the QR diagonals, and the
sweep stops once both the change between consecutive approximations and a
smallest-singular-value indicator fall below the requested tolerance.
Warm-starting from the factors of a nearby matrix, e.g. the previous
iterate of a fixed-point solve, typically cuts both the sweep count and
the sampled-block sizes roughly in half.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .factored import FactoredMatrix, TruncationSpec, _truncate_triplet, diff_norm

__all__ = ["CrossConfig", "CrossDiagnostics", "qdeim", "scross", "cross_deim"]

_MEPS = float(np.finfo(np.float64).eps)

# QR-diagonal magnitude below which a sampled row/column is considered
# linearly dependent on the others and dropped from the index set.
_REDUNDANCY_TOL = 1e-12

# Diagonal-ratio threshold for switching the small interpolation solve from
# a direct/QR solve to a truncated-SVD pseudoinverse.
_ILL_COND_RATIO = 1e-10

# The sweep stops once the consecutive-update distance and the low-rank
# indicator are below this fraction of the tolerance.  The margin keeps the
# total error (stop error plus final pruning) under the tolerance without
# inflating the output rank past the dense truncation rank.
_STOP_SAFETY = 0.5


@dataclass(frozen=True)
class CrossConfig:
    """Parameters of an adaptive cross run.

    ``r_max`` caps the output rank, ``aleph_max`` the index-set cardinality
    (both default to min(m, n), i.e. inactive), ``maxiter`` bounds the
    number of enrichment sweeps and ``rng_seed`` fixes the safeguard draws.
    With ``relative=True`` the tolerance is interpreted relative to the
    Frobenius norm of the running approximation, which is the right mode
    when the norm of the target is not known in advance; ``eps_rel_cap``
    instead caps an absolute tolerance at that fraction of the norm so the
    run cannot conclude the matrix is negligible merely because the
    caller's absolute budget exceeds it.
    """

    eps: float
    r_max: int | None = None
    aleph_max: int | None = None
    maxiter: int = 100
    rng_seed: int = 0
    relative: bool = False
    eps_rel_cap: float | None = None

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.aleph_max is not None and self.aleph_max < 1:
            raise ValueError("aleph_max must be >= 1")
        if self.maxiter < 1:
            raise ValueError("maxiter must be >= 1")


@dataclass
class CrossDiagnostics:
    """Cost and convergence record of one cross-approximation run."""

    iterations: int
    max_intermediate_rank: int
    final_rho: float
    final_eta1: float
    final_eta2: float
    random_safeguards_used: int
    converged: bool
    rows_sampled: int
    cols_sampled: int
    row_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))
    col_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))

    @property
    def samples(self) -> int:
        """Total row plus column requests issued to the oracle."""
        return self.rows_sampled + self.cols_sampled


def qdeim(U) -> np.ndarray:
    """Interpolation indices for a matrix with orthonormal columns.

    Returns the first l pivots of a column-pivoted QR of ``U.T`` in pivot
    order, where l is the number of columns of U.
    """
    U = np.asarray(U, dtype=np.float64)
    if U.ndim == 1:
        U = U[:, None]
    p, l = U.shape
    if l > p:
        raise ValueError(f"need at least as many rows as columns, got {U.shape}")
    _, piv = sla.qr(U.T, mode="r", pivoting=True)
    return piv[:l].astype(np.intp)


def _restored_diag(Rfac: np.ndarray, piv: np.ndarray, count: int) -> np.ndarray:
    """Diagonal of the pivoted triangular factor, mapped back so entry l
    corresponds to the l-th index as originally passed."""
    out = np.zeros(count)
    k = min(Rfac.shape[0], Rfac.shape[1], count)
    out[piv[:k]] = np.diagonal(Rfac)[:k]
    return out


def _interp_solve(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve the small interpolation system ``A @ W = B``.

    Uses a pivoted-QR least-squares solve while the triangular diagonal is
    well scaled, falling back to a truncated-SVD pseudoinverse when the
    extreme diagonal ratio drops below 1e-10.
    """
    Rq = sla.qr(A, mode="r", pivoting=True)[0]
    d = np.abs(np.diagonal(Rq))
    if d.size and d[0] > 0 and d[-1] >= _ILL_COND_RATIO * d[0]:
        return sla.lstsq(A, B, lapack_driver="gelsy")[0]
    return np.linalg.pinv(A, rcond=max(A.shape) * _MEPS) @ B


def _machine_rank(s: np.ndarray, p: int, q: int) -> int:
    """Numerical rank of an SVD inside the cross update: drop singular
    values below ``max(p, q) * eps_machine * s[0]``.  Tolerance-based
    truncation is the outer loop's job, not this one's."""
    if s.size == 0 or s[0] == 0.0:
        return 1
    return max(int(np.sum(s > max(p, q) * _MEPS * s[0])), 1)


def scross(G, I, J):
    """Stabilized cross approximation of an entry oracle.

    Samples the columns ``J`` and rows ``I`` of G, orthonormalizes each
    block by column-pivoted QR, and solves a small interpolation system on
    the sampled rows (or columns, whichever set is larger) so that the
    approximation reproduces the sampled cross.  Returns the approximate
    SVD together with the permutation-restored QR diagonals ``r_R, r_C``
    used by the caller to detect redundant samples.
    """
    fm, r_R, r_C, _ = _scross_raw(G, I, J)
    return fm, r_R, r_C


def _scross_raw(G, I, J):
    """scross plus the smallest singular value of the sampled cross before
    the numerical-rank trim.  That raw value is what the adaptive loop's
    low-rank indicator must see: a (near-)zero trailing singular value
    signals that the index sets already oversample the target's rank."""
    I = np.atleast_1d(np.asarray(I, dtype=np.intp))
    J = np.atleast_1d(np.asarray(J, dtype=np.intp))
    if I.size == 0 or J.size == 0:
        raise ValueError("index sets must be nonempty")
    C = np.asarray(G.col_block(J), dtype=np.float64)  # (m, |J|)
    R = np.asarray(G.row_block(I), dtype=np.float64)  # (|I|, n)
    m, n = C.shape[0], R.shape[1]

    Qc, Rc, pc = sla.qr(C, mode="economic", pivoting=True)
    Zr, Rr, pr = sla.qr(R.T, mode="economic", pivoting=True)
    r_C = _restored_diag(Rc, pc, J.size)
    r_R = _restored_diag(Rr, pr, I.size)

    if J.size <= I.size:
        # interpolate the sampled rows: G ~ Qc @ W with Qc(I, :) W = R
        W = _interp_solve(Qc[I, :], R)
        Uw, s, Vh = np.linalg.svd(W, full_matrices=False)
        r = _machine_rank(s, m, n)
        smin_raw = float(s[-1])
        if s[0] == 0.0:
            s = np.zeros(1)
        U = Qc @ Uw[:, :r]
        V = Vh[:r].T
    else:
        # interpolate the sampled columns: G ~ W.T @ Zr.T with Zr(J, :) W = C.T
        W = _interp_solve(Zr[J, :], C.T)
        Uw, s, Vh = np.linalg.svd(W.T, full_matrices=False)
        r = _machine_rank(s, m, n)
        smin_raw = float(s[-1])
        if s[0] == 0.0:
            s = np.zeros(1)
        U = Uw[:, :r]
        V = Zr @ Vh[:r].T
    return FactoredMatrix(U, s[:r], V), r_R, r_C, smin_raw


def _ordered_union(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Union keeping the order of ``first`` then unseen entries of ``second``."""
    if second.size == 0:
        return first.copy()
    mask = ~np.isin(second, first)
    return np.concatenate([first, second[mask]])


def _as_basis(M, size: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormalize a warm-start factor, or draw a random unit column."""
    if M is None:
        col = rng.standard_normal((size, 1))
        return col / np.linalg.norm(col)
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    if M.shape[0] != size or M.shape[1] < 1 or M.shape[1] > size:
        raise ValueError(f"warm-start factor shape {M.shape} invalid for dimension {size}")
    return np.linalg.qr(M)[0]


def _spectral_norm(block: np.ndarray) -> float:
    if block.size == 0:
        return 0.0
    return float(np.linalg.norm(block, 2))


def _effective_eps(cfg: CrossConfig, norm: float) -> float:
    eps = cfg.eps * norm if cfg.relative else cfg.eps
    if cfg.eps_rel_cap is not None:
        eps = min(eps, cfg.eps_rel_cap * norm)
    return eps


def cross_deim(G, U0=None, V0=None, cfg: CrossConfig | None = None, rng=None):
    """Adaptive cross approximation of an entry oracle to a Frobenius tolerance.

    ``U0, V0`` seed the index selection (warm start); when omitted a single
    random unit column is drawn from the seeded generator (cold start).
    Returns the SVD-form approximation and a diagnostics record; if the
    sweep budget runs out the best approximation so far is returned with
    ``converged=False`` rather than raising.
    """
    if cfg is None:
        raise ValueError("cfg is required")
    m, n = G.nrows, G.ncols
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    aleph = min(m, n) if cfg.aleph_max is None else min(cfg.aleph_max, min(m, n))

    Ucur = _as_basis(U0, m, rng)
    Vcur = _as_basis(V0, n, rng)
    approx = FactoredMatrix.zero(m, n)
    I_prev = np.zeros(0, dtype=np.intp)
    J_prev = np.zeros(0, dtype=np.intp)

    safeguards = 0
    rows_sampled = 0
    cols_sampled = 0
    max_card = 0
    rho = np.inf
    eta1 = eta2 = 0.0
    converged = False
    iters = 0

    for k in range(1, cfg.maxiter + 1):
        iters = k
        I_star = qdeim(Ucur)
        J_star = qdeim(Vcur)
        I_k = _ordered_union(I_star, I_prev)
        J_k = _ordered_union(J_star, J_prev)
        # safeguard: if the selection added nothing (or on the first sweep),
        # grow the set by one random unexplored index so it cannot stall
        if I_k.size == I_prev.size or k == 1:
            comp = np.setdiff1d(np.arange(m, dtype=np.intp), I_k)
            if comp.size:
                I_k = np.concatenate([I_k, comp[rng.integers(comp.size)][None]])
                safeguards += 1
        if J_k.size == J_prev.size or k == 1:
            comp = np.setdiff1d(np.arange(n, dtype=np.intp), J_k)
            if comp.size:
                J_k = np.concatenate([J_k, comp[rng.integers(comp.size)][None]])
                safeguards += 1
        I_k = I_k[:aleph]
        J_k = J_k[:aleph]
        max_card = max(max_card, I_k.size, J_k.size)

        new_approx, r_R, r_C, smin = _scross_raw(G, I_k, J_k)
        rows_sampled += I_k.size
        cols_sampled += J_k.size

        # prune samples made redundant by linear dependence
        I_prev = I_k[np.abs(r_R) >= _REDUNDANCY_TOL]
        J_prev = J_k[np.abs(r_C) >= _REDUNDANCY_TOL]

        rho = diff_norm(new_approx, approx)
        approx = new_approx
        Ucur, Vcur = approx.U, approx.V
        sig1 = _spectral_norm(Ucur[I_prev, :]) if I_prev.size else 0.0
        sig2 = _spectral_norm(Vcur[J_prev, :]) if J_prev.size else 0.0
        eta1 = 1.0 / sig1 if sig1 > 0 else 0.0
        eta2 = 1.0 / sig2 if sig2 > 0 else 0.0
        if smin == 0.0:
            indicator = 0.0
        elif sig1 == 0.0 or sig2 == 0.0:
            indicator = np.inf  # degenerate sampling: keep iterating
        else:
            indicator = min(eta1 * (1.0 + eta2), eta2 * (1.0 + eta1)) * smin
        eps_eff = _effective_eps(cfg, approx.norm())
        if max(rho, indicator) < _STOP_SAFETY * eps_eff or rho + indicator == 0.0:
            converged = True
            break

    # Final pruning.  The cross error at the stop is of the order of rho, so
    # only the remaining part of the squared tolerance may be spent on
    # discarded singular values; with rho << eps this is the plain tail rule.
    eps_out = _effective_eps(cfg, approx.norm())
    if converged and np.isfinite(rho):
        budget = float(np.sqrt(max(eps_out**2 - rho**2, 0.0)))
    else:
        budget = eps_out
    U, s, V, tail = _truncate_triplet(
        approx.U, approx.S, approx.V, TruncationSpec(budget, cfg.r_max)
    )
    out = FactoredMatrix(U, s, V, trunc_tail=tail)
    diag = CrossDiagnostics(
        iterations=iters,
        max_intermediate_rank=max_card,
        final_rho=float(rho),
        final_eta1=float(eta1),
        final_eta2=float(eta2),
        random_safeguards_used=safeguards,
        converged=converged,
        rows_sampled=rows_sampled,
        cols_sampled=cols_sampled,
        row_indices=I_prev.copy(),
        col_indices=J_prev.copy(),
    )
    return out, diag

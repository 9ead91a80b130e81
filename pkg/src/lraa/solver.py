"""Low-rank Anderson-accelerated fixed-point solver.

The driver keeps every iterate in factored SVD form.  Each sweep evaluates
the fixed-point map through the problem's compression pipeline (adaptive
cross approximation for nonlinear maps, factored algebra for linear ones),
measures the residual as a norm of a low-rank difference, solves a small
projected least-squares problem over a sliding window of rounded residual
differences, and compresses the accelerated combination warm-started with
the current iterate's singular vectors.  A scheduling rule ties the working
truncation tolerance to the residual, which is what keeps intermediate
ranks near the rank of the converged solution.

A dense reference driver with the identical window logic is included for
iteration-count comparisons.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .cross import CrossConfig, CrossDiagnostics, cross_deim
from .factored import FactoredMatrix, TruncationSpec, diff_norm, lstsq_lowrank, round_sum
from .oracle import CombinationOracle

__all__ = [
    "LrAAConfig",
    "IterationRecord",
    "SolveReport",
    "SolverDivergence",
    "schedule_update",
    "combination_compress",
    "lraa_solve",
    "dense_aa_solve",
]


@dataclass(frozen=True)
class LrAAConfig:
    """Solver parameters.

    ``theta`` scales the residual into the next truncation tolerance
    (``eps_G <- theta * rho``); ``eps_F`` is the tight rounding tolerance
    used for the least-squares window; ``combination`` chooses how the
    accelerated update is compressed ('rounding' or 'cross').  With
    ``tol_relative`` the stopping tolerance (and, when scheduling is off,
    ``eps_G0``) are interpreted relative to the initial residual.
    """

    tol: float = 1e-10
    window: int = 5
    theta: float = 0.5
    eps_F: float = 1e-12
    eps_G0: float = 1e-2
    r_max: int | None = None
    maxiter: int = 1000
    combination: str = "rounding"
    scheduling: bool = True
    rng_seed: int = 0
    cross_maxiter: int = 100
    cross_aleph: int | None = None
    tol_relative: bool = False

    def __post_init__(self):
        if not (0.0 < self.theta < 1.0 or not self.scheduling):
            raise ValueError("theta must lie in (0, 1)")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.eps_F > self.eps_G0:
            raise ValueError("eps_F must not exceed eps_G0")
        if self.combination not in ("rounding", "cross"):
            raise ValueError("combination must be 'rounding' or 'cross'")
        if self.maxiter < 1:
            raise ValueError("maxiter must be >= 1")


@dataclass
class IterationRecord:
    """Per-sweep diagnostics."""

    k: int
    rho: float
    eps_G: float
    rank_X: int
    rank_G: int
    cd_eval: CrossDiagnostics | None = None
    cd_comb: CrossDiagnostics | None = None
    gamma_cond: float | None = None
    wall_ms: float = 0.0


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_residual: float
    final_rank: int
    records: list[IterationRecord] = field(default_factory=list)
    total_oracle_samples: int = 0
    total_cross_iterations: int = 0
    wall_time_s: float = 0.0


class SolverDivergence(RuntimeError):
    """Raised when the residual becomes non-finite; carries the partial report."""

    def __init__(self, message, report: SolveReport):
        super().__init__(message)
        self.report = report


def schedule_update(eps_G: float, rho: float, theta: float) -> float:
    """Residual-proportional truncation tolerance: ``theta * rho``, with no
    floor or ceiling."""
    if rho < 0:
        raise ValueError("rho must be >= 0")
    return theta * rho


def _combination_coefficients(gamma: np.ndarray, width: int) -> np.ndarray:
    """Coefficients of the accelerated update over the last ``width``
    map evaluations: ``G_k - sum_i gamma_i (G_{base+i+1} - G_{base+i})``."""
    c = np.zeros(width)
    c[-1] = 1.0
    for i, g in enumerate(gamma):
        c[i] += g
        c[i + 1] -= g
    return c


def combination_compress(
    g_list,
    coeffs,
    warm,
    eps: float,
    r_max: int | None,
    mode: str,
    rng=None,
    cross_maxiter: int = 100,
    cross_aleph: int | None = None,
):
    """Compress ``sum_j coeffs_j G_j`` to tolerance.

    'rounding' concatenates the factors and re-truncates exactly-then-
    approximately; 'cross' samples the combination entrywise through an
    oracle, warm-started with the supplied singular vectors, which is
    cheaper for wide windows.  Returns (matrix, cross diagnostics or None).
    """
    terms = [(float(c), g) for c, g in zip(coeffs, g_list)]
    if mode == "rounding":
        return round_sum(terms, TruncationSpec(eps, r_max)), None
    cfg = CrossConfig(eps=eps, r_max=r_max, aleph_max=cross_aleph, maxiter=cross_maxiter)
    return cross_deim(CombinationOracle(terms), warm[0], warm[1], cfg, rng=rng)


def lraa_solve(problem, x0: FactoredMatrix | None = None, cfg: LrAAConfig = LrAAConfig()):
    """Solve ``G(X) = X`` in factored form with windowed acceleration.

    Returns ``(X, report)``.  Reaching ``maxiter`` yields a report with
    ``converged=False``; a non-finite residual raises
    :class:`SolverDivergence` with the partial report attached.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    if x0 is None:
        x0 = problem.initial_iterate(rng)
    t_start = time.perf_counter()
    records: list[IterationRecord] = []

    def _cross_cfg(eps):
        return CrossConfig(
            eps=eps, r_max=cfg.r_max, aleph_max=cfg.cross_aleph, maxiter=cfg.cross_maxiter
        )

    def _report(converged, iterations, rho, X):
        rep = SolveReport(
            converged=converged,
            iterations=iterations,
            final_residual=float(rho),
            final_rank=X.rank,
            records=records,
            wall_time_s=time.perf_counter() - t_start,
        )
        for rec in records:
            for cd in (rec.cd_eval, rec.cd_comb):
                if cd is not None:
                    rep.total_oracle_samples += cd.samples
                    rep.total_cross_iterations += cd.iterations
        return rep

    eps_G = cfg.eps_G0
    spec_F = TruncationSpec(cfg.eps_F, cfg.r_max)

    t0 = time.perf_counter()
    X = x0
    G0, cd0 = problem.evaluate(X, _cross_cfg(eps_G), warm_U=X.U, warm_V=X.V, rng=rng)
    rho = diff_norm(G0, X)
    records.append(IterationRecord(
        k=0, rho=float(rho), eps_G=eps_G, rank_X=X.rank, rank_G=G0.rank,
        cd_eval=cd0, wall_ms=1e3 * (time.perf_counter() - t0),
    ))
    if not np.isfinite(rho):
        raise SolverDivergence("non-finite residual at the first evaluation", _report(False, 0, rho, X))

    tol = cfg.tol * rho if cfg.tol_relative else cfg.tol
    if cfg.tol_relative and not cfg.scheduling:
        eps_G = cfg.eps_G0 * rho

    gs: deque[FactoredMatrix] = deque(maxlen=cfg.window + 1)
    fs: deque[FactoredMatrix] = deque(maxlen=cfg.window + 1)
    gs.append(G0)
    fs.append(round_sum([(1.0, G0), (-1.0, X)], spec_F))
    X = G0
    if rho < tol:
        return X, _report(True, 0, rho, X)

    for k in range(1, cfg.maxiter + 1):
        t0 = time.perf_counter()
        Gk, cd_eval = problem.evaluate(X, _cross_cfg(eps_G), warm_U=X.U, warm_V=X.V, rng=rng)
        rho = diff_norm(Gk, X)
        rank_X = X.rank
        if not np.isfinite(rho):
            raise SolverDivergence(
                f"non-finite residual at iteration {k}", _report(False, k, rho, X)
            )
        mk = min(cfg.window, k)
        Fk = round_sum([(1.0, Gk), (-1.0, X)], spec_F)
        gs.append(Gk)
        fs.append(Fk)
        fwin = list(fs)[-(mk + 1):]
        deltas = [round_sum([(1.0, fwin[i + 1]), (-1.0, fwin[i])], spec_F) for i in range(mk)]
        gamma, cond = lstsq_lowrank(deltas, Fk)
        coeffs = _combination_coefficients(gamma, mk + 1)
        X_next, cd_comb = combination_compress(
            list(gs)[-(mk + 1):], coeffs, (X.U, X.V), eps_G, cfg.r_max,
            cfg.combination, rng=rng, cross_maxiter=cfg.cross_maxiter,
            cross_aleph=cfg.cross_aleph,
        )
        records.append(IterationRecord(
            k=k, rho=float(rho), eps_G=eps_G, rank_X=rank_X, rank_G=Gk.rank,
            cd_eval=cd_eval, cd_comb=cd_comb, gamma_cond=float(cond),
            wall_ms=1e3 * (time.perf_counter() - t0),
        ))
        if cfg.scheduling:
            eps_G = schedule_update(eps_G, rho, cfg.theta)
        X = X_next
        if rho < tol:
            return X, _report(True, k, rho, X)
    return X, _report(False, cfg.maxiter, rho, X)


def dense_aa_solve(g, x0, window: int = 5, tol: float = 1e-10, maxiter: int = 5000):
    """Windowed acceleration on dense arrays (the full-rank baseline).

    ``g`` maps arrays to arrays of the same shape.  Shares the window and
    combination logic with the factored driver so iteration-count
    comparisons isolate the effect of low-rank compression.  Returns
    ``(x, iterations, residual_history)``.
    """
    x = np.asarray(x0, dtype=np.float64)
    shape = x.shape
    gx = np.asarray(g(x), dtype=np.float64)
    f = (gx - x).ravel()
    residuals = [float(np.linalg.norm(f))]
    gs = deque(maxlen=window + 1)
    fs = deque(maxlen=window + 1)
    gs.append(gx.ravel())
    fs.append(f)
    x = gx
    if residuals[-1] < tol:
        return x, 0, residuals
    for k in range(1, maxiter + 1):
        gx = np.asarray(g(x), dtype=np.float64)
        f = (gx - x).ravel()
        residuals.append(float(np.linalg.norm(f)))
        mk = min(window, k)
        gs.append(gx.ravel())
        fs.append(f)
        fwin = list(fs)[-(mk + 1):]
        D = np.column_stack([fwin[i + 1] - fwin[i] for i in range(mk)])
        gamma = np.linalg.lstsq(D, f, rcond=None)[0]
        coeffs = _combination_coefficients(gamma, mk + 1)
        gwin = list(gs)[-(mk + 1):]
        x_next = np.zeros_like(f)
        for c, gvec in zip(coeffs, gwin):
            x_next += c * gvec
        x = x_next.reshape(shape)
        if residuals[-1] < tol:
            return x, k, residuals
    return x, maxiter, residuals

"""Dense brute-force counterparts of every kernel and problem.

Everything here materializes full matrices and exists solely so tests can
check the low-rank paths against independently written dense formulas.  No
production code imports this module.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.optimize

from .factored import FactoredMatrix
from .problems import Grid2D, MongeAmpereProblem
from .solver import dense_aa_solve

__all__ = [
    "densify",
    "dense_truncated_svd",
    "dense_laplacian_matrix",
    "dense_laplacian_apply",
    "dense_poisson_solve",
    "dense_laplace_g",
    "dense_bratu_g",
    "dense_monge_ampere_g",
    "dense_allen_cahn_residual",
    "dense_allen_cahn_march",
    "dense_fixed_point_run",
    "dense_reference_run",
    "principal_angles",
]

_DENSIFY_CAP = 1_000_000


def densify(X: FactoredMatrix, cap: int = _DENSIFY_CAP) -> np.ndarray:
    """Materialize a factored matrix (guarded by an entry-count cap)."""
    m, n = X.shape
    if m * n > cap:
        raise ValueError(f"refusing to densify {m}x{n} = {m * n} entries (cap {cap})")
    return (X.U * X.S) @ X.V.T


def dense_truncated_svd(A: np.ndarray, eps: float, r_max: int | None = None):
    """Independent truncated SVD: full SVD plus an explicit tail scan.

    Returns ``(U, s, V, rank)`` with the smallest rank whose discarded tail
    is at most ``eps`` in the Frobenius norm, clamped to ``[1, r_max]``.
    """
    U, s, Vh = np.linalg.svd(np.asarray(A, dtype=np.float64), full_matrices=False)
    r = len(s)
    tail = 0.0
    for l in range(len(s) - 1, -1, -1):
        if tail + s[l] ** 2 <= eps**2:
            tail += s[l] ** 2
            r = l
        else:
            break
    if r_max is not None:
        r = min(r, r_max)
    r = max(r, 1)
    return U[:, :r], s[:r], Vh[:r].T, r


def dense_laplacian_matrix(size: int, h: float, periodic: bool = False) -> np.ndarray:
    """The 1-d second-difference matrix ``tridiag(1, -2, 1)/h^2``."""
    L = (np.diag(-2.0 * np.ones(size)) + np.diag(np.ones(size - 1), 1)
         + np.diag(np.ones(size - 1), -1)) / h**2
    if periodic:
        L[0, -1] += 1.0 / h**2
        L[-1, 0] += 1.0 / h**2
    return L


def dense_laplacian_apply(Xd: np.ndarray, grid: Grid2D) -> np.ndarray:
    periodic = grid.kind == "periodic"
    Lx = dense_laplacian_matrix(grid.m, grid.hx, periodic)
    Ly = dense_laplacian_matrix(grid.n, grid.hy, periodic)
    return Lx @ Xd + Xd @ Ly.T


def dense_poisson_solve(Fd: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Solve ``Dxx X + X Dyy^T = F`` as a Sylvester equation."""
    Lx = dense_laplacian_matrix(grid.m, grid.hx)
    Ly = dense_laplacian_matrix(grid.n, grid.hy)
    return sla.solve_sylvester(Lx, Ly.T, Fd)


def dense_laplace_g(Xd: np.ndarray, grid: Grid2D, alpha: float, Fd: np.ndarray) -> np.ndarray:
    return Xd + alpha * (dense_laplacian_apply(Xd, grid) - Fd)


def dense_bratu_g(Xd: np.ndarray, grid: Grid2D, alpha: float, lam: float = 1.0) -> np.ndarray:
    return Xd + alpha * (dense_laplacian_apply(Xd, grid) + lam * np.exp(Xd))


def dense_monge_ampere_g(Xd: np.ndarray, problem: MongeAmpereProblem) -> np.ndarray:
    """Dense update of the monotone scheme, written with padded arrays."""
    g = problem.grid
    xs, ys = g.xs, g.ys
    xpad = g.x0 + np.arange(g.m + 2) * g.hx
    ypad = g.y0 + np.arange(g.n + 2) * g.hy
    P = np.empty((g.m + 2, g.n + 2))
    P[1:-1, 1:-1] = Xd
    P[0, :] = problem.exact_solution(xpad[0], ypad)
    P[-1, :] = problem.exact_solution(xpad[-1], ypad)
    P[:, 0] = problem.exact_solution(xpad, ypad[0])
    P[:, -1] = problem.exact_solution(xpad, ypad[-1])
    a1 = 0.5 * (P[2:, 1:-1] + P[:-2, 1:-1])
    a2 = 0.5 * (P[1:-1, 2:] + P[1:-1, :-2])
    a3 = 0.5 * (P[2:, 2:] + P[:-2, :-2])
    a4 = 0.5 * (P[2:, :-2] + P[:-2, 2:])
    f = problem.forcing(xs[:, None], ys[None, :])
    rad = np.maximum((a1 - a2) ** 2 + 0.25 * (a3 - a4) ** 2 + g.hx**4 * f, 0.0)
    h = 0.5 * (a1 + a2) - 0.5 * np.sqrt(rad)
    return Xd + 0.9 * (h - Xd)


def dense_allen_cahn_residual(Xd, prev, grid: Grid2D, nu: float, dt: float) -> np.ndarray:
    return prev + dt * (nu * dense_laplacian_apply(Xd, grid) + Xd - Xd**3) - Xd


def dense_allen_cahn_march(u0: np.ndarray, grid: Grid2D, nu: float, dt: float,
                           n_steps: int, f_tol: float = 1e-10) -> np.ndarray:
    """Backward Euler with a dense Newton-Krylov inner solve per step."""
    state = np.asarray(u0, dtype=np.float64)
    for _ in range(n_steps):
        prev = state

        def res(x):
            return dense_allen_cahn_residual(x, prev, grid, nu, dt)

        state = scipy.optimize.newton_krylov(res, prev, f_tol=f_tol)
    return state


def dense_fixed_point_run(gmap, x0: np.ndarray, tol: float, maxiter: int = 200_000):
    """Plain dense Picard iteration to tolerance.

    Returns ``(x, iterations, converged)`` with the residual measured as
    ``||g(x) - x||_F``.
    """
    x = np.asarray(x0, dtype=np.float64)
    for k in range(1, maxiter + 1):
        gx = gmap(x)
        if np.linalg.norm(gx - x) < tol:
            return gx, k, True
        x = gx
    return x, maxiter, False


def dense_reference_run(problem_name: str, grid: Grid2D, tol: float, **params):
    """Dense ground-truth runs for desk-scale verification.

    - 'laplace': direct Sylvester solve of the Poisson equation
      (iteration count reported as 0).
    - 'laplace-richardson': dense damped Richardson fixed point.
    - 'laplace-aa': dense windowed acceleration on the same map.
    - 'bratu': dense accelerated run of the Bratu map.
    - 'monge-ampere': dense damped fixed point of the monotone scheme.
    - 'allen-cahn': backward Euler with Newton-Krylov inner solves
      (pass ``u0``, ``nu``, ``dt``, ``n_steps``).

    Returns ``(solution, iterations, converged)``.
    """
    if problem_name == "laplace":
        fx = np.exp(-36.0 * (grid.xs - 0.52) ** 2)
        fy = np.exp(-36.0 * (grid.ys - 0.5) ** 2)
        Fd = -25.0 * np.outer(fx, fy)
        return dense_poisson_solve(Fd, grid), 0, True
    if problem_name in ("laplace-richardson", "laplace-aa"):
        fx = np.exp(-36.0 * (grid.xs - 0.52) ** 2)
        fy = np.exp(-36.0 * (grid.ys - 0.5) ** 2)
        Fd = -25.0 * np.outer(fx, fy)
        alpha = params.get("alpha", 0.1 * min(grid.hx**2, grid.hy**2))
        gmap = lambda X: dense_laplace_g(X, grid, alpha, Fd)
        x0 = params.get("x0", np.zeros((grid.m, grid.n)))
        if problem_name == "laplace-richardson":
            return dense_fixed_point_run(gmap, x0, tol, params.get("maxiter", 200_000))
        x, iters, hist = dense_aa_solve(gmap, x0, window=params.get("window", 5),
                                        tol=tol, maxiter=params.get("maxiter", 5000))
        return x, iters, hist[-1] < tol
    if problem_name == "bratu":
        alpha = params.get("alpha", 0.125 * grid.hx**2)
        lam = params.get("lam", 1.0)
        gmap = lambda X: dense_bratu_g(X, grid, alpha, lam)
        x0 = params.get("x0", np.zeros((grid.m, grid.n)))
        x, iters, hist = dense_aa_solve(gmap, x0, window=params.get("window", 5),
                                        tol=tol, maxiter=params.get("maxiter", 20000))
        return x, iters, hist[-1] < tol
    if problem_name == "monge-ampere":
        problem = MongeAmpereProblem(grid)
        gmap = lambda X: dense_monge_ampere_g(X, problem)
        x0 = params.get("x0")
        if x0 is None:
            x0 = densify(problem.initial_iterate(np.random.default_rng(0)))
        return dense_fixed_point_run(gmap, x0, tol, params.get("maxiter", 500_000))
    if problem_name == "allen-cahn":
        out = dense_allen_cahn_march(params["u0"], grid, params.get("nu", 0.01),
                                     params["dt"], params["n_steps"],
                                     f_tol=params.get("f_tol", 1e-10))
        return out, params["n_steps"], True
    raise ValueError(f"unknown reference problem {problem_name!r}")


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Principal angles between the column spaces of two orthonormal bases."""
    sv = np.linalg.svd(A.T @ B, compute_uv=False)
    return np.arccos(np.clip(sv, -1.0, 1.0))

"""Benchmark matrices and finite-difference fixed-point problems.

Contains the synthetic matrix-approximation benchmarks (Hilbert, a quintic
kink, and their rotating parametric versions), and the PDE fixed-point maps
solved by the low-rank accelerated solver: a Poisson problem via damped
Richardson iteration, the Bratu problem, the elliptic Monge-Ampere equation
(monotone "sqrt" scheme with damping 0.9), and backward-Euler time stepping
for the Allen-Cahn equation.  Each problem exposes the entries of its map
G(X) through a sampling oracle built on the factored form of the current
iterate; entries only ever depend on the local stencil footprint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .cross import CrossConfig, cross_deim
from .expsum import ESPreconditioner, ESWeights, SpectralOperator1D, es_weights_generate
from .factored import (
    FactoredMatrix,
    TruncationSpec,
    compress_factors,
    round_sum,
    truncated_svd_dense,
)
from .oracle import EntryOracle, FunctionOracle

__all__ = [
    "Grid2D",
    "FixedPointProblem",
    "make_test_oracle",
    "laplace_apply",
    "fast_poisson_solve",
    "laplace_problem",
    "bratu_problem",
    "monge_ampere_problem",
    "allen_cahn_problem",
    "allen_cahn_initial_oracle",
    "allen_cahn_march",
    "LaplaceProblem",
    "BratuProblem",
    "MongeAmpereProblem",
    "AllenCahnStepProblem",
    "make_es_preconditioner",
]


@dataclass(frozen=True)
class Grid2D:
    """Equidistant tensor grid on a rectangle.

    ``m, n`` count the owned points per direction: interior points for
    Dirichlet grids (mesh width ``hx = Lx/(m+1)``), all points for periodic
    grids (``hx = Lx/m``).
    """

    m: int
    n: int
    x0: float
    x1: float
    y0: float
    y1: float
    kind: str  # 'dirichlet' | 'periodic'

    def __post_init__(self):
        if self.m < 3 or self.n < 3:
            raise ValueError("need at least 3 points per direction")
        if self.kind not in ("dirichlet", "periodic"):
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("degenerate domain")

    @property
    def hx(self) -> float:
        d = self.x1 - self.x0
        return d / (self.m + 1) if self.kind == "dirichlet" else d / self.m

    @property
    def hy(self) -> float:
        d = self.y1 - self.y0
        return d / (self.n + 1) if self.kind == "dirichlet" else d / self.n

    @property
    def xs(self) -> np.ndarray:
        if self.kind == "dirichlet":
            return self.x0 + (np.arange(self.m) + 1) * self.hx
        return self.x0 + np.arange(self.m) * self.hx

    @property
    def ys(self) -> np.ndarray:
        if self.kind == "dirichlet":
            return self.y0 + (np.arange(self.n) + 1) * self.hy
        return self.y0 + np.arange(self.n) * self.hy

    @classmethod
    def dirichlet(cls, m, n, x0=-1.0, x1=1.0, y0=None, y1=None) -> "Grid2D":
        if y0 is None:
            y0, y1 = x0, x1
        return cls(m, n, x0, x1, y0, y1, "dirichlet")

    @classmethod
    def periodic(cls, m, n, x0=0.0, x1=2.0 * np.pi, y0=None, y1=None) -> "Grid2D":
        if y0 is None:
            y0, y1 = x0, x1
        return cls(m, n, x0, x1, y0, y1, "periodic")


# ----------------------------------------------------------------------
# benchmark matrices
# ----------------------------------------------------------------------

_TEST_DEFAULT_SHAPES = {"G1": (100, 100), "G2": (500, 500), "H1": (500, 500), "H2": (500, 500)}


def make_test_oracle(name: str, shape: tuple[int, int] | None = None, t: float = 0.0) -> EntryOracle:
    """Built-in benchmark matrices.

    - ``G1``: the Hilbert matrix, entries ``1/(i + j + 1)`` (0-based).
    - ``G2``: ``(|x_i + y_j| / 2)^5`` on the uniform grid
      ``x_i = -1 + 2 i/(m-1)``; slow singular value decay from the kink
      along ``x + y = 0``.
    - ``H1``/``H2``: Gaussian / quintic-kink profiles evaluated on
      coordinates ``(-1 + (i+1) h_x, -1 + (j+1) h_y)`` rotated by the angle
      ``2 pi t`` (solid-body rotation; ``h_x = 2/(m+1)``).
    """
    key = name.upper()
    if key not in _TEST_DEFAULT_SHAPES:
        raise ValueError(f"unknown test matrix {name!r}; choose from G1, G2, H1, H2")
    m, n = shape if shape is not None else _TEST_DEFAULT_SHAPES[key]
    if key == "G1":
        return FunctionOracle(m, n, lambda i, j: 1.0 / (i + j + 1.0))
    if key == "G2":
        x = -1.0 + 2.0 * np.arange(m) / (m - 1)
        y = -1.0 + 2.0 * np.arange(n) / (n - 1)
        return FunctionOracle(m, n, lambda i, j: (np.abs(x[i] + y[j]) / 2.0) ** 5)
    hx, hy = 2.0 / (m + 1), 2.0 / (n + 1)
    ax = -1.0 + (np.arange(m) + 1) * hx
    ay = -1.0 + (np.arange(n) + 1) * hy
    c, s = np.cos(2.0 * np.pi * t), np.sin(2.0 * np.pi * t)
    if key == "H1":
        def fn(i, j):
            xr = c * ax[i] + s * ay[j]
            yr = -s * ax[i] + c * ay[j]
            return np.exp(-((xr / 0.3) ** 2 + (yr / 0.1) ** 2))
    else:
        def fn(i, j):
            xr = c * ax[i] + s * ay[j]
            yr = -s * ax[i] + c * ay[j]
            return (np.abs(xr + yr) / 2.0) ** 5
    return FunctionOracle(m, n, fn)


# ----------------------------------------------------------------------
# stencil helpers
# ----------------------------------------------------------------------

def _second_diff_block(B: np.ndarray, h: float, periodic: bool) -> np.ndarray:
    """Second difference along axis 0 of a factor block (zero ghosts for
    the Dirichlet case)."""
    out = -2.0 * B.copy()
    if periodic:
        out += np.roll(B, 1, axis=0) + np.roll(B, -1, axis=0)
    else:
        out[1:] += B[:-1]
        out[:-1] += B[1:]
    return out / h**2


def _row_shifts(block: np.ndarray, h: float, periodic: bool) -> np.ndarray:
    """Second difference along axis 1 (within each sampled row)."""
    out = -2.0 * block.copy()
    if periodic:
        out += np.roll(block, 1, axis=1) + np.roll(block, -1, axis=1)
    else:
        out[:, 1:] += block[:, :-1]
        out[:, :-1] += block[:, 1:]
    return out / h**2


def _gather_rows(X, idxs: np.ndarray, periodic: bool) -> np.ndarray:
    """Rows of X at (possibly out-of-range) indices; Dirichlet ghosts are zero."""
    m, n = X.shape
    if periodic:
        return X.row_block(np.mod(idxs, m))
    out = np.zeros((idxs.size, n))
    valid = (idxs >= 0) & (idxs < m)
    if valid.any():
        out[valid] = X.row_block(idxs[valid])
    return out


def _gather_cols(X, idxs: np.ndarray, periodic: bool) -> np.ndarray:
    m, n = X.shape
    if periodic:
        return X.col_block(np.mod(idxs, n))
    out = np.zeros((m, idxs.size))
    valid = (idxs >= 0) & (idxs < n)
    if valid.any():
        out[:, valid] = X.col_block(idxs[valid])
    return out


def _laplacian_rows(X, rows: np.ndarray, hx: float, hy: float, periodic: bool):
    """Five-point Laplacian of X at the sampled rows.

    Returns (lap_rows, x_rows): both of shape (len(rows), n).
    """
    rows = np.atleast_1d(np.asarray(rows, dtype=np.intp))
    mid = _gather_rows(X, rows, periodic)
    up = _gather_rows(X, rows - 1, periodic)
    down = _gather_rows(X, rows + 1, periodic)
    lap = (up - 2.0 * mid + down) / hx**2 + _row_shifts(mid, hy, periodic)
    return lap, mid


def _laplacian_cols(X, cols: np.ndarray, hx: float, hy: float, periodic: bool):
    cols = np.atleast_1d(np.asarray(cols, dtype=np.intp))
    cen = _gather_cols(X, cols, periodic)
    left = _gather_cols(X, cols - 1, periodic)
    right = _gather_cols(X, cols + 1, periodic)
    lap = (left - 2.0 * cen + right) / hy**2 + _second_diff_block(cen, hx, periodic)
    return lap, cen


class _StencilOracle(EntryOracle):
    """Entry oracle defined by row/column stencil kernels.

    ``row_fn(rows) -> block`` and ``col_fn(cols) -> block`` carry the whole
    problem-specific formula; single entries are read out of a one-row block.
    """

    def __init__(self, nrows, ncols, row_fn, col_fn):
        self.nrows, self.ncols = int(nrows), int(ncols)
        self._row_fn = row_fn
        self._col_fn = col_fn

    def entry(self, i, j):
        return float(self._row_fn(np.asarray([i], dtype=np.intp))[0, j])

    def row_block(self, rows):
        return self._row_fn(np.atleast_1d(np.asarray(rows, dtype=np.intp)))

    def col_block(self, cols):
        return self._col_fn(np.atleast_1d(np.asarray(cols, dtype=np.intp)))


# ----------------------------------------------------------------------
# factored-space Laplacian and fast Poisson solver
# ----------------------------------------------------------------------

def laplace_apply(X: FactoredMatrix, grid: Grid2D) -> FactoredMatrix:
    """Discrete Laplacian ``Dxx X + X Dyy^T`` kept in factored form.

    The 1-d second-difference operators (homogeneous Dirichlet) multiply
    straight into the factors, giving an exact representation of rank at
    most 2r.
    """
    if grid.kind != "dirichlet":
        raise ValueError("factored Laplacian apply expects a Dirichlet grid")
    if X.shape != (grid.m, grid.n):
        raise ValueError(f"iterate shape {X.shape} does not match grid ({grid.m}, {grid.n})")
    US = X.U * X.S
    L = np.hstack([_second_diff_block(US, grid.hx, False), US])
    R = np.hstack([X.V, _second_diff_block(X.V, grid.hy, False)])
    return compress_factors(L, R, TruncationSpec(0.0))


def _dirichlet_eigs(size: int, h: float) -> np.ndarray:
    k = np.arange(1, size + 1)
    return -(4.0 / h**2) * np.sin(np.pi * k / (2.0 * (size + 1))) ** 2


def fast_poisson_solve(
    F: FactoredMatrix, grid: Grid2D, spec: TruncationSpec = TruncationSpec(0.0)
) -> FactoredMatrix:
    """Solve ``Dxx X + X Dyy^T = F`` by fast diagonalization.

    The right-hand side factors are pushed into the sine eigenbasis, the
    eigenvalue-sum division is done there, and the result is compressed
    back.  The division is dense in the transformed space, so this is meant
    for initial iterates and reference solves at moderate grid sizes, not
    for inner-loop use.
    """
    if grid.kind != "dirichlet":
        raise ValueError("fast Poisson solve expects a Dirichlet grid")
    lx = _dirichlet_eigs(grid.m, grid.hx)
    ly = _dirichlet_eigs(grid.n, grid.hy)
    A = scipy.fft.dst(F.U * F.S, type=1, axis=0, norm="ortho")
    B = scipy.fft.dst(F.V, type=1, axis=0, norm="ortho")
    core = (A @ B.T) / (lx[:, None] + ly[None, :])
    X = scipy.fft.idst(scipy.fft.idst(core, type=1, axis=0, norm="ortho"), type=1, axis=1, norm="ortho")
    return truncated_svd_dense(X, spec)


def make_es_preconditioner(
    grid: Grid2D,
    weights: ESWeights | None = None,
    shift: float = 0.0,
    coef: float = 1.0,
) -> ESPreconditioner:
    """Exponential-sum inverse of ``shift*I + coef*(-Laplacian)`` on a grid.

    The identity shift is split evenly between the two 1-d factors so the
    Kronecker-sum exponential identity applies exactly.  When no weights are
    supplied they are generated to cover the operator's spectral ratio.
    """
    opx = SpectralOperator1D(grid.m, grid.hx, grid.kind, shift=shift / 2.0, coef=coef)
    opy = SpectralOperator1D(grid.n, grid.hy, grid.kind, shift=shift / 2.0, coef=coef)
    if weights is None:
        lam_min = float(opx.eigenvalues().min() + opy.eigenvalues().min())
        lam_max = float(opx.eigenvalues().max() + opy.eigenvalues().max())
        ratio = lam_max / lam_min
        n = 40 if ratio < 1e4 else 80
        weights = es_weights_generate(n, ratio * 10.0)
    return ESPreconditioner(weights, opx, opy)


# ----------------------------------------------------------------------
# fixed-point problems
# ----------------------------------------------------------------------

# Tolerance for assembling a Richardson update from already-compressed
# pieces.  The adaptive (scheduled) tolerance belongs to the pieces that
# control rank, i.e. the cross approximation of the nonlinear part and the
# compressed update combination; the final sum must be assembled tightly,
# otherwise an update smaller than the current truncation budget would be
# rounded away entirely and the solver would stall on a false residual.
_ASSEMBLY_EPS = 1e-12


# Relative safety cap on the working tolerances of a preconditioned update
# ``G = X + alpha * M(residual)``.  With a good preconditioner the update
# can be far smaller than the working tolerance (iterate-truncation errors
# feed back into the residual damped by alpha, which is exactly why the
# tolerance can stay loose while the iteration contracts fast), so an
# unchecked absolute tolerance could wipe out a whole piece of the update
# and stall the solver on a false zero residual.  No piece is ever
# compressed coarser than this fraction of its own norm.
_PIECE_REL_CAP = 0.05


def _precond_budget(eps: float, alpha: float, lam_min: float) -> tuple[float, float]:
    """Split a map-evaluation tolerance across a preconditioned update.

    For ``G = X + alpha * M(residual)`` with ``||M|| <= 1/lam_min``, an
    error e in the compressed residual contributes ``alpha * e / lam_min``
    to G, and an error in the compression of ``M(residual)`` contributes
    ``alpha`` times itself.  Splitting the budget evenly keeps the total
    evaluation error at ``eps`` while letting the residual compression run
    much looser than ``eps`` (its norm is larger by roughly ``lam_min/alpha``).
    """
    return 0.5 * eps * lam_min / alpha, 0.5 * eps / alpha


class FixedPointProblem:
    """A nonlinear matrix equation ``G(X) = X`` with sampling access.

    Subclasses provide ``oracle(X)`` giving the entries of G at the current
    iterate; ``evaluate`` produces the low-rank compression of G(X) that
    the solver consumes (by adaptive cross approximation by default, or by
    exact factored algebra where the map permits it).
    """

    name: str = "problem"
    shape: tuple[int, int] = (0, 0)
    grid: Grid2D | None = None
    exact_solution = None  # optional callable (x, y) -> u for error reporting

    def oracle(self, X: FactoredMatrix) -> EntryOracle:
        raise NotImplementedError

    def evaluate(self, X, cfg: CrossConfig, warm_U=None, warm_V=None, rng=None):
        return cross_deim(self.oracle(X), warm_U, warm_V, cfg, rng=rng)

    def initial_iterate(self, rng: np.random.Generator) -> FactoredMatrix:
        return FactoredMatrix.zero(*self.shape)

    def recommended(self) -> dict:
        """Suggested solver settings (keyword arguments of the solver config)."""
        return {}


class LaplaceProblem(FixedPointProblem):
    """Damped (optionally preconditioned) Richardson map for the Poisson
    equation on ``[-1, 1]^2`` with homogeneous Dirichlet conditions.

    ``G(X) = X + alpha * M(Dxx X + X Dyy^T - F)`` with the separable
    Gaussian forcing ``f(x, y) = -25 exp(-36((x-0.52)^2 + (y-0.5)^2))``
    held as an exact rank-1 matrix.  The map is linear, so evaluation works
    entirely in factored algebra; no cross approximation is involved.
    """

    name = "laplace"

    def __init__(self, grid: Grid2D, alpha: float | None = None, preconditioner: ESPreconditioner | None = None):
        if grid.kind != "dirichlet":
            raise ValueError("the Poisson map expects a Dirichlet grid")
        self.grid = grid
        self.shape = (grid.m, grid.n)
        self.preconditioner = preconditioner
        if alpha is None:
            alpha = 1.0 if preconditioner is not None else 0.1 * min(grid.hx**2, grid.hy**2)
        self.alpha = float(alpha)
        fx = np.exp(-36.0 * (grid.xs - 0.52) ** 2)
        fy = np.exp(-36.0 * (grid.ys - 0.5) ** 2)
        self.forcing = FactoredMatrix.rank_one(fx, fy, -25.0)

    def evaluate(self, X, cfg, warm_U=None, warm_V=None, rng=None):
        g = self.grid
        US = X.U * X.S
        res_L = np.hstack([_second_diff_block(US, g.hx, False), US,
                           -(self.forcing.U * self.forcing.S)])
        res_R = np.hstack([X.V, _second_diff_block(X.V, g.hy, False), self.forcing.V])
        if self.preconditioner is None:
            # compress the whole map at the working tolerance: in this slow
            # Richardson regime the update always exceeds the scheduled
            # tolerance, and the truncation is what keeps iterates low rank
            L = np.hstack([US, self.alpha * res_L])
            R = np.hstack([X.V, res_R])
            return compress_factors(L, R, TruncationSpec(cfg.eps, cfg.r_max)), None
        eps_res, eps_M = _precond_budget(cfg.eps, self.alpha, self.preconditioner.lam_min)
        res = compress_factors(res_L, res_R, TruncationSpec(eps_res, cfg.r_max),
                               rel_cap=_PIECE_REL_CAP)
        Mres = self.preconditioner.apply(res, TruncationSpec(eps_M, cfg.r_max),
                                         rel_cap=_PIECE_REL_CAP)
        return round_sum([(1.0, X), (self.alpha, Mres)],
                         TruncationSpec(_ASSEMBLY_EPS, cfg.r_max)), None

    def oracle(self, X):
        if self.preconditioner is not None:
            raise NotImplementedError("entrywise access is only defined for the unpreconditioned map")
        g, a = self.grid, self.alpha
        F = self.forcing

        def row_fn(rows):
            lap, mid = _laplacian_rows(X, rows, g.hx, g.hy, False)
            return mid + a * (lap - F.row_block(rows))

        def col_fn(cols):
            lap, cen = _laplacian_cols(X, cols, g.hx, g.hy, False)
            return cen + a * (lap - F.col_block(cols))

        return _StencilOracle(g.m, g.n, row_fn, col_fn)

    def initial_iterate(self, rng):
        u = rng.standard_normal(self.shape[0])
        v = rng.standard_normal(self.shape[1])
        return FactoredMatrix(
            (u / np.linalg.norm(u))[:, None], np.array([1.0]), (v / np.linalg.norm(v))[:, None]
        )

    def recommended(self):
        if self.preconditioner is not None:
            return {"theta": 0.5, "window": 5, "combination": "rounding", "scheduling": False}
        return {"theta": 0.5, "window": 5, "combination": "rounding"}


class BratuProblem(FixedPointProblem):
    """Damped Richardson map for the Bratu problem on ``[0, 1]^2``.

    ``G(X) = X + alpha * M(Dxx X + X Dyy^T + lam * exp(X))`` with
    homogeneous Dirichlet conditions.  The exponential makes the map
    genuinely nonlinear, so evaluation samples it by cross approximation;
    with a preconditioner the nonlinear part is compressed first, the
    approximate inverse acts on its factors, and the damped update is
    assembled by rounding.
    """

    name = "bratu"

    def __init__(self, grid: Grid2D | None = None, lam: float = 1.0,
                 alpha: float | None = None, preconditioner: ESPreconditioner | None = None):
        if grid is None:
            grid = Grid2D.dirichlet(200, 200, 0.0, 1.0)
        if grid.kind != "dirichlet":
            raise ValueError("the Bratu map expects a Dirichlet grid")
        self.grid = grid
        self.shape = (grid.m, grid.n)
        self.lam = float(lam)
        self.preconditioner = preconditioner
        if alpha is None:
            alpha = 0.1 if preconditioner is not None else 0.125 * grid.hx**2
        self.alpha = float(alpha)

    def _exp_checked(self, block, idxs, by_rows):
        with np.errstate(over="raise"):
            try:
                return np.exp(block)
            except FloatingPointError:
                flat = int(np.argmax(block))
                r, c = np.unravel_index(flat, block.shape)
                i, j = (int(idxs[r]), int(c)) if by_rows else (int(r), int(idxs[c]))
                raise OverflowError(
                    f"exp overflow at entry ({i}, {j}); the iterate has diverged"
                ) from None

    def _inner_oracle(self, X):
        """Entries of the stencil-plus-exponential part ``Dxx X + X Dyy^T + lam e^X``."""
        g, lam = self.grid, self.lam

        def row_fn(rows):
            lap, mid = _laplacian_rows(X, rows, g.hx, g.hy, False)
            return lap + lam * self._exp_checked(mid, rows, True)

        def col_fn(cols):
            lap, cen = _laplacian_cols(X, cols, g.hx, g.hy, False)
            return lap + lam * self._exp_checked(cen, cols, False)

        return _StencilOracle(g.m, g.n, row_fn, col_fn)

    def oracle(self, X):
        if self.preconditioner is not None:
            raise NotImplementedError("entrywise access is only defined for the unpreconditioned map")
        g, a = self.grid, self.alpha
        inner = self._inner_oracle(X)

        def row_fn(rows):
            return X.row_block(rows) + a * inner.row_block(rows)

        def col_fn(cols):
            return X.col_block(cols) + a * inner.col_block(cols)

        return _StencilOracle(g.m, g.n, row_fn, col_fn)

    def evaluate(self, X, cfg, warm_U=None, warm_V=None, rng=None):
        if self.preconditioner is None:
            return cross_deim(self.oracle(X), warm_U, warm_V, cfg, rng=rng)
        eps_res, eps_M = _precond_budget(cfg.eps, self.alpha, self.preconditioner.lam_min)
        inner_cfg = CrossConfig(eps=eps_res, r_max=cfg.r_max, aleph_max=cfg.aleph_max,
                                maxiter=cfg.maxiter, rng_seed=cfg.rng_seed,
                                eps_rel_cap=_PIECE_REL_CAP)
        inner, diag = cross_deim(self._inner_oracle(X), warm_U, warm_V, inner_cfg, rng=rng)
        Mres = self.preconditioner.apply(inner, TruncationSpec(eps_M, cfg.r_max),
                                         rel_cap=_PIECE_REL_CAP)
        return round_sum([(1.0, X), (self.alpha, Mres)], TruncationSpec(_ASSEMBLY_EPS, cfg.r_max)), diag

    def recommended(self):
        return {"theta": 0.9, "window": 5, "combination": "cross", "tol": 1e-6}


class MongeAmpereProblem(FixedPointProblem):
    """Monotone fixed-point scheme for the elliptic Monge-Ampere equation.

    On ``[0, 1]^2`` with ``f = 1/sqrt(x^2 + y^2)`` and Dirichlet data from
    the exact solution ``u = (2 sqrt(2)/3)(x^2 + y^2)^(3/4)``, the update
    takes the convex root of the pointwise quadratic,

        h = (a1 + a2)/2 - sqrt((a1 - a2)^2 + (a3 - a4)^2/4 + h^4 f)/2,

    over averaged opposing neighbor pairs, and relaxes
    ``G = X + 0.9 (h - X)``.  For f >= 0 the radicand is nonnegative in
    exact arithmetic; it is still clamped at zero defensively and any
    clamp events are counted in ``clamp_count``.
    """

    name = "monge-ampere"

    def __init__(self, grid: Grid2D | None = None):
        if grid is None:
            grid = Grid2D.dirichlet(21, 21, 0.0, 1.0)
        if grid.kind != "dirichlet" or abs(grid.hx - grid.hy) > 1e-15:
            raise ValueError("the scheme expects a Dirichlet grid with hx == hy")
        self.grid = grid
        self.shape = (grid.m, grid.n)
        self.clamp_count = 0
        g = grid
        # padded physical coordinates: index p in [0, m+1] maps to x0 + p*h
        self._xpad = g.x0 + np.arange(g.m + 2) * g.hx
        self._ypad = g.y0 + np.arange(g.n + 2) * g.hy

    @staticmethod
    def exact_solution(x, y):
        return (2.0 * math.sqrt(2.0) / 3.0) * (x**2 + y**2) ** 0.75

    def forcing(self, x, y):
        return 1.0 / np.sqrt(x**2 + y**2)

    def _padded_rows(self, X, phys: np.ndarray) -> np.ndarray:
        """Padded solution rows (length n+2) at physical row indices in [0, m+1]."""
        g = self.grid
        out = np.empty((phys.size, g.n + 2))
        interior = (phys >= 1) & (phys <= g.m)
        if interior.any():
            out[interior, 1:-1] = X.row_block(phys[interior] - 1)
            out[interior, 0] = self.exact_solution(self._xpad[phys[interior]], self._ypad[0])
            out[interior, -1] = self.exact_solution(self._xpad[phys[interior]], self._ypad[-1])
        for k in np.nonzero(~interior)[0]:
            out[k] = self.exact_solution(self._xpad[phys[k]], self._ypad)
        return out

    def _padded_cols(self, X, phys: np.ndarray) -> np.ndarray:
        g = self.grid
        out = np.empty((g.m + 2, phys.size))
        interior = (phys >= 1) & (phys <= g.n)
        if interior.any():
            out[1:-1, interior] = X.col_block(phys[interior] - 1)
            out[0, interior] = self.exact_solution(self._xpad[0], self._ypad[phys[interior]])
            out[-1, interior] = self.exact_solution(self._xpad[-1], self._ypad[phys[interior]])
        for k in np.nonzero(~interior)[0]:
            out[:, k] = self.exact_solution(self._xpad, self._ypad[phys[k]])
        return out

    def _update(self, a1, a2, a3, a4, f, xvals):
        h4 = self.grid.hx**4
        rad = (a1 - a2) ** 2 + 0.25 * (a3 - a4) ** 2 + h4 * f
        neg = rad < 0.0
        if neg.any():
            self.clamp_count += int(neg.sum())
            rad = np.maximum(rad, 0.0)
        hval = 0.5 * (a1 + a2) - 0.5 * np.sqrt(rad)
        return xvals + 0.9 * (hval - xvals)

    def oracle(self, X):
        g = self.grid
        xs, ys = g.xs, g.ys

        def row_fn(rows):
            phys = rows + 1
            up = self._padded_rows(X, phys - 1)
            mid = self._padded_rows(X, phys)
            down = self._padded_rows(X, phys + 1)
            a1 = 0.5 * (down[:, 1:-1] + up[:, 1:-1])
            a2 = 0.5 * (mid[:, 2:] + mid[:, :-2])
            a3 = 0.5 * (down[:, 2:] + up[:, :-2])
            a4 = 0.5 * (down[:, :-2] + up[:, 2:])
            f = self.forcing(xs[rows][:, None], ys[None, :])
            return self._update(a1, a2, a3, a4, f, mid[:, 1:-1])

        def col_fn(cols):
            phys = cols + 1
            left = self._padded_cols(X, phys - 1)
            cen = self._padded_cols(X, phys)
            right = self._padded_cols(X, phys + 1)
            a1 = 0.5 * (cen[2:, :] + cen[:-2, :])
            a2 = 0.5 * (right[1:-1, :] + left[1:-1, :])
            a3 = 0.5 * (right[2:, :] + left[:-2, :])
            a4 = 0.5 * (left[2:, :] + right[:-2, :])
            f = self.forcing(xs[:, None], ys[cols][None, :])
            return self._update(a1, a2, a3, a4, f, cen[1:-1, :])

        return _StencilOracle(g.m, g.n, row_fn, col_fn)

    def initial_iterate(self, rng=None):
        """Solution of the linear surrogate ``lap u = sqrt(2 f)`` with the
        same Dirichlet data, truncated at 1e-10."""
        g = self.grid
        rhs = np.sqrt(2.0 * self.forcing(g.xs[:, None], g.ys[None, :]))
        # move the inhomogeneous Dirichlet data to the right-hand side
        bnd = np.zeros_like(rhs)
        bnd[0, :] += self.exact_solution(self._xpad[0], g.ys) / g.hx**2
        bnd[-1, :] += self.exact_solution(self._xpad[-1], g.ys) / g.hx**2
        bnd[:, 0] += self.exact_solution(g.xs, self._ypad[0]) / g.hy**2
        bnd[:, -1] += self.exact_solution(g.xs, self._ypad[-1]) / g.hy**2
        F = truncated_svd_dense(rhs - bnd, TruncationSpec(1e-12 * np.linalg.norm(rhs)))
        return fast_poisson_solve(F, g, TruncationSpec(1e-10))

    def recommended(self):
        return {"theta": 0.25, "window": 5, "combination": "cross"}


class AllenCahnStepProblem(FixedPointProblem):
    """Fixed-point map of one backward-Euler step of the Allen-Cahn equation.

    With the previous state P, the step solves
    ``X = P + dt (nu lap X + X - X^3)``; the map is the unit-relaxation
    preconditioned Richardson update

        G(X) = X + M(P + dt (nu lap X + X - X^3) - X),

    where M approximately inverts the shifted operator ``I - dt nu lap``.
    Entries of the residual are sampled through the periodic stencil and
    the cubic pointwise.
    """

    name = "allen-cahn-step"

    def __init__(self, grid: Grid2D, prev: FactoredMatrix, nu: float, dt: float,
                 preconditioner: ESPreconditioner):
        if grid.kind != "periodic":
            raise ValueError("the Allen-Cahn step expects a periodic grid")
        self.grid = grid
        self.shape = (grid.m, grid.n)
        self.prev = prev
        self.nu = float(nu)
        self.dt = float(dt)
        self.preconditioner = preconditioner

    def oracle(self, X):
        """Entries of the backward-Euler residual (not of G itself: the
        preconditioner is a global operation applied to the compressed
        residual)."""
        g, nu, dt = self.grid, self.nu, self.dt
        prev = self.prev

        def row_fn(rows):
            lap, mid = _laplacian_rows(X, rows, g.hx, g.hy, True)
            return prev.row_block(rows) + dt * (nu * lap + mid - mid**3) - mid

        def col_fn(cols):
            lap, cen = _laplacian_cols(X, cols, g.hx, g.hy, True)
            return prev.col_block(cols) + dt * (nu * lap + cen - cen**3) - cen

        return _StencilOracle(g.m, g.n, row_fn, col_fn)

    def evaluate(self, X, cfg, warm_U=None, warm_V=None, rng=None):
        eps_res, eps_M = _precond_budget(cfg.eps, 1.0, self.preconditioner.lam_min)
        inner_cfg = CrossConfig(eps=eps_res, r_max=cfg.r_max, aleph_max=cfg.aleph_max,
                                maxiter=cfg.maxiter, rng_seed=cfg.rng_seed,
                                eps_rel_cap=_PIECE_REL_CAP)
        res, diag = cross_deim(self.oracle(X), warm_U, warm_V, inner_cfg, rng=rng)
        Mres = self.preconditioner.apply(res, TruncationSpec(eps_M, cfg.r_max),
                                         rel_cap=_PIECE_REL_CAP)
        return round_sum([(1.0, X), (1.0, Mres)], TruncationSpec(_ASSEMBLY_EPS, cfg.r_max)), diag

    def recommended(self):
        return {"theta": 0.5, "window": 5, "combination": "cross"}


# ----------------------------------------------------------------------
# factory functions
# ----------------------------------------------------------------------

def laplace_problem(grid: Grid2D, alpha: float | None = None,
                    preconditioner: ESPreconditioner | None = None) -> LaplaceProblem:
    return LaplaceProblem(grid, alpha=alpha, preconditioner=preconditioner)


def bratu_problem(grid: Grid2D | None = None, lam: float = 1.0, alpha: float | None = None,
                  preconditioner: ESPreconditioner | None = None) -> BratuProblem:
    return BratuProblem(grid, lam=lam, alpha=alpha, preconditioner=preconditioner)


def monge_ampere_problem(grid: Grid2D | None = None) -> MongeAmpereProblem:
    return MongeAmpereProblem(grid)


def allen_cahn_problem(grid: Grid2D, prev: FactoredMatrix, nu: float, dt: float,
                       preconditioner: ESPreconditioner) -> AllenCahnStepProblem:
    return AllenCahnStepProblem(grid, prev, nu, dt, preconditioner)


# ----------------------------------------------------------------------
# Allen-Cahn time marching
# ----------------------------------------------------------------------

def allen_cahn_initial_oracle(grid: Grid2D) -> EntryOracle:
    """Initial profile: a product of Gaussian-of-tan bumps and sine waves,
    damped near the periodic seams by cosecant exponentials."""
    xs, ys = grid.xs, grid.ys

    def fn(i, j):
        x = xs[i]
        y = ys[j]
        with np.errstate(over="ignore", divide="ignore"):
            num = (np.exp(-np.tan(x) ** 2) + np.exp(-np.tan(y) ** 2)) * np.sin(x) * np.sin(y)
            den = 1.0 + np.exp(np.abs(1.0 / np.sin(-x / 2.0))) + np.exp(np.abs(1.0 / np.sin(-y / 2.0)))
        out = num / den
        return np.where(np.isfinite(out), out, 0.0)

    return FunctionOracle(grid.m, grid.n, fn)


@dataclass
class AllenCahnRun:
    """Outcome of a backward-Euler march."""

    final_state: FactoredMatrix
    step_reports: list
    times: np.ndarray


def allen_cahn_march(
    grid: Grid2D,
    cfg,
    nu: float = 0.01,
    dt: float = 0.1,
    n_steps: int = 100,
    weights: ESWeights | None = None,
    initial: FactoredMatrix | None = None,
    keep_reports: bool = True,
) -> AllenCahnRun:
    """March the Allen-Cahn equation with backward Euler and low-rank solves.

    Each step solves its fixed-point equation warm-started from the previous
    state; the initial profile is compressed by cross approximation at a
    tenth of the solver tolerance.  A step failing to converge aborts with
    the step index.
    """
    from .solver import lraa_solve  # deferred to keep module import one-way

    precond = make_es_preconditioner(grid, weights=weights, shift=1.0, coef=dt * nu)
    rng = np.random.default_rng(cfg.rng_seed)
    if initial is None:
        initial, _ = cross_deim(
            allen_cahn_initial_oracle(grid), None, None,
            CrossConfig(eps=0.1 * cfg.tol, maxiter=cfg.cross_maxiter, rng_seed=cfg.rng_seed),
            rng=rng,
        )
    state = initial
    reports = []
    for step in range(1, n_steps + 1):
        problem = AllenCahnStepProblem(grid, state, nu, dt, precond)
        state, report = lraa_solve(problem, x0=state, cfg=cfg)
        if not report.converged:
            raise RuntimeError(
                f"backward-Euler step {step} did not converge within "
                f"{cfg.maxiter} iterations (residual {report.final_residual:.3e})"
            )
        if keep_reports:
            reports.append(report)
    return AllenCahnRun(state, reports, dt * np.arange(1, n_steps + 1))

"""Exponential-sum approximate inverse for Kronecker-sum operators.

For a positive definite operator ``A = Ax (+) Ay`` (Kronecker sum of 1-d
operators, e.g. the discrete Laplacian or its backward-Euler shift), the
inverse is approximated by

    A^{-1} ~ sum_k alpha_k exp(-beta_k Ax) (x) exp(-beta_k Ay),

where the weights (alpha_k, beta_k) approximate 1/lambda on the spectral
interval.  Applied to a factored residual the sum acts on the factors only:
each 1-d exponential is evaluated through the closed-form eigenbasis (sine
basis for Dirichlet second differences, Fourier basis for periodic ones),
and the term sum is compressed back to low rank.  No dense m-by-n matrix
and no dense matrix exponential is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft

from .factored import FactoredMatrix, TruncationSpec, compress_factors

__all__ = [
    "ESWeights",
    "SpectralOperator1D",
    "es_weights_generate",
    "es_weights_load",
    "es_weights_save",
    "es_scale_for_operator",
    "es_apply",
    "ESPreconditioner",
]

# per-term peak contributions below this fraction of the smallest sum value
# are dropped when scaling weights to an operator; far below the achievable
# relative accuracy, so the declared accuracy is unaffected
_TERM_PRUNE = 1e-17


@dataclass(frozen=True)
class ESWeights:
    """Pairs (alpha_k, beta_k) with ``sum_k alpha_k exp(-beta_k x) ~ 1/x``
    on ``[1, interval_bound]``; ``accuracy`` is the measured sup relative
    error on that interval."""

    alpha: np.ndarray
    beta: np.ndarray
    interval_bound: float
    accuracy: float

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.float64)
        if alpha.ndim != 1 or alpha.shape != beta.shape or alpha.size == 0:
            raise ValueError("alpha and beta must be nonempty 1-d arrays of equal length")
        if (alpha <= 0).any() or (beta <= 0).any():
            raise ValueError("all alpha and beta must be positive")
        if self.interval_bound <= 1.0:
            raise ValueError("interval bound must exceed 1")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def n_terms(self) -> int:
        return self.alpha.size


def _measure_accuracy(alpha, beta, r_bound, n_sample=10_000) -> float:
    lam = np.logspace(0.0, np.log10(r_bound), n_sample)
    approx = np.exp(-np.outer(lam, beta)) @ alpha
    return float(np.max(np.abs(approx * lam - 1.0)))


def es_weights_generate(n: int, r_bound: float) -> ESWeights:
    """Sinc-quadrature weights for ``1/x = int_0^inf exp(-x t) dt``.

    Substituting ``t = exp(s)`` and applying the trapezoid rule with step h
    on ``s in [-n h, n h]`` gives nodes ``beta_k = exp(k h)`` and weights
    ``alpha_k = h exp(k h)``.  The step balances the trapezoid
    discretization error ``~exp(-pi^2/h)`` against the truncation error of
    the left tail ``~exp(-(n h - log R))``, which for the relative error
    must cover arguments up to R.  The measured sup relative error on
    ``[1, R]`` is stored in the result.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if r_bound <= 1.0:
        raise ValueError("interval bound must exceed 1")
    logr = np.log(r_bound)
    h = (logr + np.sqrt(logr**2 + 4.0 * np.pi**2 * n)) / (2.0 * n)
    k = np.arange(-n, n + 1, dtype=np.float64)
    beta = np.exp(k * h)
    alpha = h * beta
    acc = _measure_accuracy(alpha, beta, r_bound)
    return ESWeights(alpha, beta, float(r_bound), acc)


def es_weights_save(weights: ESWeights, path) -> None:
    """Write weights in the plain-text format read by :func:`es_weights_load`."""
    lines = [f"{weights.n_terms} {float(weights.interval_bound)!r} {float(weights.accuracy)!r}"]
    for a, b in zip(weights.alpha, weights.beta):
        lines.append(f"{float(a)!r} {float(b)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def es_weights_load(path) -> ESWeights:
    """Read weights from a text file.

    Format: an optional number of ``#`` comment lines anywhere; the first
    data line is ``n R accuracy``; the following n data lines each hold one
    ``alpha beta`` pair.
    """
    path = Path(path)
    header = None
    pairs = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if header is None:
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected header 'n R accuracy'")
                try:
                    header = (int(parts[0]), float(parts[1]), float(parts[2]))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: malformed header: {exc}") from exc
                continue
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'alpha beta'")
            try:
                pairs.append((float(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed pair: {exc}") from exc
    if header is None:
        raise ValueError(f"{path}: missing header line")
    n, r_bound, acc = header
    if len(pairs) != n:
        raise ValueError(f"{path}: header promises {n} pairs, found {len(pairs)}")
    arr = np.asarray(pairs, dtype=np.float64)
    return ESWeights(arr[:, 0], arr[:, 1], r_bound, acc)


@dataclass(frozen=True)
class SpectralOperator1D:
    """A 1-d operator ``shift*I + coef*L`` diagonalized in closed form.

    ``L`` is the positive definite second-difference operator (the negative
    of the usual ``tridiag(1,-2,1)/h^2`` stencil) with either homogeneous
    Dirichlet or periodic boundary treatment.  Exponentials of the operator
    act on factor blocks through the orthonormal sine transform (Dirichlet)
    or the real Fourier transform (periodic).
    """

    size: int
    h: float
    kind: str  # 'dirichlet' | 'periodic'
    shift: float = 0.0
    coef: float = 1.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "periodic"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.size < 3 or self.h <= 0:
            raise ValueError("need size >= 3 and h > 0")

    def stencil_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the positive second-difference part L alone."""
        m, h = self.size, self.h
        if self.kind == "dirichlet":
            k = np.arange(1, m + 1)
            return (4.0 / h**2) * np.sin(np.pi * k / (2.0 * (m + 1))) ** 2
        k = np.arange(m)
        return (4.0 / h**2) * np.sin(np.pi * k / m) ** 2

    def eigenvalues(self) -> np.ndarray:
        return self.shift + self.coef * self.stencil_eigenvalues()

    def transform(self, block: np.ndarray) -> np.ndarray:
        """Map columns of a factor block into the eigenbasis."""
        if self.kind == "dirichlet":
            return scipy.fft.dst(block, type=1, axis=0, norm="ortho")
        return scipy.fft.rfft(block, axis=0)

    def inverse_transform(self, coeffs: np.ndarray) -> np.ndarray:
        if self.kind == "dirichlet":
            return scipy.fft.idst(coeffs, type=1, axis=0, norm="ortho")
        return scipy.fft.irfft(coeffs, n=self.size, axis=0)

    def exp_action(self, ts, block: np.ndarray) -> np.ndarray:
        """Columns ``[exp(-t Op) @ block for t in ts]`` stacked horizontally.

        One forward transform serves all ts; the parameter only scales the
        eigenvalue filter.
        """
        ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
        lam = self.eigenvalues()
        coeffs = self.transform(block)
        if self.kind == "periodic":
            lam = lam[: coeffs.shape[0]]  # filter on the rfft frequencies
        stacked = np.hstack([np.exp(-t * lam)[:, None] * coeffs for t in ts])
        return self.inverse_transform(stacked)


def es_scale_for_operator(weights: ESWeights, lam_min: float, lam_max: float):
    """Rescale weights valid on ``[1, R]`` to a spectral interval.

    Uses ``1/lam = (1/lam_min) * f(lam/lam_min)`` with f = 1/x, which needs
    ``lam_max/lam_min <= R``.  Terms whose peak contribution is negligible
    relative to the smallest sum value are dropped.
    """
    if not (0 < lam_min <= lam_max):
        raise ValueError("need 0 < lam_min <= lam_max")
    ratio = lam_max / lam_min
    if ratio > weights.interval_bound:
        raise ValueError(
            f"spectral ratio {ratio:.3e} exceeds the weights' validity bound "
            f"{weights.interval_bound:.3e}; regenerate with R >= {ratio:.3e}"
        )
    alpha = weights.alpha / lam_min
    beta = weights.beta / lam_min
    keep = alpha * np.exp(-beta * lam_min) >= _TERM_PRUNE / lam_max
    if keep.any():
        alpha, beta = alpha[keep], beta[keep]
    return alpha, beta


def es_apply(
    weights: ESWeights,
    opx: SpectralOperator1D,
    opy: SpectralOperator1D,
    residual: FactoredMatrix,
    spec: TruncationSpec,
    rel_cap: float | None = None,
) -> FactoredMatrix:
    """Apply the exponential-sum approximate inverse to a factored residual.

    Computes ``sum_k alpha_k (exp(-beta_k opx) U S) (exp(-beta_k opy) V)^T``
    with the scaled weights, i.e. an approximation of ``A^{-1} residual``
    for the positive definite Kronecker sum ``A = opx (+) opy``, and
    compresses the term sum back to ``spec`` (with the tolerance capped at
    ``rel_cap`` times the norm of the sum when given).
    """
    if residual.shape != (opx.size, opy.size):
        raise ValueError(
            f"residual shape {residual.shape} does not match operators "
            f"({opx.size}, {opy.size})"
        )
    lam_min = float(opx.eigenvalues().min() + opy.eigenvalues().min())
    lam_max = float(opx.eigenvalues().max() + opy.eigenvalues().max())
    alpha, beta = es_scale_for_operator(weights, lam_min, lam_max)
    L = opx.exp_action(beta, residual.U * residual.S)
    R = opy.exp_action(beta, residual.V)
    r = residual.rank
    for k, a in enumerate(alpha):
        L[:, k * r : (k + 1) * r] *= a
    return compress_factors(L, R, spec, rel_cap=rel_cap)


@dataclass(frozen=True)
class ESPreconditioner:
    """Bound exponential-sum inverse for one Kronecker-sum operator."""

    weights: ESWeights
    opx: SpectralOperator1D
    opy: SpectralOperator1D

    def __post_init__(self):
        es_scale_for_operator(self.weights, self.lam_min, self.lam_max)  # validity check

    @property
    def lam_min(self) -> float:
        """Smallest eigenvalue of the operator; ``1/lam_min`` bounds the
        norm of the approximate inverse (how much it damps a residual)."""
        return float(self.opx.eigenvalues().min() + self.opy.eigenvalues().min())

    @property
    def lam_max(self) -> float:
        return float(self.opx.eigenvalues().max() + self.opy.eigenvalues().max())

    def apply(self, residual: FactoredMatrix, spec: TruncationSpec,
              rel_cap: float | None = None) -> FactoredMatrix:
        return es_apply(self.weights, self.opx, self.opy, residual, spec, rel_cap=rel_cap)

"""Symmetric eigendecomposition, hard-threshold rank estimation, and
truncated Moore-Penrose pseudoinversion.

Rank is estimated by counting eigenvalues at or above the absolute cutoff
n**(-b).  The same cutoff drives the truncated pseudoinverse: eigenvalues
below it are zeroed before inverting, which keeps the estimated rank of the
truncated matrix equal to the estimated rank of its source and makes the
pseudoinverse estimate consistent despite the discontinuity of the
Moore-Penrose inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    InvalidArgument,
    InvalidMatrix,
    InvalidSampleSize,
    NotPSD,
)

#: Default hard-threshold exponent; the cutoff applied to eigenvalues is
#: n**(-b).  Exposed as a knob because the best data-driven choice is an
#: open tuning question.
DEFAULT_B = 0.99


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues sorted descending with matching orthonormal eigenvectors.

    Column ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q, lam = self.eigenvectors, self.eigenvalues
        return (q * lam) @ q.T


@dataclass(frozen=True)
class RankEstimate:
    """Count of eigenvalues clearing the n**(-b) cutoff."""

    rank: int
    threshold: float
    eigenvalues_kept: np.ndarray
    b: float


@dataclass(frozen=True)
class TruncatedPinv:
    """Pseudoinverse of a spectrally truncated PSD matrix.

    ``truncated_source`` is the input with sub-cutoff eigenvalues zeroed;
    ``matrix`` is its exact Moore-Penrose inverse (reciprocal eigenvalues on
    the kept spectrum, zero elsewhere).
    """

    matrix: np.ndarray
    rank: int
    truncated_source: np.ndarray


def _as_square(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix(f"{name} contains non-finite entries")
    return arr


def sym_eig(m) -> SpectralDecomposition:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Symmetry is enforced by averaging (M + M') / 2 first, since matrices
    assembled from Jacobian products are symmetric only up to round-off.
    """
    arr = _as_square(m)
    sym = 0.5 * (arr + arr.T)
    vals, vecs = np.linalg.eigh(sym)
    # eigh returns ascending order
    return SpectralDecomposition(vals[::-1].copy(), vecs[:, ::-1].copy())


def _threshold(n: int, b: float) -> float:
    if n < 2:
        raise InvalidSampleSize(f"sample size must be >= 2, got {n}")
    if not 0.0 < b < 1.0:
        raise InvalidArgument(f"threshold exponent b must lie in (0, 1), got {b}")
    return float(n) ** (-b)


def _clipped_spectrum(m, n: int, b: float) -> tuple[SpectralDecomposition, float]:
    thr = _threshold(n, b)
    dec = sym_eig(m)
    smallest = dec.eigenvalues[-1]
    if smallest < -thr:
        raise NotPSD(
            f"eigenvalue {smallest:.3e} is below -{thr:.3e}; input is not "
            "positive semi-definite"
        )
    clipped = np.clip(dec.eigenvalues, 0.0, None)
    return SpectralDecomposition(clipped, dec.eigenvectors), thr


def estimate_rank(m, n: int, b: float = DEFAULT_B) -> RankEstimate:
    """Estimate the rank of a PSD matrix by hard thresholding at n**(-b).

    Eigenvalues in [-n**(-b), 0) are treated as round-off and clipped to
    zero; anything more negative raises :class:`NotPSD`.
    """
    dec, thr = _clipped_spectrum(m, n, b)
    kept = dec.eigenvalues[dec.eigenvalues >= thr]
    return RankEstimate(rank=int(kept.size), threshold=thr,
                        eigenvalues_kept=kept, b=b)


def truncated_pinv(a, n: int, b: float = DEFAULT_B) -> TruncatedPinv:
    """Spectrally truncated Moore-Penrose pseudoinverse of a PSD matrix.

    Eigenvalues below n**(-b) are set to zero, giving the truncated source
    matrix; the returned inverse places reciprocals on the kept spectrum.
    The truncation pins the estimated rank, which is what makes a plug-in
    pseudoinverse of a noisy matrix consistent.
    """
    dec, thr = _clipped_spectrum(a, n, b)
    keep = dec.eigenvalues >= thr
    kept_vals = np.where(keep, dec.eigenvalues, 0.0)
    inv_vals = np.zeros_like(kept_vals)
    inv_vals[keep] = 1.0 / dec.eigenvalues[keep]
    q = dec.eigenvectors
    source = (q * kept_vals) @ q.T
    w = (q * inv_vals) @ q.T
    return TruncatedPinv(matrix=0.5 * (w + w.T), rank=int(keep.sum()),
                         truncated_source=0.5 * (source + source.T))


def quadratic_form(v, w) -> float:
    """Evaluate v' W v."""
    vec = np.asarray(v, dtype=float).reshape(-1)
    mat = _as_square(w, "weight matrix")
    if mat.shape[0] != vec.size:
        raise DimensionError(
            f"vector of length {vec.size} incompatible with "
            f"{mat.shape[0]}x{mat.shape[1]} matrix"
        )
    return float(vec @ mat @ vec)


def spectral_norm_in_range(a, lo: float = 1e-4, hi: float = 1e4) -> bool:
    """Whether the spectral norm of a symmetric matrix falls in [lo, hi].

    The hard threshold is applied to raw eigenvalues with no scale
    normalization, so callers should warn when this returns False: an
    absolute cutoff is only meaningful for matrices of moderate scale.
    """
    dec = sym_eig(a)
    norm = float(np.max(np.abs(dec.eigenvalues))) if dec.eigenvalues.size else 0.0
    return lo <= norm <= hi

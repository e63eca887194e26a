"""Local-power analysis under root-n alternatives.

Against beta0 + delta/sqrt(n) the statistic is noncentral chi-squared; the
noncentrality is the quadratic form of delta in grad_beta(g)' W grad_beta(g),
so the direction of maximum local power is that matrix's top eigenvector,
the squared components of the (unit) direction are the relative weights of
the interest coordinates, and deviations in the null space of
W grad_beta(g) are locally undetectable.

All functions take the weighting matrix as an argument.  When the model
carries nuisance parameters, the weight that actually governs power is the
one net of nuisance refitting: profiling the nuisance out removes the part
of any drift lying in the span of its Jacobian, which
:func:`nuisance_projected_weight` computes.  Simulated rejection rates
match the noncentral prediction under the projected weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dist
from .errors import DimensionError, InvalidArgument
from .linalg import DEFAULT_B, estimate_rank, sym_eig
from .model import StructuralModel, jac_beta

#: Eigenvalue gap below which the leading power direction is reported as a
#: multi-dimensional eigenspace rather than a single vector.
EIGENVALUE_TIE_TOL = 1e-10


@dataclass(frozen=True)
class PowerReport:
    """Summary of the local-power geometry at a point.

    ``predicted_power`` maps a deviation scale c to the power against
    beta0 + c * delta_star / sqrt(n).  ``top_eigenspace_dim`` flags ties in
    the leading eigenvalue (the argmax direction is then a subspace and the
    reported vector is the deterministic representative).
    """

    delta_star: np.ndarray
    k_star: float
    relative_weights: np.ndarray
    trivial_dim: int
    predicted_power: dict
    top_eigenspace_dim: int = 1
    all_trivial: bool = False

    def to_dict(self) -> dict:
        return {
            "delta_star": self.delta_star.tolist(),
            "k_star": self.k_star,
            "relative_weights": self.relative_weights.tolist(),
            "trivial_dim": self.trivial_dim,
            "predicted_power": {str(c): v for c, v in self.predicted_power.items()},
            "top_eigenspace_dim": self.top_eigenspace_dim,
            "all_trivial": self.all_trivial,
        }


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    for x in vec:
        if abs(x) > 1e-12:
            return vec if x > 0.0 else -vec
    return vec


def _power_matrix(model, theta0, alpha0, beta0, weight) -> np.ndarray:
    b = jac_beta(model, theta0, alpha0, beta0)
    w = np.asarray(weight, dtype=float)
    if w.shape != (b.shape[0], b.shape[0]):
        raise DimensionError(
            f"weight shape {w.shape} incompatible with Jacobian rows {b.shape[0]}"
        )
    return b.T @ w @ b


def max_power_direction(model: StructuralModel, theta0, alpha0, beta0,
                        weight) -> tuple[np.ndarray, float]:
    """Leading eigenpair of grad_beta(g)' W grad_beta(g).

    The sign is fixed so the first nonzero component is positive.  A zero
    matrix means every direction is locally undetectable; the eigenvalue is
    then 0 and the returned direction is the first coordinate axis.
    """
    mat = _power_matrix(model, theta0, alpha0, beta0, weight)
    dec = sym_eig(mat)
    k_star = float(max(dec.eigenvalues[0], 0.0))
    if k_star == 0.0:
        direction = np.zeros(model.dims.p)
        direction[0] = 1.0
        return direction, 0.0
    return _fix_sign(dec.eigenvectors[:, 0].copy()), k_star


def local_power(delta, model: StructuralModel, theta0, alpha0, beta0, weight,
                df: int, tau: float) -> float:
    """Asymptotic power against the alternative beta0 + delta/sqrt(n).

    Equals tau exactly when delta lies in the null space of
    W grad_beta(g), since the noncentrality is then zero.
    """
    if not 0.0 < tau < 1.0:
        raise InvalidArgument(f"significance level must lie in (0, 1), got {tau}")
    delta = np.asarray(delta, dtype=float).reshape(-1)
    if delta.size != model.dims.p:
        raise DimensionError(
            f"delta has length {delta.size}, model expects {model.dims.p}"
        )
    mat = _power_matrix(model, theta0, alpha0, beta0, weight)
    k = max(float(delta @ mat @ delta), 0.0)
    critical = dist.chisq_quantile(1.0 - tau, df)
    return 1.0 - dist.noncentral_chisq_cdf(critical, df, k)


def trivial_power_dim(weight, grad_beta, n: int, b: float = DEFAULT_B) -> int:
    """Dimension of the locally undetectable subspace: p - rank(W grad_beta).

    The rank uses the same hard threshold as the rest of the pipeline,
    applied to the Gram matrix of W grad_beta rescaled to unit spectral
    norm so the absolute cutoff acts on relative eigenvalue size.
    """
    w = np.asarray(weight, dtype=float)
    gb = np.asarray(grad_beta, dtype=float)
    if gb.ndim != 2 or w.shape[1] != gb.shape[0]:
        raise DimensionError(
            f"weight {w.shape} and Jacobian {gb.shape} are not conformable"
        )
    p = gb.shape[1]
    wb = w @ gb
    gram = wb.T @ wb
    top = float(np.max(np.abs(sym_eig(gram).eigenvalues)))
    if top <= 0.0:
        return p
    rank = estimate_rank(gram / top, n, b).rank
    return p - rank


def nuisance_projected_weight(weight, grad_alpha) -> np.ndarray:
    """Part of the weight that survives profiling the nuisance out.

    W - W A (A' W A)^+ A' W with A the nuisance Jacobian: drift components
    inside span(A) are absorbed by the refit and contribute nothing to the
    statistic, so power predictions for models with nuisance parameters
    should use this projected matrix as the effective weight.
    """
    w = np.asarray(weight, dtype=float)
    a = np.asarray(grad_alpha, dtype=float)
    if a.ndim != 2 or a.shape[0] != w.shape[0]:
        raise DimensionError(
            f"weight {w.shape} and nuisance Jacobian {a.shape} are not conformable"
        )
    if a.shape[1] == 0:
        return 0.5 * (w + w.T)
    wa = w @ a
    core = np.linalg.pinv(a.T @ wa, hermitian=True)
    projected = w - wa @ core @ wa.T
    return 0.5 * (projected + projected.T)


def power_report(model: StructuralModel, theta0, alpha0, beta0, weight,
                 df: int, tau: float, n: int, b: float = DEFAULT_B,
                 scales=(0.5, 1.0, 2.0, 4.0, 8.0)) -> PowerReport:
    """Full local-power summary at a point, under the supplied weight."""
    mat = _power_matrix(model, theta0, alpha0, beta0, weight)
    dec = sym_eig(mat)
    k_star = float(max(dec.eigenvalues[0], 0.0))
    all_trivial = k_star == 0.0
    if all_trivial:
        delta = np.zeros(model.dims.p)
        delta[0] = 1.0
        tie_dim = model.dims.p
    else:
        delta = _fix_sign(dec.eigenvectors[:, 0].copy())
        gap = np.abs(dec.eigenvalues - dec.eigenvalues[0])
        tie_dim = int(np.sum(gap <= EIGENVALUE_TIE_TOL * max(1.0, k_star)))
    critical = dist.chisq_quantile(1.0 - tau, df)
    predicted = {
        float(c): 1.0 - dist.noncentral_chisq_cdf(critical, df, (c ** 2) * k_star)
        for c in scales
    }
    gb = jac_beta(model, theta0, alpha0, beta0)
    return PowerReport(
        delta_star=delta,
        k_star=k_star,
        relative_weights=delta ** 2,
        trivial_dim=trivial_power_dim(weight, gb, n, b),
        predicted_power=predicted,
        top_eigenspace_dim=tie_dim,
        all_trivial=all_trivial,
    )

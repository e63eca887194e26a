"""The robust minimum-distance test pipeline, comparator tests, and
confidence intervals by test inversion.

A test of beta = beta0 runs in two passes.  Pass one profiles the nuisance
out under an identity weight; the fitted point anchors the derivative of
the structural map in the reduced-form argument, from which the optimal
weighting matrix is built as the truncated pseudoinverse of the sandwiched
covariance.  Pass two re-profiles under that weight, and the statistic is
n times the weighted squared distance at the refit.  Its null distribution
is chi-squared with degrees of freedom equal to the covariance rank minus
the nuisance-Jacobian rank, both estimated by eigenvalue hard thresholding,
so no prior knowledge of the model's identification status is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import dist
from .errors import DegreesOfFreedomError, DimensionError, InvalidArgument
from .linalg import (
    DEFAULT_B,
    estimate_rank,
    spectral_norm_in_range,
    sym_eig,
    truncated_pinv,
)
from .model import ModelDims, StructuralModel, jac_alpha, jac_beta, jac_theta
from .solver import RidgeSolution, default_gcv_grid, minimize_ridge, select_lambda_gcv


@dataclass(frozen=True)
class ReducedFormEstimate:
    """Asymptotically normal reduced-form estimate: point, covariance, n."""

    theta_hat: np.ndarray
    sigma_hat: np.ndarray
    n: int

    def __post_init__(self):
        theta = np.asarray(self.theta_hat, dtype=float).reshape(-1)
        sigma = np.asarray(self.sigma_hat, dtype=float)
        if sigma.shape != (theta.size, theta.size):
            raise DimensionError(
                f"covariance shape {sigma.shape} does not match theta_hat "
                f"of length {theta.size}"
            )
        if not np.all(np.isfinite(theta)) or not np.all(np.isfinite(sigma)):
            raise InvalidArgument("reduced-form estimate contains non-finite values")
        if np.max(np.abs(sigma - sigma.T), initial=0.0) > 1e-10:
            raise InvalidArgument("sigma_hat must be symmetric within 1e-10")
        if self.n < 2:
            raise InvalidArgument(f"sample size must be >= 2, got {self.n}")
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "sigma_hat", 0.5 * (sigma + sigma.T))

    @property
    def m(self) -> int:
        return self.theta_hat.size


@dataclass(frozen=True)
class TestOptions:
    """Knobs of the test pipeline.

    lambda_mode "gcv" picks the ridge penalty by generalized
    cross-validation on ``gcv_grid`` (default grid when None); "fixed" uses
    ``lambda_value`` or 1/n.  The penalty is chosen once, on the identity-
    weight pass, and reused in the second pass.
    """

    b: float = DEFAULT_B
    restarts: int = 8
    seed: int = 0
    lambda_mode: str = "gcv"
    lambda_value: float | None = None
    gcv_grid: Sequence[float] | None = None
    beta_bounds: np.ndarray | None = None
    strict_ci: bool = False

    def __post_init__(self):
        if self.lambda_mode not in ("gcv", "fixed"):
            raise InvalidArgument("lambda_mode must be 'gcv' or 'fixed'")


@dataclass(frozen=True)
class PipelineResult:
    """Everything the two-pass profile produces, before any critical value."""

    statistic: float
    r_sigma_hat: int
    r_alpha_hat: int
    alpha_hat: np.ndarray
    w_hat: np.ndarray
    lambda_used: float
    min_singular_imdg: float
    first_pass: RidgeSolution
    second_pass: RidgeSolution
    warnings: tuple = ()


@dataclass(frozen=True)
class RobustTestResult:
    """Decision record of the robust (or oracle) test."""

    statistic: float
    r_sigma_hat: int
    r_alpha_hat: int
    df_hat: int
    critical_value: float
    p_value: float
    reject: bool
    alpha_hat: np.ndarray
    w_hat: np.ndarray
    lambda_used: float
    tau: float
    min_singular_imdg: float
    warnings: tuple = ()

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "r_sigma_hat": self.r_sigma_hat,
            "r_alpha_hat": self.r_alpha_hat,
            "df_hat": self.df_hat,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "reject": bool(self.reject),
            "alpha_hat": np.asarray(self.alpha_hat).tolist(),
            "lambda_used": self.lambda_used,
            "tau": self.tau,
            "min_singular_imdg": self.min_singular_imdg,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class TTestResult:
    """Wald-style comparator based on joint estimation of (alpha, beta)."""

    beta_hat: np.ndarray
    std_err: np.ndarray
    t_stats: np.ndarray
    reject: np.ndarray
    degenerate: bool
    alpha_hat: np.ndarray
    tau: float

    @property
    def reject_any(self) -> bool:
        return bool(np.any(self.reject))

    def to_dict(self) -> dict:
        return {
            "beta_hat": np.asarray(self.beta_hat).tolist(),
            "std_err": np.asarray(self.std_err).tolist(),
            "t_stats": np.asarray(self.t_stats).tolist(),
            "reject": np.asarray(self.reject).astype(bool).tolist(),
            "degenerate": self.degenerate,
            "alpha_hat": np.asarray(self.alpha_hat).tolist(),
            "tau": self.tau,
        }


@dataclass(frozen=True)
class CiResult:
    """Grid inversion output: accepted points and their convex hull."""

    beta_grid: np.ndarray
    accepted: np.ndarray
    p_values: np.ndarray
    lower: float | None
    upper: float | None
    tau: float

    def to_dict(self) -> dict:
        return {
            "beta_grid": self.beta_grid.tolist(),
            "accepted": self.accepted.tolist(),
            "p_values": self.p_values.tolist(),
            "lower": self.lower,
            "upper": self.upper,
            "tau": self.tau,
        }


def _check_inputs(model: StructuralModel, rf: ReducedFormEstimate, beta0):
    beta0 = np.asarray(beta0, dtype=float).reshape(-1)
    if rf.m != model.dims.m:
        raise DimensionError(
            f"reduced form has dimension {rf.m}, model expects {model.dims.m}"
        )
    if beta0.size != model.dims.p:
        raise DimensionError(
            f"beta0 has length {beta0.size}, model expects {model.dims.p}"
        )
    return beta0


def _resolve_lambda(model, rf, beta0, opts: TestOptions) -> float:
    if opts.lambda_mode == "fixed":
        return float(opts.lambda_value) if opts.lambda_value is not None else 1.0 / rf.n
    grid = opts.gcv_grid
    if grid is None:
        grid = default_gcv_grid(np.eye(rf.m), rf.m)
    return select_lambda_gcv(
        model, rf.theta_hat, np.eye(rf.m), beta0, grid,
        n=rf.n, seed=opts.seed, restarts=opts.restarts,
    )


def run_pipeline(model: StructuralModel, rf: ReducedFormEstimate, beta0,
                 opts: TestOptions | None = None) -> PipelineResult:
    """Two-pass profile producing the statistic and both rank estimates.

    Shared by the robust and oracle tests, which differ only in the degrees
    of freedom used for the critical value.
    """
    opts = opts or TestOptions()
    beta0 = _check_inputs(model, rf, beta0)
    m, n = rf.m, rf.n
    notes: list[str] = []

    lam = _resolve_lambda(model, rf, beta0, opts)
    first = minimize_ridge(
        model, rf.theta_hat, np.eye(m), beta0, lam,
        n=n, restarts=opts.restarts, seed=opts.seed,
    )

    d_theta = jac_theta(model, rf.theta_hat, first.alpha_hat, beta0)
    imdg = np.eye(m) - d_theta
    min_sv = float(np.linalg.svd(imdg, compute_uv=False)[-1])
    if min_sv < 1e-8:
        notes.append(
            f"I - grad_theta(g) is numerically singular (min sv {min_sv:.2e}); "
            "the local identification condition for the reduced form may fail"
        )

    r_sigma = estimate_rank(rf.sigma_hat, n, opts.b).rank
    sandwich = imdg @ rf.sigma_hat @ imdg.T
    if not spectral_norm_in_range(sandwich):
        notes.append(
            "sandwiched covariance has spectral norm outside [1e-4, 1e4]; "
            "the absolute rank cutoff n**(-b) is scale-sensitive there"
        )
    pinv = truncated_pinv(sandwich, n, opts.b)
    w_hat = pinv.matrix

    # the reweighted pass starts at the identity-weight fit; a light
    # multistart guards against the reweighting moving the basin
    second = minimize_ridge(
        model, rf.theta_hat, w_hat, beta0, lam,
        n=n, restarts=max(2, opts.restarts // 2), seed=opts.seed + 1,
        warm_start=first.alpha_hat,
    )
    d_alpha = jac_alpha(model, rf.theta_hat, second.alpha_hat, beta0)
    r_alpha = estimate_rank(d_alpha @ d_alpha.T, n, opts.b).rank

    return PipelineResult(
        statistic=second.objective,
        r_sigma_hat=r_sigma,
        r_alpha_hat=r_alpha,
        alpha_hat=second.alpha_hat,
        w_hat=w_hat,
        lambda_used=lam,
        min_singular_imdg=min_sv,
        first_pass=first,
        second_pass=second,
        warnings=tuple(notes),
    )


def _decide(state: PipelineResult, df: int, tau: float) -> RobustTestResult:
    critical = dist.chisq_quantile(1.0 - tau, df)
    p_value = 1.0 - dist.chisq_cdf(state.statistic, df)
    return RobustTestResult(
        statistic=state.statistic,
        r_sigma_hat=state.r_sigma_hat,
        r_alpha_hat=state.r_alpha_hat,
        df_hat=df,
        critical_value=critical,
        p_value=p_value,
        reject=bool(state.statistic > critical),
        alpha_hat=state.alpha_hat,
        w_hat=state.w_hat,
        lambda_used=state.lambda_used,
        tau=tau,
        min_singular_imdg=state.min_singular_imdg,
        warnings=state.warnings,
    )


def robust_test(model: StructuralModel, rf: ReducedFormEstimate, beta0,
                tau: float = 0.05, opts: TestOptions | None = None) -> RobustTestResult:
    """Test beta = beta0 with data-estimated degrees of freedom."""
    if not 0.0 < tau < 1.0:
        raise InvalidArgument(f"significance level must lie in (0, 1), got {tau}")
    state = run_pipeline(model, rf, beta0, opts)
    df = state.r_sigma_hat - state.r_alpha_hat
    if df <= 0:
        raise DegreesOfFreedomError(
            f"estimated degrees of freedom {df} (covariance rank "
            f"{state.r_sigma_hat}, nuisance-Jacobian rank {state.r_alpha_hat}); "
            "the covariance rank must exceed the Jacobian rank"
        )
    return _decide(state, df, tau)


def oracle_test(model: StructuralModel, rf: ReducedFormEstimate, beta0,
                tau: float = 0.05, d: int = 1,
                opts: TestOptions | None = None) -> RobustTestResult:
    """Same pipeline as :func:`robust_test` but with known degrees of freedom."""
    if not 0.0 < tau < 1.0:
        raise InvalidArgument(f"significance level must lie in (0, 1), got {tau}")
    if not 1 <= d <= rf.m:
        raise InvalidArgument(f"degrees of freedom must lie in [1, {rf.m}], got {d}")
    state = run_pipeline(model, rf, beta0, opts)
    return _decide(state, int(d), tau)


# ---------------------------------------------------------------------------
# Wald-style comparator
# ---------------------------------------------------------------------------

def _default_beta_bounds(beta0: np.ndarray) -> np.ndarray:
    span = 10.0 * (1.0 + np.abs(beta0))
    return np.column_stack([beta0 - span, beta0 + span])


def _joint_fit(model, rf, weight, beta0, bounds, restarts, seed, warm=None):
    """Unpenalized minimum-distance fit over (alpha, beta) jointly.

    Reuses the ridge solver machinery by treating (alpha, beta) as one
    nuisance block of an auxiliary model with no interest parameter left.
    """
    q, p = model.dims.q, model.dims.p

    def fused(theta, psi, _unused):
        a, b = psi[:q], psi[q:]
        if model.g_and_jac_alpha is not None:
            val, ja = model.g_and_jac_alpha(theta, a, b)
        else:
            val = model.g(theta, a, b)
            ja = jac_alpha(model, theta, a, b)
        return val, np.hstack([ja, jac_beta(model, theta, a, b)])

    joint = StructuralModel(
        dims=ModelDims(m=model.dims.m, q=q + p, p=1),
        g=lambda theta, psi, _unused: model.g(theta, psi[:q], psi[q:]),
        alpha_bounds=bounds,
        jac_alpha=lambda theta, psi, _unused: fused(theta, psi, _unused)[1],
        g_and_jac_alpha=fused,
        fd_step=model.fd_step,
        name=model.name + "_joint",
    )
    sol = minimize_ridge(
        joint, rf.theta_hat, weight, np.zeros(1), 0.0,
        n=rf.n, restarts=restarts, seed=seed, warm_start=warm,
    )
    return sol.alpha_hat[:q], sol.alpha_hat[q:]


def t_test(model: StructuralModel, rf: ReducedFormEstimate, beta0,
           tau: float = 0.05, opts: TestOptions | None = None,
           warm_start=None) -> TTestResult:
    """Per-coordinate Wald test from the joint minimum-distance fit.

    The variance of the fitted interest block is read off the pseudoinverse
    of G'WG, with G the stacked nuisance and interest Jacobians and W the
    same truncated-pseudoinverse weight the robust statistic uses; under
    point identification this is the standard sandwich-free formula.  A
    numerically singular G'WG is reported through the ``degenerate`` flag
    rather than raised: failing that way is precisely what motivates the
    robust test.

    ``warm_start`` optionally seeds the first joint fit with a (q + p)
    point, say the profiled nuisance from a robust test on the same data.
    """
    opts = opts or TestOptions()
    if not 0.0 < tau < 1.0:
        raise InvalidArgument(f"significance level must lie in (0, 1), got {tau}")
    beta0 = _check_inputs(model, rf, beta0)
    m, q, p = rf.m, model.dims.q, model.dims.p
    if q + p > m:
        raise InvalidArgument(
            f"joint estimation needs q + p <= m, got {q} + {p} > {m}"
        )
    beta_bounds = opts.beta_bounds
    if beta_bounds is None:
        beta_bounds = _default_beta_bounds(beta0)
    bounds = np.vstack([model.alpha_bounds,
                        np.asarray(beta_bounds, dtype=float).reshape(p, 2)])

    pass1_restarts = opts.restarts if warm_start is None else max(3, opts.restarts // 2)
    alpha1, beta1 = _joint_fit(
        model, rf, np.eye(m), beta0, bounds, pass1_restarts, opts.seed + 101,
        warm=warm_start,
    )
    imdg = np.eye(m) - jac_theta(model, rf.theta_hat, alpha1, beta1)
    w_hat = truncated_pinv(imdg @ rf.sigma_hat @ imdg.T, rf.n, opts.b).matrix
    # the reweighted pass starts at the first-pass fit, so a light
    # multistart suffices
    alpha2, beta2 = _joint_fit(
        model, rf, w_hat, beta0, bounds, max(2, opts.restarts // 2),
        opts.seed + 102, warm=np.concatenate([alpha1, beta1]),
    )

    g_stack = np.hstack([
        jac_alpha(model, rf.theta_hat, alpha2, beta2),
        jac_beta(model, rf.theta_hat, alpha2, beta2),
    ])
    gwg = g_stack.T @ w_hat @ g_stack
    spec = sym_eig(gwg)
    top = float(spec.eigenvalues[0])
    degenerate = bool(top <= 0.0 or spec.eigenvalues[-1] < 1e-10 * top)
    cov = np.linalg.pinv(gwg, hermitian=True) / rf.n
    variances = np.clip(np.diag(cov)[q:], 0.0, None)
    std_err = np.sqrt(variances)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stats = np.where(std_err > 0.0, (beta2 - beta0) / std_err, np.inf)
    critical = dist.normal_quantile(1.0 - tau / 2.0)
    return TTestResult(
        beta_hat=beta2,
        std_err=std_err,
        t_stats=t_stats,
        reject=np.abs(t_stats) > critical,
        degenerate=degenerate,
        alpha_hat=alpha2,
        tau=tau,
    )


# ---------------------------------------------------------------------------
# Confidence intervals
# ---------------------------------------------------------------------------

def invert_ci(model: StructuralModel, rf: ReducedFormEstimate, beta_grid,
              tau: float = 0.05, opts: TestOptions | None = None) -> CiResult:
    """Collect the grid points the robust test does not reject.

    The ridge penalty is resolved once, at the middle grid point, and
    reused along the grid; ``opts.strict_ci`` re-runs the penalty search at
    every point instead.  Scalar interest parameter only.
    """
    opts = opts or TestOptions()
    grid = np.asarray(list(beta_grid), dtype=float).reshape(-1)
    if grid.size == 0:
        raise InvalidArgument("beta_grid must be non-empty")
    if model.dims.p != 1:
        raise InvalidArgument("grid inversion is implemented for scalar beta")

    if not opts.strict_ci and opts.lambda_mode == "gcv":
        anchor = np.array([grid[grid.size // 2]])
        lam = _resolve_lambda(model, rf, anchor, opts)
        opts = replace(opts, lambda_mode="fixed", lambda_value=lam)

    accepted = []
    p_values = np.empty(grid.size)
    for i, b in enumerate(grid):
        res = robust_test(model, rf, np.array([b]), tau, opts)
        p_values[i] = res.p_value
        if not res.reject:
            accepted.append(b)
    accepted_arr = np.asarray(accepted)
    lower = float(accepted_arr.min()) if accepted_arr.size else None
    upper = float(accepted_arr.max()) if accepted_arr.size else None
    return CiResult(beta_grid=grid, accepted=accepted_arr, p_values=p_values,
                    lower=lower, upper=upper, tau=tau)

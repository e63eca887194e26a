"""Ridge-penalized profile minimization over the nuisance parameter.

The objective is n (theta_hat - g)' W (theta_hat - g) + lambda |alpha|^2,
minimized over the nuisance box by multistart projected quasi-Newton
(L-BFGS-B) with the analytic chain-rule gradient.  The vanishing ridge term
selects the minimum-norm point when the fit is flat along a manifold of
equally good nuisance values, which is what makes the downstream weighting
matrix estimable under partial identification.

The penalty level can be fixed (lambda = 1/n keeps it asymptotically
negligible) or chosen by generalized cross-validation on a grid, scoring
each candidate with the hat matrix of the problem linearized at its own
ridge solution.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .errors import GcvDegenerate, InvalidArgument, ModelEvaluationError, SolverError
from .model import StructuralModel, eval_g, fused_g_and_jac_alpha, jac_alpha


@dataclass(frozen=True)
class RidgeSolution:
    """Best local minimizer found across restarts.

    ``objective`` is the unpenalized quadratic form n r'Wr at ``alpha_hat``;
    ``penalized_objective`` adds lambda |alpha_hat|^2.
    """

    alpha_hat: np.ndarray
    objective: float
    penalized_objective: float
    lam: float
    n_restarts_used: int
    converged: bool


def latin_hypercube(bounds: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """Latin-hypercube sample of `count` points inside a (q, 2) box."""
    q = bounds.shape[0]
    if count <= 0:
        return np.zeros((0, q))
    u = (rng.permuted(np.tile(np.arange(count), (q, 1)), axis=1).T
         + rng.uniform(size=(count, q))) / count
    return bounds[:, 0] + u * (bounds[:, 1] - bounds[:, 0])


def _start_points(model: StructuralModel, restarts: int, seed: int,
                  warm_start) -> np.ndarray:
    bounds = model.alpha_bounds
    center = 0.5 * (bounds[:, 0] + bounds[:, 1])
    starts = []
    if warm_start is not None:
        starts.append(np.clip(np.asarray(warm_start, dtype=float).reshape(-1),
                              bounds[:, 0], bounds[:, 1]))
    starts.append(center)
    extra = max(0, restarts - len(starts))
    rng = np.random.Generator(np.random.PCG64(np.uint64(seed)))
    lhs = latin_hypercube(bounds, extra, rng)
    starts.extend(lhs)
    return np.asarray(starts[:max(restarts, 1)])


def minimize_ridge(model: StructuralModel, theta_hat, weight, beta0, lam: float,
                   *, n: int, restarts: int = 8, seed: int = 0,
                   warm_start=None) -> RidgeSolution:
    """Minimize n (theta_hat - g)' W (theta_hat - g) + lam |alpha|^2 over the box.

    Deterministic given ``seed``: restart points and their order are fixed,
    and ties on the penalized objective resolve to the earliest restart.
    """
    if lam < 0.0:
        raise InvalidArgument(f"penalty must be >= 0, got {lam}")
    theta_hat = np.asarray(theta_hat, dtype=float).reshape(-1)
    weight = np.asarray(weight, dtype=float)
    beta0 = np.asarray(beta0, dtype=float).reshape(-1)
    q = model.dims.q
    scale = float(n)

    if q == 0:
        r = theta_hat - eval_g(model, theta_hat, np.zeros(0), beta0)
        obj = scale * float(r @ weight @ r)
        return RidgeSolution(np.zeros(0), obj, obj, lam, 0, True)

    def value_and_grad(alpha):
        g_val, d = fused_g_and_jac_alpha(model, theta_hat, alpha, beta0)
        r = theta_hat - g_val
        wr = weight @ r
        f = scale * float(r @ wr) + lam * float(alpha @ alpha)
        if f != f:  # NaN from a failed map evaluation
            raise ModelEvaluationError(
                "objective is NaN", theta=theta_hat, alpha=alpha, beta=beta0)
        grad = -2.0 * scale * (d.T @ wr) + 2.0 * lam * alpha
        return f, grad

    bounds_list = [tuple(row) for row in model.alpha_bounds]
    starts = _start_points(model, restarts, seed, warm_start)
    best = None
    best_val = np.inf
    any_converged = False
    failures: list[str] = []
    for x0 in starts:
        try:
            res = _scipy_minimize(
                value_and_grad, x0, jac=True, method="L-BFGS-B",
                bounds=bounds_list,
                options={"maxiter": 300, "ftol": 1e-12, "gtol": 1e-8},
            )
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            failures.append(str(exc))
            continue
        if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
            failures.append("non-finite iterate")
            continue
        any_converged = any_converged or bool(res.success)
        if res.fun < best_val:
            best_val = float(res.fun)
            best = np.clip(res.x, model.alpha_bounds[:, 0], model.alpha_bounds[:, 1])
    if best is None:
        raise SolverError(
            f"all {len(starts)} restarts failed: {failures[-3:]}"
        )
    r = theta_hat - eval_g(model, theta_hat, best, beta0)
    obj = scale * float(r @ weight @ r)
    return RidgeSolution(
        alpha_hat=best,
        objective=obj,
        penalized_objective=obj + lam * float(best @ best),
        lam=lam,
        n_restarts_used=len(starts),
        converged=any_converged,
    )


def default_gcv_grid(weight, m: int) -> np.ndarray:
    """Penalty grid {1e0 .. 1e-8} scaled by tr(W)/m, making it scale-free
    in the weighting matrix."""
    scale = float(np.trace(np.asarray(weight, dtype=float))) / m
    return np.power(10.0, -np.arange(9.0)) * scale


def _hat_trace(d: np.ndarray, weight: np.ndarray, lam: float) -> float:
    """Trace of the ridge hat matrix D (D'WD + lam I)^-1 D'W."""
    dtwd = d.T @ weight @ d
    q = dtwd.shape[0]
    ridge = dtwd + lam * np.eye(q)
    try:
        sol = np.linalg.solve(ridge, dtwd)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(ridge, dtwd, rcond=None)[0]
    return float(np.trace(sol))


def select_lambda_gcv(model: StructuralModel, theta_hat, weight, beta0,
                      grid: Sequence[float], *, n: int, seed: int = 0,
                      restarts: int = 8) -> float:
    """Pick the grid penalty minimizing GCV(lam) = n RSS / (n - tr H)^2.

    RSS is the unpenalized objective at the ridge solution for that penalty
    and H the hat matrix of the problem linearized at that solution.  Since
    the objective carries the n factor while the penalty does not, the
    effective ridge coefficient of the fit is lam / n, and the hat trace is
    computed for that smoother so the score describes the estimator
    actually used.  The grid is swept from the largest penalty down,
    warm-starting each solve at the previous solution; ties break toward
    the larger penalty.
    """
    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise InvalidArgument("GCV grid must be non-empty")
    if np.any(grid < 0.0):
        raise InvalidArgument("GCV grid values must be >= 0")
    order = np.argsort(grid)[::-1]
    best_lam = None
    best_score = np.inf
    warm = None
    for rank_idx, idx in enumerate(order):
        lam = float(grid[idx])
        # warm-started homotopy down the grid: only the first (most
        # regularized, hence easiest) solve pays for a multistart
        sol = minimize_ridge(
            model, theta_hat, weight, beta0, lam, n=n,
            restarts=min(4, restarts) if rank_idx == 0 else 1,
            seed=seed, warm_start=warm,
        )
        warm = sol.alpha_hat
        d = jac_alpha(model, np.asarray(theta_hat, float).reshape(-1),
                      sol.alpha_hat, np.asarray(beta0, float).reshape(-1))
        tr_h = _hat_trace(d, np.asarray(weight, float), lam / n)
        if tr_h >= n:
            continue
        score = n * sol.objective / (n - tr_h) ** 2
        if score < best_score:
            best_score = score
            best_lam = lam
    if best_lam is None:
        raise GcvDegenerate(
            "effective degrees of freedom reach the sample size at every "
            "grid penalty; the nuisance dimension is too large for n"
        )
    return best_lam

"""Structural-model interface: the fixed-point map g(theta, alpha, beta),
its three Jacobians, a simulation-based (SMM) adapter, and the model
registry used by the CLI.

A model is the map g together with parameter dimensions and the compact box
domain of the nuisance vector.  Analytic Jacobians are used when supplied;
otherwise central finite differences with a per-coordinate relative step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError, InvalidArgument, ModelEvaluationError

#: Default relative finite-difference step: cube root of a 1e-6
#: function-noise scale, the standard order-optimal choice for central
#: differences on a twice continuously differentiable map.
DEFAULT_FD_STEP = 1e-2

#: Tolerance within which out-of-box nuisance values are clamped (with a
#: warning) rather than rejected.
BOUNDS_CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class ModelDims:
    """Dimensions (m, q, p): reduced-form, nuisance, and interest."""

    m: int
    q: int
    p: int

    def __post_init__(self):
        if self.m < 1:
            raise InvalidArgument(f"reduced-form dimension m must be >= 1, got {self.m}")
        if self.q < 0:
            raise InvalidArgument(f"nuisance dimension q must be >= 0, got {self.q}")
        if self.p < 1:
            raise InvalidArgument(f"interest dimension p must be >= 1, got {self.p}")


@dataclass
class StructuralModel:
    """The map g : Theta x A x B -> Theta plus metadata.

    Parameters
    ----------
    dims : ModelDims
        Problem dimensions.
    g : callable
        ``g(theta, alpha, beta) -> (m,) array``.
    alpha_bounds : (q, 2) array
        Componentwise (lo, hi) box defining the compact nuisance domain.
    jac_theta, jac_alpha, jac_beta : callable, optional
        Analytic Jacobians with the same signature as ``g``, returning
        (m, m), (m, q) and (m, p) arrays.  Finite differences are used when
        absent.
    fd_step : float
        Relative finite-difference step; the step in coordinate i is
        ``fd_step * (1 + |x_i|)``.
    name : str
        Identifier echoed into results.
    """

    dims: ModelDims
    g: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    alpha_bounds: np.ndarray
    jac_theta: Callable | None = None
    jac_alpha: Callable | None = None
    jac_beta: Callable | None = None
    fd_step: float = DEFAULT_FD_STEP
    name: str = "model"
    #: optional fused hook returning (g, jac_alpha) in one evaluation; the
    #: profile solver calls it thousands of times per test, so models whose
    #: map and Jacobian share intermediates should provide it
    g_and_jac_alpha: Callable | None = None

    def __post_init__(self):
        bounds = np.asarray(self.alpha_bounds, dtype=float).reshape(self.dims.q, 2)
        if np.any(bounds[:, 0] >= bounds[:, 1]):
            raise InvalidArgument("alpha_bounds must satisfy lo < hi componentwise")
        self.alpha_bounds = bounds


def _check_point(model: StructuralModel, theta, alpha, beta):
    theta = np.asarray(theta, dtype=float).reshape(-1)
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    d = model.dims
    if theta.size != d.m or alpha.size != d.q or beta.size != d.p:
        raise DimensionError(
            f"point has sizes ({theta.size}, {alpha.size}, {beta.size}); "
            f"model expects ({d.m}, {d.q}, {d.p})"
        )
    return theta, alpha, beta


def _clamp_alpha(model: StructuralModel, alpha: np.ndarray) -> np.ndarray:
    lo, hi = model.alpha_bounds[:, 0], model.alpha_bounds[:, 1]
    below = lo - alpha
    above = alpha - hi
    worst = max(below.max(initial=0.0), above.max(initial=0.0))
    if worst <= 0.0:
        return alpha
    if worst > BOUNDS_CLAMP_TOL:
        raise InvalidArgument(
            f"nuisance value violates its box by {worst:.3e} "
            f"(tolerance {BOUNDS_CLAMP_TOL:.0e})"
        )
    warnings.warn(
        f"nuisance value clamped onto its box (violation {worst:.3e})",
        RuntimeWarning,
        stacklevel=3,
    )
    return np.clip(alpha, lo, hi)


def _eval_raw(model: StructuralModel, theta, alpha, beta) -> np.ndarray:
    out = np.asarray(model.g(theta, alpha, beta), dtype=float).reshape(-1)
    if out.size != model.dims.m or not np.all(np.isfinite(out)):
        raise ModelEvaluationError(
            "structural map returned a non-finite or mis-sized vector",
            theta=theta, alpha=alpha, beta=beta,
        )
    return out


def eval_g(model: StructuralModel, theta, alpha, beta) -> np.ndarray:
    """Evaluate g at a point, clamping the nuisance onto its box.

    Violations beyond ``BOUNDS_CLAMP_TOL`` are rejected; smaller ones are
    clamped with a recorded warning so optimizer round-off at the boundary
    does not abort a run.
    """
    theta, alpha, beta = _check_point(model, theta, alpha, beta)
    alpha = _clamp_alpha(model, alpha)
    return _eval_raw(model, theta, alpha, beta)


def _fd_jacobian(model, theta, alpha, beta, which: str) -> np.ndarray:
    """Central finite differences of g in the chosen argument.

    Uses the raw map (no box clamp): derivatives at a boundary point are
    still defined by the formula for g.
    """
    base = {"theta": theta, "alpha": alpha, "beta": beta}
    x = base[which]
    cols = []
    for i in range(x.size):
        step = model.fd_step * (1.0 + abs(x[i]))
        plus, minus = x.copy(), x.copy()
        plus[i] += step
        minus[i] -= step
        hi = _eval_raw(model, **{**base, which: plus})
        lo = _eval_raw(model, **{**base, which: minus})
        cols.append((hi - lo) / (2.0 * step))
    if not cols:
        return np.zeros((model.dims.m, 0))
    return np.column_stack(cols)


def _jacobian(model, theta, alpha, beta, which: str, analytic) -> np.ndarray:
    theta, alpha, beta = _check_point(model, theta, alpha, beta)
    if analytic is not None:
        jac = np.asarray(analytic(theta, alpha, beta), dtype=float)
    else:
        jac = _fd_jacobian(model, theta, alpha, beta, which)
    expected = {"theta": model.dims.m, "alpha": model.dims.q, "beta": model.dims.p}[which]
    jac = jac.reshape(model.dims.m, expected)
    if not np.all(np.isfinite(jac)):
        raise ModelEvaluationError(
            f"Jacobian in {which} is non-finite", theta=theta, alpha=alpha, beta=beta
        )
    return jac


def fused_g_and_jac_alpha(model: StructuralModel, theta, alpha, beta):
    """(g, jac_alpha) in one call, using the model's fused hook when present.

    Hot-loop helper: skips per-call validation entirely.  Callers must keep
    the nuisance inside its box, hooks must return float arrays of the
    right shape, and non-finite output is the caller's job to detect (the
    profile solver checks its scalar objective every iteration).
    """
    if model.g_and_jac_alpha is not None:
        return model.g_and_jac_alpha(theta, alpha, beta)
    val = np.asarray(model.g(theta, alpha, beta), dtype=float).reshape(-1)
    if model.jac_alpha is not None:
        jac = np.asarray(model.jac_alpha(theta, alpha, beta), dtype=float)
    else:
        jac = _fd_jacobian(model, theta, np.asarray(alpha, float),
                           np.asarray(beta, float), "alpha")
    return val, jac


def jac_theta(model: StructuralModel, theta, alpha, beta) -> np.ndarray:
    """m x m Jacobian of g in the reduced-form argument."""
    return _jacobian(model, theta, alpha, beta, "theta", model.jac_theta)


def jac_alpha(model: StructuralModel, theta, alpha, beta) -> np.ndarray:
    """m x q Jacobian of g in the nuisance argument."""
    return _jacobian(model, theta, alpha, beta, "alpha", model.jac_alpha)


def jac_beta(model: StructuralModel, theta, alpha, beta) -> np.ndarray:
    """m x p Jacobian of g in the interest argument."""
    return _jacobian(model, theta, alpha, beta, "beta", model.jac_beta)


# ---------------------------------------------------------------------------
# Simulation-based models
# ---------------------------------------------------------------------------

def draw_seeds(base_seed: int, count: int) -> np.ndarray:
    """Deterministic per-draw seeds derived from (base_seed, draw index).

    Value-level derivation (no shared RNG state) keeps the adapter
    re-entrant and makes repeated evaluations bit-identical.
    """
    ss = np.random.SeedSequence(int(base_seed))
    return ss.generate_state(count, dtype=np.uint64)


@dataclass
class SmmAdapter:
    """Turn a stochastic simulator into a structural model.

    The map is the Monte Carlo average ``(1/B) sum_j h(x_j(alpha, beta))``
    over B draws with common random numbers: draw j always uses the seed
    derived from (base_seed, j), so the average is a deterministic function
    of (alpha, beta) and the outer minimizer sees a smooth-in-expectation,
    reproducible objective.  The resulting map ignores theta.

    ``simulator(alpha, beta, draw_index, seed) -> sample`` and
    ``statistic(sample) -> (m,) array``.
    """

    simulator: Callable[[np.ndarray, np.ndarray, int, int], object]
    statistic: Callable[[object], np.ndarray]
    dims: ModelDims
    alpha_bounds: np.ndarray
    n_draws: int
    base_seed: int = 0
    name: str = "smm"
    _seeds: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_draws < 1:
            raise InvalidArgument("number of simulation draws must be >= 1")
        self._seeds = draw_seeds(self.base_seed, self.n_draws)

    def g_bar(self, alpha, beta) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float).reshape(-1)
        beta = np.asarray(beta, dtype=float).reshape(-1)
        total = np.zeros(self.dims.m)
        for j in range(self.n_draws):
            sample = self.simulator(alpha, beta, j, int(self._seeds[j]))
            total += np.asarray(self.statistic(sample), dtype=float).reshape(-1)
        return total / self.n_draws

    def to_model(self, fd_step: float = DEFAULT_FD_STEP) -> StructuralModel:
        return StructuralModel(
            dims=self.dims,
            g=lambda theta, alpha, beta: self.g_bar(alpha, beta),
            alpha_bounds=self.alpha_bounds,
            fd_step=fd_step,
            name=self.name,
        )


def default_smm_draws(n: int) -> int:
    """Default simulation size 10n, large enough that simulation noise is
    negligible next to sampling noise."""
    return 10 * int(n)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

MODEL_REGISTRY: dict[str, Callable[..., StructuralModel]] = {}


def register_model(name: str, factory: Callable[..., StructuralModel]) -> None:
    MODEL_REGISTRY[name] = factory


def make_model(name: str, **params) -> StructuralModel:
    """Instantiate a registered model by name."""
    try:
        factory = MODEL_REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(MODEL_REGISTRY)) or "(none)"
        raise InvalidArgument(f"unknown model '{name}'; registered: {known}") from None
    return factory(**params)


def make_linear_model(theta0, design_alpha, design_beta=None, alpha_bounds=None,
                      name: str = "linear_gaussian") -> StructuralModel:
    """Linear fixed-point model g(theta, alpha, beta) = theta0 + Da a + Db b.

    The map does not depend on theta, so I - grad_theta(g) is the identity.
    Useful as a transparent testbed: with Gaussian reduced-form noise the
    minimized distance has a known exact distribution.
    """
    theta0 = np.asarray(theta0, dtype=float).reshape(-1)
    da = np.asarray(design_alpha, dtype=float)
    m = theta0.size
    da = da.reshape(m, -1)
    q = da.shape[1]
    if design_beta is None:
        db = np.zeros((m, 1))
    else:
        db = np.asarray(design_beta, dtype=float).reshape(m, -1)
    p = db.shape[1]
    if alpha_bounds is None:
        alpha_bounds = np.column_stack([np.full(q, -10.0), np.full(q, 10.0)])

    def g(theta, alpha, beta):
        return theta0 + da @ np.asarray(alpha, float) + db @ np.asarray(beta, float)

    return StructuralModel(
        dims=ModelDims(m=m, q=q, p=p),
        g=g,
        alpha_bounds=alpha_bounds,
        jac_theta=lambda theta, alpha, beta: np.zeros((m, m)),
        jac_alpha=lambda theta, alpha, beta: da,
        jac_beta=lambda theta, alpha, beta: db,
        name=name,
    )


def _smm_toy_factory(n_draws: int = 2000, base_seed: int = 0,
                     alpha_bounds=((-5.0, 5.0),)) -> StructuralModel:
    """Two-moment toy: draw (alpha + z1, beta + z2) and average.

    The reduced form is (alpha0, beta0); the nuisance Jacobian has full
    column rank, so the toy exercises the identified code path end to end.
    """

    def simulator(alpha, beta, draw_index, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        z = rng.standard_normal(2)
        return np.array([alpha[0] + z[0], beta[0] + z[1]])

    adapter = SmmAdapter(
        simulator=simulator,
        statistic=lambda x: x,
        dims=ModelDims(m=2, q=1, p=1),
        alpha_bounds=np.asarray(alpha_bounds, dtype=float),
        n_draws=n_draws,
        base_seed=base_seed,
        name="smm_toy",
    )
    return adapter.to_model()


def _linear_gaussian_factory(theta0=None, design_alpha=None, design_beta=None,
                             alpha_bounds=None) -> StructuralModel:
    if theta0 is None or design_alpha is None:
        raise InvalidArgument("linear_gaussian requires theta0 and design_alpha")
    return make_linear_model(theta0, design_alpha, design_beta, alpha_bounds)


register_model("smm_toy", _smm_toy_factory)
register_model("linear_gaussian", _linear_gaussian_factory)

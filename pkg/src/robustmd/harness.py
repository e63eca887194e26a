"""Monte Carlo experiment runner: size tables, power curves, rank-recovery
studies, and null-distribution checks, with deterministic seeding and a
bounded worker pool.

Every replication's seed is a 64-bit hash of (master seed, experiment kind,
sample size, replication index), so results are bit-reproducible, cells are
independent, and parallel scheduling cannot change any number.  Replication
failures are counted against an error budget instead of aborting the run;
rates are reported over the successful replications with the denominator
logged.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from . import dist, entrygame
from .errors import ConfigError, ExperimentError, RobustMDError
from .inference import ReducedFormEstimate, TestOptions, run_pipeline, t_test
from .model import make_linear_model, make_model

TEST_NAMES = ("Oracle", "Robust", "T-test")


def stable_seed(*parts) -> int:
    """64-bit seed hashed from the given parts, stable across runs and
    platforms (unlike the builtin hash)."""
    digest = hashlib.blake2b(
        "|".join(repr(p) for p in parts).encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


@dataclass
class McConfig:
    """Configuration of one Monte Carlo experiment.

    ``dgp`` is either a named benchmark ("identified" / "unidentified") or
    a dict of GameParams fields.  ``beta0`` defaults to the DGP truth and
    ``oracle_df`` to the degrees of freedom implied by the true structure.
    ``beta_grid`` lists the alternatives a power experiment simulates under
    while still testing beta = beta0.
    """

    experiment: str = "size"
    model: str = "entry_game"
    dgp: object = "identified"
    sample_sizes: tuple = (1000,)
    replications: int = 2000
    tau: float = 0.05
    b: float = 0.99
    master_seed: int = 20260808
    beta0: float | None = None
    beta_grid: tuple | None = None
    oracle_df: int | None = None
    threads: int = 1
    restarts: int = 8
    lambda_mode: str = "gcv"
    error_budget: float = 0.01
    label: str = ""

    def __post_init__(self):
        if self.experiment not in ("size", "power", "rank", "null-dist"):
            raise ConfigError(f"unknown experiment kind '{self.experiment}'")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if any(n < 50 for n in self.sample_sizes):
            raise ConfigError("sample sizes below 50 are not supported")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError("tau must lie in (0, 1)")
        if self.experiment == "power" and not self.beta_grid:
            raise ConfigError("power experiments need a beta_grid")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        self.sample_sizes = tuple(int(n) for n in self.sample_sizes)
        if self.beta_grid is not None:
            self.beta_grid = tuple(float(b) for b in self.beta_grid)

    def test_options(self, seed: int) -> TestOptions:
        return TestOptions(b=self.b, restarts=self.restarts, seed=seed,
                           lambda_mode=self.lambda_mode)


@dataclass(frozen=True)
class SizeRow:
    """One aggregate row of a size or power table."""

    test: str
    n: int
    rate: float
    mc_se: float
    mean_df: float
    mean_r_alpha: float
    beta_alt: float | None = None


@dataclass
class ExperimentResult:
    """Aggregate rows plus per-cell diagnostics and the failure ledger."""

    rows: list
    diagnostics: dict
    failures: dict
    config: McConfig
    statistics: dict = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return sum(self.failures.values())


def resolve_game(cfg: McConfig):
    """Build (params, model, beta0, oracle degrees of freedom) for a config."""
    if cfg.model != "entry_game":
        raise ConfigError(
            f"Monte Carlo experiments are defined for the entry game, got "
            f"'{cfg.model}'"
        )
    if isinstance(cfg.dgp, str):
        try:
            factory = {"identified": entrygame.GameParams.identified,
                       "unidentified": entrygame.GameParams.unidentified}[cfg.dgp]
        except KeyError:
            raise ConfigError(f"unknown named DGP '{cfg.dgp}'") from None
        params = factory()
    elif isinstance(cfg.dgp, dict):
        params = entrygame.GameParams(**cfg.dgp)
    else:
        raise ConfigError("dgp must be a name or a dict of game parameters")
    model = make_model(cfg.model, states=params.states)
    beta0 = float(cfg.beta0) if cfg.beta0 is not None else params.beta
    oracle_df = cfg.oracle_df if cfg.oracle_df is not None else true_df(params)
    return params, model, beta0, int(oracle_df)


def true_df(params: entrygame.GameParams, rel_tol: float = 1e-8) -> int:
    """Degrees of freedom implied by the true structure: covariance rank
    minus nuisance-Jacobian rank, both at the population equilibrium."""
    eq = entrygame.solve_equilibrium(params)
    probs = np.asarray(params.state_probs)
    sigma = np.diag(eq.theta * (1 - eq.theta) / np.tile(probs, 2))
    jac = entrygame.game_jac_alpha(eq.theta, params.alpha, params.beta, params.states)
    sv_sigma = np.linalg.svd(sigma, compute_uv=False)
    sv_jac = np.linalg.svd(jac, compute_uv=False)
    r_sigma = int(np.sum(sv_sigma > rel_tol * max(sv_sigma[0], 1e-300)))
    r_alpha = int(np.sum(sv_jac > rel_tol * max(sv_jac[0], 1e-300)))
    return r_sigma - r_alpha


# ---------------------------------------------------------------------------
# replication workers (top level so process pools can pickle them)
# ---------------------------------------------------------------------------

def _game_replication(cfg: McConfig, params, model, beta0: float,
                      oracle_df: int, n: int, rep: int, beta_sim: float,
                      with_t: bool) -> dict:
    # the seed ignores the experiment kind on purpose: the null point of a
    # power curve then reproduces the size cell draw for draw
    seed = stable_seed(cfg.master_seed, cfg.label, n, beta_sim, rep)
    sim_params = params if beta_sim == params.beta else entrygame.GameParams(
        beta=beta_sim, alpha1=params.alpha1, alpha2=params.alpha2,
        alpha3=params.alpha3, states=params.states,
        state_probs=params.state_probs,
    )
    try:
        data = entrygame.simulate_data(sim_params, n, seed)
        rf = entrygame.estimate_reduced_form(data)
        opts = cfg.test_options(seed=stable_seed(seed, "solver"))
        state = run_pipeline(model, rf, np.array([beta0]), opts)
        df_hat = state.r_sigma_hat - state.r_alpha_hat
        rec = {
            "n": n, "rep": rep, "beta_sim": beta_sim, "error": None,
            "statistic": state.statistic,
            "r_sigma": state.r_sigma_hat, "r_alpha": state.r_alpha_hat,
            "df_hat": df_hat,
            "oracle_reject": state.statistic > dist.chisq_quantile(
                1.0 - cfg.tau, oracle_df),
            "robust_reject": (df_hat >= 1 and state.statistic >
                              dist.chisq_quantile(1.0 - cfg.tau, df_hat)),
            "df_invalid": df_hat < 1,
        }
        if with_t:
            tt = t_test(model, rf, np.array([beta0]), cfg.tau, opts,
                        warm_start=np.append(state.alpha_hat, beta0))
            rec["t_reject"] = tt.reject_any
        return rec
    except RobustMDError as exc:
        return {"n": n, "rep": rep, "beta_sim": beta_sim,
                "error": type(exc).__name__}


def _game_chunk(task) -> list:
    cfg_dict, n, reps, beta_sim, with_t = task
    cfg = McConfig(**cfg_dict)
    params, model, beta0, oracle_df = resolve_game(cfg)
    return [
        _game_replication(cfg, params, model, beta0, oracle_df, n, rep,
                          beta_sim, with_t)
        for rep in reps
    ]


def _run_cells(cfg: McConfig, cells, with_t: bool) -> list:
    """Execute (n, beta_sim) cells, each with cfg.replications draws."""
    cfg_dict = asdict(cfg)
    tasks = []
    for n, beta_sim in cells:
        all_reps = list(range(cfg.replications))
        if cfg.threads > 1:
            chunk = max(1, cfg.replications // (cfg.threads * 4))
            for i in range(0, len(all_reps), chunk):
                tasks.append((cfg_dict, n, all_reps[i:i + chunk], beta_sim, with_t))
        else:
            tasks.append((cfg_dict, n, all_reps, beta_sim, with_t))
    records: list = []
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            for out in pool.map(_game_chunk, tasks):
                records.extend(out)
    else:
        for task in tasks:
            records.extend(_game_chunk(task))
    return records


def _check_budget(cfg: McConfig, records: list) -> dict:
    failures: dict = {}
    for rec in records:
        if rec["error"] is not None:
            failures[rec["error"]] = failures.get(rec["error"], 0) + 1
    total = len(records)
    failed = sum(failures.values())
    if total and failed / total > cfg.error_budget:
        raise ExperimentError(
            f"{failed}/{total} replications failed ({failures}); error "
            f"budget is {cfg.error_budget:.1%}"
        )
    return failures


def _rate_row(test: str, n: int, flags, dfs, ras, beta_alt=None) -> SizeRow:
    flags = np.asarray(flags, dtype=float)
    count = flags.size
    rate = float(flags.mean()) if count else float("nan")
    return SizeRow(
        test=test, n=n, rate=rate,
        mc_se=float(np.sqrt(rate * (1.0 - rate) / count)) if count else float("nan"),
        mean_df=float(np.mean(dfs)) if len(dfs) else float("nan"),
        mean_r_alpha=float(np.mean(ras)) if len(ras) else float("nan"),
        beta_alt=beta_alt,
    )


def _aggregate_cell(cfg, records, n, beta_sim, oracle_df, with_t):
    ok = [r for r in records
          if r["n"] == n and r["beta_sim"] == beta_sim and r["error"] is None]
    dfs = [r["df_hat"] for r in ok]
    ras = [r["r_alpha"] for r in ok]
    beta_alt = beta_sim if cfg.experiment == "power" else None
    rows = [
        _rate_row("Oracle", n, [r["oracle_reject"] for r in ok], dfs, ras, beta_alt),
        _rate_row("Robust", n, [r["robust_reject"] for r in ok], dfs, ras, beta_alt),
    ]
    if with_t:
        rows.append(_rate_row("T-test", n, [r["t_reject"] for r in ok],
                              dfs, ras, beta_alt))
    true_r_alpha = 6 - oracle_df  # the game covariance has full rank 6
    diag = {
        "n_ok": len(ok),
        "freq_df_correct": float(np.mean([d == oracle_df for d in dfs])) if dfs else float("nan"),
        "freq_r_alpha_correct": float(np.mean(
            [r["r_alpha"] == true_r_alpha for r in ok])) if ok else float("nan"),
        "freq_df_invalid": float(np.mean([r["df_invalid"] for r in ok])) if ok else float("nan"),
    }
    stats = np.sort(np.array([r["statistic"] for r in ok]))
    return rows, diag, stats


def run_size_experiment(cfg: McConfig) -> ExperimentResult:
    """Rejection rates of the oracle, robust, and Wald tests at the null.

    The oracle and robust decisions share one profile pipeline per
    replication; the Wald comparator is warm-started from it.
    """
    params, model, beta0, oracle_df = resolve_game(cfg)
    cells = [(n, params.beta) for n in cfg.sample_sizes]
    records = _run_cells(cfg, cells, with_t=True)
    failures = _check_budget(cfg, records)
    rows, diagnostics, statistics = [], {}, {}
    for n in cfg.sample_sizes:
        cell_rows, diag, stats = _aggregate_cell(
            cfg, records, n, params.beta, oracle_df, with_t=True)
        rows.extend(cell_rows)
        diagnostics[n] = diag
        statistics[n] = stats
    return ExperimentResult(rows=rows, diagnostics=diagnostics,
                            failures=failures, config=cfg, statistics=statistics)


def run_power_experiment(cfg: McConfig) -> ExperimentResult:
    """Rejection rates when the data come from each beta_grid alternative
    while the tests keep the null fixed at beta0."""
    params, model, beta0, oracle_df = resolve_game(cfg)
    cells = [(n, b_alt) for n in cfg.sample_sizes for b_alt in cfg.beta_grid]
    records = _run_cells(cfg, cells, with_t=True)
    failures = _check_budget(cfg, records)
    rows, diagnostics = [], {}
    for n in cfg.sample_sizes:
        for b_alt in cfg.beta_grid:
            cell_rows, diag, _ = _aggregate_cell(
                cfg, records, n, b_alt, oracle_df, with_t=True)
            rows.extend(cell_rows)
            diagnostics[(n, b_alt)] = diag
    return ExperimentResult(rows=rows, diagnostics=diagnostics,
                            failures=failures, config=cfg)


def run_rank_consistency(cfg: McConfig) -> ExperimentResult:
    """Frequencies of recovering the true covariance and Jacobian ranks."""
    params, model, beta0, oracle_df = resolve_game(cfg)
    eq = entrygame.solve_equilibrium(params)
    jac = entrygame.game_jac_alpha(eq.theta, params.alpha, params.beta, params.states)
    sv = np.linalg.svd(jac, compute_uv=False)
    true_r_alpha = int(np.sum(sv > 1e-8 * sv[0]))
    cells = [(n, params.beta) for n in cfg.sample_sizes]
    records = _run_cells(cfg, cells, with_t=False)
    failures = _check_budget(cfg, records)
    rows, diagnostics = [], {}
    for n in cfg.sample_sizes:
        ok = [r for r in records if r["n"] == n and r["error"] is None]
        freq_ra = float(np.mean([r["r_alpha"] == true_r_alpha for r in ok]))
        freq_rs = float(np.mean([r["r_sigma"] == 6 for r in ok]))
        freq_d = float(np.mean([r["df_hat"] == oracle_df for r in ok]))
        rows.append({"n": n, "freq_r_alpha": freq_ra, "freq_r_sigma": freq_rs,
                     "freq_df": freq_d, "true_r_alpha": true_r_alpha,
                     "true_df": oracle_df, "n_ok": len(ok)})
        diagnostics[n] = {"n_ok": len(ok)}
    return ExperimentResult(rows=rows, diagnostics=diagnostics,
                            failures=failures, config=cfg)


# ---------------------------------------------------------------------------
# null-distribution study on a transparent linear model
# ---------------------------------------------------------------------------

def default_linear_design(m: int = 5, q: int = 3, r_alpha: int = 2,
                          seed: int = 12345):
    """Reference linear fixed-point model with a planted Jacobian rank.

    Returns (model, theta0, sigma, true degrees of freedom).  The design
    deliberately includes a flat direction so the null-distribution study
    exercises the partially identified code path.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    basis = rng.standard_normal((m, r_alpha))
    mix = rng.standard_normal((r_alpha, q))
    design = basis @ mix  # m x q with rank r_alpha
    root = rng.standard_normal((m, m)) / np.sqrt(m)
    sigma = root @ root.T + 0.5 * np.eye(m)
    theta0 = rng.standard_normal(m)
    model = make_linear_model(theta0, design, alpha_bounds=np.column_stack(
        [np.full(q, -4.0), np.full(q, 4.0)]))
    return model, theta0, sigma, m - r_alpha


def _nulldist_chunk(task) -> list:
    cfg_dict, n, reps = task
    cfg = McConfig(**cfg_dict)
    model, theta0, sigma, d = default_linear_design()
    root = np.linalg.cholesky(sigma)
    out = []
    for rep in reps:
        seed = stable_seed(cfg.master_seed, "null-dist", cfg.label, n, rep)
        rng = np.random.Generator(np.random.PCG64(np.uint64(seed)))
        theta_hat = theta0 + root @ rng.standard_normal(len(theta0)) / np.sqrt(n)
        rf = ReducedFormEstimate(theta_hat=theta_hat, sigma_hat=sigma, n=n)
        try:
            state = run_pipeline(model, rf, np.zeros(1),
                                 cfg.test_options(seed=stable_seed(seed, "s")))
            out.append({"n": n, "rep": rep, "error": None,
                        "statistic": state.statistic,
                        "df_hat": state.r_sigma_hat - state.r_alpha_hat})
        except RobustMDError as exc:
            out.append({"n": n, "rep": rep, "error": type(exc).__name__})
    return out


def run_null_dist_experiment(cfg: McConfig) -> ExperimentResult:
    """Distribution of the statistic on the reference linear-Gaussian model.

    Collects the simulated statistics and the Kolmogorov-Smirnov distance
    to the limiting chi-squared law with the design's true degrees of
    freedom.
    """
    _, _, _, d = default_linear_design()
    cfg_dict = asdict(cfg)
    tasks = []
    for n in cfg.sample_sizes:
        all_reps = list(range(cfg.replications))
        if cfg.threads > 1:
            chunk = max(1, cfg.replications // (cfg.threads * 4))
            for i in range(0, len(all_reps), chunk):
                tasks.append((cfg_dict, n, all_reps[i:i + chunk]))
        else:
            tasks.append((cfg_dict, n, all_reps))
    records: list = []
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            for out in pool.map(_nulldist_chunk, tasks):
                records.extend(out)
    else:
        for task in tasks:
            records.extend(_nulldist_chunk(task))
    failures = _check_budget(cfg, records)
    rows, statistics = [], {}
    for n in cfg.sample_sizes:
        ok = [r for r in records if r["n"] == n and r["error"] is None]
        stats = np.sort(np.array([r["statistic"] for r in ok]))
        ks = ks_statistic(stats, lambda x: dist.chisq_cdf(x, d))
        rows.append({"n": n, "ks_statistic": ks, "df": d,
                     "freq_df_correct": float(np.mean([r["df_hat"] == d for r in ok])),
                     "n_ok": len(ok)})
        statistics[n] = stats
    return ExperimentResult(rows=rows, diagnostics={}, failures=failures,
                            config=cfg, statistics=statistics)


def ks_statistic(samples, cdf: Callable[[float], float]) -> float:
    """Sup distance between the empirical cdf of the samples and ``cdf``.

    Input need not be sorted; at least 10 samples are required for the
    statistic to mean anything.
    """
    arr = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    if arr.size < 10:
        raise ConfigError(f"need at least 10 samples, got {arr.size}")
    n = arr.size
    grid = np.arange(1, n + 1) / n
    values = np.array([cdf(x) for x in arr])
    return float(np.max(np.maximum(grid - values, values - (grid - 1.0 / n))))

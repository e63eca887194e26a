"""Command-line interface.

Single-shot commands (`test`, `ci`, `power-local`) read a JSON input file
and emit JSON results; Monte Carlo commands (`mc-size`, `mc-power`,
`mc-rank`) read a JSON config and write a CSV table, a JSON metadata
sidecar, and a rendered figure alongside it.

Exit codes: 0 success, 2 configuration error, 3 experiment error budget
exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import harness, reporting
from .errors import ConfigError, ExperimentError, RobustMDError
from .inference import (
    ReducedFormEstimate,
    TestOptions,
    invert_ci,
    robust_test,
    run_pipeline,
)
from .model import jac_alpha, make_model
from .power import nuisance_projected_weight, power_report


def _load_json(path):
    with open(path) as handle:
        return json.load(handle)


def _build_model(spec):
    if isinstance(spec, str):
        return make_model(spec)
    return make_model(spec["name"], **spec.get("params", {}))


def _build_rf(payload) -> ReducedFormEstimate:
    return ReducedFormEstimate(
        theta_hat=np.asarray(payload["theta_hat"], dtype=float),
        sigma_hat=np.asarray(payload["sigma_hat"], dtype=float),
        n=int(payload["n"]),
    )


def _build_options(payload) -> TestOptions:
    return TestOptions(**payload.get("options", {}))


def _emit(result: dict, output: str | None) -> None:
    text = json.dumps(result, indent=2, default=str)
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(text + "\n")
    else:
        print(text)


def _cmd_test(args) -> int:
    payload = _load_json(args.input)
    model = _build_model(payload["model"])
    rf = _build_rf(payload)
    result = robust_test(
        model, rf, np.atleast_1d(np.asarray(payload["beta0"], dtype=float)),
        tau=float(payload.get("tau", 0.05)), opts=_build_options(payload),
    )
    for note in result.warnings:
        print(f"warning: {note}", file=sys.stderr)
    _emit(result.to_dict(), args.output)
    return 0


def _cmd_ci(args) -> int:
    payload = _load_json(args.input)
    model = _build_model(payload["model"])
    rf = _build_rf(payload)
    result = invert_ci(
        model, rf, np.asarray(payload["beta_grid"], dtype=float),
        tau=float(payload.get("tau", 0.05)), opts=_build_options(payload),
    )
    _emit(result.to_dict(), args.output)
    return 0


def _cmd_power_local(args) -> int:
    payload = _load_json(args.input)
    model = _build_model(payload["model"])
    rf = _build_rf(payload)
    beta0 = np.atleast_1d(np.asarray(payload["beta0"], dtype=float))
    tau = float(payload.get("tau", 0.05))
    opts = _build_options(payload)
    state = run_pipeline(model, rf, beta0, opts)
    df = state.r_sigma_hat - state.r_alpha_hat
    if df < 1:
        raise ConfigError(
            f"estimated degrees of freedom {df}; local power is undefined"
        )
    grad_alpha = jac_alpha(model, rf.theta_hat, state.alpha_hat, beta0)
    weight = nuisance_projected_weight(state.w_hat, grad_alpha)
    scales = tuple(payload.get("scales", (0.5, 1.0, 2.0, 4.0, 8.0)))
    report = power_report(
        model, rf.theta_hat, state.alpha_hat, beta0, weight,
        df=df, tau=tau, n=rf.n, b=opts.b, scales=scales,
    )
    out = {
        "report": report.to_dict(),
        "df": df,
        "r_sigma_hat": state.r_sigma_hat,
        "r_alpha_hat": state.r_alpha_hat,
        "weight": "nuisance-projected optimal weight",
    }
    _emit(out, args.output)
    base = Path(args.output) if args.output else Path("power_local.json")
    csv_path = args.csv or base.with_suffix(".csv")
    reporting.write_rows_csv(
        csv_path, ["component", "direction", "relative_weight"],
        [
            {"component": i + 1, "direction": float(report.delta_star[i]),
             "relative_weight": float(report.relative_weights[i])}
            for i in range(report.delta_star.size)
        ],
    )
    figure_path = args.figure or base.with_suffix(".png")
    if not args.no_figures:
        reporting.render_weights_figure(report, figure_path)
    return 0


def _mc_config(args) -> harness.McConfig:
    payload = _load_json(args.config)
    payload.setdefault("experiment", args.experiment)
    if payload["experiment"] != args.experiment:
        raise ConfigError(
            f"config is for '{payload['experiment']}' but the command runs "
            f"'{args.experiment}'"
        )
    if args.seed is not None:
        payload["master_seed"] = args.seed
    if args.threads is not None:
        payload["threads"] = args.threads
    payload.pop("output_dir", None)
    for key in ("sample_sizes", "beta_grid"):
        if key in payload and payload[key] is not None:
            payload[key] = tuple(payload[key])
    try:
        return harness.McConfig(**payload)
    except TypeError as exc:
        raise ConfigError(f"bad config field: {exc}") from exc


def _cmd_mc(args) -> int:
    cfg = _mc_config(args)
    out_dir = Path(args.output_dir)
    start = time.perf_counter()
    if args.experiment == "size":
        result = harness.run_size_experiment(cfg)
        fields = ["test", "n", "rate", "mc_se", "mean_df", "mean_r_alpha"]
        stem = "size"
    elif args.experiment == "power":
        result = harness.run_power_experiment(cfg)
        fields = ["test", "n", "beta_alt", "rate", "mc_se", "mean_df",
                  "mean_r_alpha"]
        stem = "power"
    else:
        result = harness.run_rank_consistency(cfg)
        fields = ["n", "freq_r_alpha", "freq_r_sigma", "freq_df",
                  "true_r_alpha", "true_df", "n_ok"]
        stem = "rank"
    wall = time.perf_counter() - start

    csv_path = reporting.write_rows_csv(out_dir / f"{stem}.csv", fields, result.rows)
    diagnostics = {str(k): v for k, v in result.diagnostics.items()}
    reporting.write_sidecar(
        out_dir / f"{stem}_meta.json", cfg,
        extra={"failures": result.failures, "diagnostics": diagnostics},
        wall_time=wall,
    )
    if not args.no_figures:
        fig_path = out_dir / f"{stem}.png"
        if args.experiment == "size":
            reporting.render_size_figure(result.rows, cfg.tau, fig_path)
        elif args.experiment == "power":
            params, _, beta0, _ = harness.resolve_game(cfg)
            reporting.render_power_figure(result.rows, cfg.tau, beta0, fig_path)
        else:
            reporting.render_rank_figure(result.rows, fig_path)
    print(f"wrote {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmd",
        description="Identification-robust minimum-distance testing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func in (("test", _cmd_test), ("ci", _cmd_ci)):
        p = sub.add_parser(name, help=f"run the {name} on a JSON input")
        p.add_argument("--input", required=True, help="input JSON file")
        p.add_argument("--output", default=None, help="output JSON path (default stdout)")
        p.set_defaults(func=func)

    p = sub.add_parser("power-local", help="local power report at a fitted point")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None)
    p.add_argument("--csv", default=None, help="relative-weights CSV path")
    p.add_argument("--figure", default=None, help="relative-weights figure path")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_power_local)

    for name in ("mc-size", "mc-power", "mc-rank"):
        p = sub.add_parser(name, help=f"Monte Carlo {name.split('-')[1]} experiment")
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--output-dir", default=".", help="directory for outputs")
        p.add_argument("--threads", type=int, default=None,
                       help="bound on parallel workers")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
        p.set_defaults(func=_cmd_mc, experiment=name.split("-")[1])

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExperimentError as exc:
        print(f"experiment error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, FileNotFoundError, json.JSONDecodeError, KeyError,
            TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RobustMDError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

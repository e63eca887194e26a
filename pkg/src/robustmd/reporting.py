"""Result serialization: deterministic CSV tables, JSON metadata sidecars,
and figures rendered next to the delimited output.

CSV bytes are a pure function of the rows (floats formatted with %.10g and
no timestamps), so identical configurations produce identical files; the
sidecar carries everything audit-related that is allowed to vary, namely
wall time plus a content hash of the configuration.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, is_dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_TEST_STYLE = {
    "Oracle": dict(color="#1f77b4", marker="o"),
    "Robust": dict(color="#d62728", marker="s"),
    "T-test": dict(color="#2ca02c", marker="^"),
}


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".10g")
    if value is None:
        return ""
    return str(value)


def write_rows_csv(path, fieldnames, rows) -> Path:
    """Write dict-like rows with deterministic float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(fieldnames)
        for row in rows:
            if is_dataclass(row):
                row = asdict(row)
            writer.writerow([_fmt(row.get(name)) for name in fieldnames])
    return path


def content_hash(payload) -> str:
    """Short stable hash of a JSON-serializable object."""
    canon = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_sidecar(path, config, extra=None, wall_time=None) -> Path:
    """JSON sidecar echoing the configuration and runtime metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if is_dataclass(config):
        config = asdict(config)
    payload = {
        "config": config,
        "config_hash": content_hash(config),
        "wall_time_seconds": wall_time,
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, default=str)
    return path


def _new_axes(xlabel, ylabel, title):
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=150)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def render_size_figure(rows, tau, path, title="Rejection rate under the null"):
    """Rejection rate against sample size, one line per test."""
    fig, ax = _new_axes("sample size", "rejection rate", title)
    by_test: dict = {}
    for row in rows:
        if is_dataclass(row):
            row = asdict(row)
        by_test.setdefault(row["test"], []).append((row["n"], row["rate"]))
    for test, points in by_test.items():
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points],
                label=test, **_TEST_STYLE.get(test, {}))
    ax.axhline(tau, color="gray", linestyle="--", linewidth=1,
               label=f"nominal {tau:g}")
    ax.legend()
    return _save(fig, path)


def render_power_figure(rows, tau, beta0, path, title="Power curve"):
    """Rejection rate against the simulated alternative, per test and n."""
    fig, ax = _new_axes("alternative beta", "rejection rate", title)
    by_key: dict = {}
    for row in rows:
        if is_dataclass(row):
            row = asdict(row)
        by_key.setdefault((row["test"], row["n"]), []).append(
            (row["beta_alt"], row["rate"]))
    for (test, n), points in sorted(by_key.items()):
        points.sort()
        style = dict(_TEST_STYLE.get(test, {}))
        ax.plot([p[0] for p in points], [p[1] for p in points],
                label=f"{test} (n={n})", **style)
    ax.axhline(tau, color="gray", linestyle="--", linewidth=1)
    ax.axvline(beta0, color="black", linestyle=":", linewidth=1,
               label="null value")
    ax.legend(fontsize=8)
    return _save(fig, path)


def render_rank_figure(rows, path, title="Rank recovery frequency"):
    """Frequency of recovering the true ranks against sample size."""
    fig, ax = _new_axes("sample size", "frequency correct", title)
    rows = [asdict(r) if is_dataclass(r) else r for r in rows]
    rows = sorted(rows, key=lambda r: r["n"])
    ns = [r["n"] for r in rows]
    ax.plot(ns, [r["freq_r_alpha"] for r in rows], marker="o",
            label="nuisance-Jacobian rank")
    ax.plot(ns, [r["freq_r_sigma"] for r in rows], marker="s",
            label="covariance rank")
    ax.plot(ns, [r["freq_df"] for r in rows], marker="^",
            label="degrees of freedom")
    ax.set_ylim(0.0, 1.05)
    ax.legend()
    return _save(fig, path)


def render_weights_figure(report, path, title="Direction of maximum local power"):
    """Bar chart of the relative weight of each interest coordinate."""
    fig, ax = _new_axes("interest coordinate", "relative weight", title)
    weights = report.relative_weights
    ax.bar(range(1, len(weights) + 1), weights, color="#1f77b4")
    ax.set_xticks(range(1, len(weights) + 1))
    ax.set_ylim(0.0, 1.05)
    return _save(fig, path)

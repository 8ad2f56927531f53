"""File formats: dataset CSV, ground-truth JSON, and fit/report serialization.

Reports are plain JSON with sorted keys and no timestamps or absolute paths,
so a rerun with the same config and seed produces byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .dataset import SurvivalDataset
from .errors import DataError
from .sampler import FitResult
from .simulate import SimTruth

_NA_STRINGS = {"", "NA", "NaN", "nan", "N/A", "na"}


def read_survival_csv(path):
    """Load a dataset CSV: columns `time`, `event`, then covariates.

    Rows with any missing value are dropped (complete-case filtering).
    Returns (dataset, n_raw, n_dropped).
    """
    try:
        frame = pd.read_csv(path, na_values=list(_NA_STRINGS), keep_default_na=True,
                            float_precision="round_trip")
    except pd.errors.ParserError as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    except (OSError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    for col in ("time", "event"):
        if col not in frame.columns:
            raise DataError(f"{path}: required column '{col}' is missing")
    covariates = [c for c in frame.columns if c not in ("time", "event")]
    if not covariates:
        raise DataError(f"{path}: no covariate columns found")
    n_raw = len(frame)
    complete = frame.dropna()
    n_dropped = n_raw - len(complete)
    if complete.empty:
        raise DataError(f"{path}: no complete-case rows remain")
    times = complete["time"].to_numpy(dtype=float)
    events_raw = complete["event"].to_numpy(dtype=float)
    if not np.isin(events_raw, (0.0, 1.0)).all():
        bad = int(np.flatnonzero(~np.isin(events_raw, (0.0, 1.0)))[0])
        raise DataError(f"{path}: event column must be 0/1 (bad value in data row {bad})")
    if np.any(times <= 0) or not np.all(np.isfinite(times)):
        bad = int(np.flatnonzero(~(times > 0) | ~np.isfinite(times))[0])
        raise DataError(f"{path}: time must be positive and finite (bad value in data row {bad})")
    dataset = SurvivalDataset(
        times=times,
        events=events_raw.astype(int),
        design=complete[covariates].to_numpy(dtype=float),
        names=tuple(covariates),
    )
    return dataset, n_raw, n_dropped


def write_dataset_csv(path, dataset: SurvivalDataset) -> None:
    """Write time,event,covariates with shortest round-trip float formatting."""
    lines = ["time,event," + ",".join(dataset.names)]
    for i in range(dataset.n):
        row = [repr(float(dataset.times[i])), str(int(dataset.events[i]))]
        row += [repr(float(v)) for v in dataset.design[i]]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def dump_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def truth_payload(truth: SimTruth, names) -> dict:
    return {
        "labels": [int(v) for v in truth.labels],
        "models": [[names[j] for j in m.indices] for m in truth.models],
        "coefficients": [[float(v) for v in row] for row in truth.coefficients],
        "censored_fraction": truth.censored_fraction,
        "clamped_times": truth.clamped_times,
    }


def fit_report(result: FitResult, extra: dict | None = None) -> dict:
    """JSON-ready summary of a fit; cluster blocks are sorted largest first."""
    clusters = []
    for comp, size, score, coef in result.reported_clusters:
        clusters.append({
            "component": int(comp),
            "size": size,
            "variables": [result.names[j] for j in score.model.indices],
            "coefficients": {result.names[j]: float(v)
                             for j, v in zip(score.model.indices, coef.values)},
            "log_score": float(score.log_score),
        })
    report = {
        "k_hat": int(result.k_hat),
        "n": int(result.assignments.size),
        "p": len(result.names),
        "covariates": list(result.names),
        "assignments": [int(z) for z in result.assignments],
        "clusters": clusters,
        "best_sweep": int(result.best_sweep),
        "seed": int(result.config.seed),
        "k_max_used": int(result.k_max_used),
        "sweeps": int(result.config.sweeps),
        "posterior_trace": [float(v) for v in result.posterior_trace],
        "soft_failures": int(result.soft_failure_trace.sum()),
    }
    if extra:
        report.update(extra)
    return report

_REPORT_SCHEMA = {
    "k_hat": int, "n": int, "p": int, "covariates": list, "assignments": list,
    "clusters": list, "best_sweep": int, "seed": int, "k_max_used": int,
    "sweeps": int, "posterior_trace": list, "soft_failures": int,
}


def validate_fit_report(report: dict) -> None:
    """Check the report against the published key/type schema."""
    for key, kind in _REPORT_SCHEMA.items():
        if key not in report:
            raise DataError(f"report is missing required key '{key}'")
        if not isinstance(report[key], kind):
            raise DataError(f"report key '{key}' has type {type(report[key]).__name__}, "
                            f"expected {kind.__name__}")
    for block in report["clusters"]:
        for key in ("component", "size", "variables", "coefficients", "log_score"):
            if key not in block:
                raise DataError(f"cluster block is missing required key '{key}'")


def render_fit_report(report: dict) -> str:
    """Aligned plain-text significance table (clusters x covariates)."""
    validate_fit_report(report)
    names = report["covariates"]
    head = f"k_hat = {report['k_hat']}   n = {report['n']}   p = {report['p']}"
    width = max([len(s) for s in names] + [4])
    lines = [head, ""]
    lines.append("  ".join(["cluster", "size"] + [f"{s:>{width}}" for s in names]))
    for i, block in enumerate(report["clusters"], start=1):
        marks = ["x" if s in block["variables"] else "." for s in names]
        lines.append("  ".join([f"{i:>7}", f"{block['size']:>4}"]
                               + [f"{m:>{width}}" for m in marks]))
    lines.append("")
    for i, block in enumerate(report["clusters"], start=1):
        coefs = ", ".join(f"{k}={v:.4g}" for k, v in sorted(block["coefficients"].items()))
        lines.append(f"cluster {i} (size {block['size']}): {coefs if coefs else '(no covariates)'}")
    return "\n".join(lines) + "\n"

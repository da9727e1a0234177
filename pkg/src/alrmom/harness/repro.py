"""Desk-scale re-runs of the least-squares figures from versioned JSON configs."""

import json
import math
import os
from importlib import resources

import numpy as np

from .._validation import ConfigError
from .experiment import ExperimentSpec, run_single

FIGURES = ("fig1", "fig2", "fig3", "fig4")
FORMAT_VERSION = 1


def load_figure_config(name):
    """Read the packaged config for figure ``name``."""
    if name not in FIGURES:
        raise ConfigError(f"unknown figure {name!r}; expected one of {FIGURES}", "figure")
    text = resources.files(__package__).joinpath("configs", f"{name}.json").read_text("utf-8")
    config = json.loads(text)
    if config.get("format_version") != FORMAT_VERSION:
        raise ConfigError("unsupported config format", "format_version")
    return config


def expand(config):
    """List of ``(label, sweep_value, ExperimentSpec)`` for a figure config."""
    sweep = config.get("sweep")
    values = sweep["values"] if sweep else [None]
    out = []
    for run in config["runs"]:
        for value in values:
            params = dict(run.get("params", {}))
            if sweep:
                params[sweep["param"]] = value
            data = dict(config["base"], algo=run["algo"], params=params)
            out.append((run["label"], value, ExperimentSpec.from_dict(data)))
    return out


def _sign_changes(x, coord=1, center=-1.0):
    s = np.sign(x[:, coord] - center)
    return int(np.sum(s[1:] * s[:-1] < 0))


def summarize_run(label, value, traces, keep_path):
    gaps = [t.final("f_gap") for t in traces]
    first_eta = [float(t["eta"][0]) if len(t) else math.nan for t in traces]
    row = {"label": label, "sweep": value,
           "final_gap": float(np.median(gaps)),
           "first_eta": float(np.median(first_eta)),
           "truncations": int(sum(int(t["trunc"].sum()) for t in traces)),
           "terminations": sorted({t.termination for t in traces})}
    if keep_path:
        row["sign_changes"] = _sign_changes(traces[0].extras["x"])
    return row


def run_figure(name, out_dir=None):
    """Run every experiment of figure ``name`` and return the summary dict.

    Traces go to ``out_dir/<label>[-<sweep>].csv`` (with seed suffixes for
    several seeds) when ``out_dir`` is given, along with ``summary.json``.
    """
    config = load_figure_config(name)
    keep_path = config["base"]["problem"]["name"] == "two_dim_quadratic"
    rows = []
    for label, value, spec in expand(config):
        if out_dir is not None:
            stem = label if value is None else f"{label}-{value}"
            spec.out = os.path.join(out_dir, f"{stem}.csv")
        traces = [run_single(spec, seed, keep_path=keep_path) for seed in spec.seeds]
        rows.append(summarize_run(label, value, traces, keep_path))
    summary = {"figure": name, "description": config["description"], "rows": rows}
    if config.get("sweep"):
        summary["per_label"] = _sweep_extremes(rows)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(json_safe(summary), fh, indent=2, sort_keys=True, allow_nan=False)
    return summary


def _log10(v):
    if v <= 0:
        return -math.inf
    return math.log10(v) if math.isfinite(v) else math.inf


def _sweep_extremes(rows):
    out = {}
    for row in rows:
        entry = out.setdefault(row["label"], {"worst_log10_gap": -math.inf,
                                              "best_log10_gap": math.inf})
        lg = _log10(row["final_gap"]) if not math.isnan(row["final_gap"]) else math.inf
        if lg >= entry["worst_log10_gap"]:
            entry["worst_log10_gap"], entry["worst_at"] = lg, row["sweep"]
        if lg <= entry["best_log10_gap"]:
            entry["best_log10_gap"], entry["best_at"] = lg, row["sweep"]
    return out


def json_safe(obj):
    """Copy of ``obj`` with non-finite floats replaced by ``"inf"``/``"-inf"``/``"nan"``."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def format_summary(summary):
    """Plain-text table of a figure summary."""
    rows = summary["rows"]
    has_sweep = rows and rows[0]["sweep"] is not None
    has_signs = rows and "sign_changes" in rows[0]
    head = ["label"] + (["beta"] if has_sweep else []) + ["final f_gap", "log10", "first eta"]
    if has_signs:
        head.append("sign changes")
    head.append("end")
    lines = [f"{summary['figure']}: {summary['description']}", "  ".join(head)]
    for r in rows:
        cells = [f"{r['label']:<12}"]
        if has_sweep:
            cells.append(f"{r['sweep']:<6}")
        cells += [f"{r['final_gap']:.3e}", f"{_log10(r['final_gap']):7.2f}",
                  f"{r['first_eta']:.4g}"]
        if has_signs:
            cells.append(str(r["sign_changes"]))
        cells.append(",".join(r["terminations"]))
        lines.append("  ".join(cells))
    for label, entry in summary.get("per_label", {}).items():
        lines.append(f"{label:<12}  worst log10 f_gap {entry['worst_log10_gap']:.2f} "
                     f"(beta={entry['worst_at']})  best {entry['best_log10_gap']:.2f} "
                     f"(beta={entry['best_at']})")
    return "\n".join(lines)

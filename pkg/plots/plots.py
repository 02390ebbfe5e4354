#!/usr/bin/env python3
"""Render experiment curves from harness output directories.

Reads every seed_*.csv in a directory (fixed nine-column schema, see
EXPECTED_COLUMNS) and draws one figure: a faint trace per seed, an
aggregate line (median across seeds), a dispersion band (interquartile by
default, min-max on request) and vertical markers where runs certified a
gap or returned from exploitation.  The script is a pure reader of the CSV
contract: it never imports the simulation package and never touches the
inputs.

Usage: plots.py --in DIR [--metric regret] [--scale sqrt-x] [--out fig.png]
"""

from __future__ import annotations

import argparse
import csv
import glob
import os
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

EXPECTED_COLUMNS = ["t", "reward", "regret", "pseudo_regret", "phase",
                    "active_s", "candidate_policy", "gap_estimate", "event"]
METRICS = ("regret", "pseudo_regret")
SCALES = ("linear", "log-x", "sqrt-x")
BANDS = ("iqr", "minmax")
MARKER_STYLE = {"gap_found": ("tab:green", "--"),
                "exploit_return": ("tab:red", ":")}


class SchemaError(RuntimeError):
    """Input files do not follow the harness CSV contract."""


@dataclass(frozen=True)
class PlotSpec:
    input_dir: str
    metric: str = "regret"
    scale: str = "linear"
    band: str = "iqr"
    out: str = "fig.png"

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError("metric must be one of %s" % (METRICS,))
        if self.scale not in SCALES:
            raise ValueError("scale must be one of %s" % (SCALES,))
        if self.band not in BANDS:
            raise ValueError("band must be one of %s" % (BANDS,))


def read_run(path: str) -> dict:
    """One CSV -> {'label', 't', 'regret', 'pseudo_regret', 'markers'}.

    Empty metric fields parse as NaN (the harness writes them for
    not-applicable values); marker events are pulled from the event column,
    which packs one 'kind:key=value;...' entry per event joined by '|'.
    """
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != EXPECTED_COLUMNS:
            raise SchemaError("%s: header %r does not match the harness schema"
                              % (path, header))
        ts, regret, pseudo, markers = [], [], [], []
        for row in reader:
            if len(row) != len(EXPECTED_COLUMNS):
                raise SchemaError("%s: row %d has %d fields, expected %d"
                                  % (path, len(ts) + 2, len(row),
                                     len(EXPECTED_COLUMNS)))
            try:
                t = int(row[0])
                regret.append(float(row[2]))
                pseudo.append(float(row[3]) if row[3] else float("nan"))
            except ValueError as exc:
                raise SchemaError("%s: row %d: %s" % (path, len(ts) + 2, exc))
            if ts and t <= ts[-1]:
                raise SchemaError("%s: round column is not increasing" % path)
            ts.append(t)
            if row[8]:
                for entry in row[8].split("|"):
                    kind = entry.split(":", 1)[0]
                    if kind in MARKER_STYLE:
                        markers.append((t, kind))
    if not ts:
        raise SchemaError("%s: no data rows" % path)
    label = os.path.splitext(os.path.basename(path))[0]
    return {"label": label, "t": np.array(ts),
            "regret": np.array(regret), "pseudo_regret": np.array(pseudo),
            "markers": markers}


def load_runs(input_dir: str) -> list[dict]:
    paths = sorted(glob.glob(os.path.join(input_dir, "seed_*.csv")))
    if not paths:
        raise SchemaError("no seed_*.csv files in %r" % input_dir)
    return [read_run(p) for p in paths]


def _metric_matrix(runs: list[dict], metric: str) -> np.ndarray:
    """Stack the metric across runs; requires one shared logging grid."""
    grid = runs[0]["t"]
    for run in runs[1:]:
        if len(run["t"]) != len(grid) or not np.array_equal(run["t"], grid):
            raise SchemaError(
                "runs use different logging grids; aggregate per directory")
    mat = np.stack([run[metric] for run in runs])
    if np.isnan(mat).all():
        raise SchemaError(
            "metric %r is empty in every run; it is not defined for this "
            "environment" % metric)
    if np.isnan(mat).any():
        raise SchemaError("metric %r is empty in some rows" % metric)
    return mat


def _x_of(t: np.ndarray, scale: str) -> np.ndarray:
    return np.sqrt(t) if scale == "sqrt-x" else t


def plot_runs(spec: PlotSpec) -> str:
    runs = load_runs(spec.input_dir)
    mat = _metric_matrix(runs, spec.metric)
    grid = runs[0]["t"]
    x = _x_of(grid, spec.scale)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for run in runs:
        ax.plot(x, run[spec.metric], color="tab:blue", alpha=0.15, lw=0.7)
    center = np.median(mat, axis=0)
    ax.plot(x, center, color="tab:blue", lw=2.0,
            label="median of %d runs" % len(runs))
    if len(runs) > 1:
        if spec.band == "iqr":
            lo, hi = np.percentile(mat, [25.0, 75.0], axis=0)
        else:
            lo, hi = mat.min(axis=0), mat.max(axis=0)
        ax.fill_between(x, lo, hi, color="tab:blue", alpha=0.25,
                        label=spec.band)

    seen = set()
    for run in runs:
        for t, kind in run["markers"]:
            color, ls = MARKER_STYLE[kind]
            ax.axvline(_x_of(np.array([t]), spec.scale)[0], color=color,
                       ls=ls, alpha=0.35,
                       label=kind if kind not in seen else None)
            seen.add(kind)

    if spec.scale == "log-x":
        ax.set_xscale("log")
    ax.set_xlabel("sqrt(round)" if spec.scale == "sqrt-x" else "round")
    ax.set_ylabel(spec.metric.replace("_", " "))
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.out, dpi=110)
    plt.close(fig)
    return spec.out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plots.py",
        description="Plot regret curves from harness output CSVs.")
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="directory holding seed_*.csv files")
    parser.add_argument("--metric", default="regret", choices=METRICS)
    parser.add_argument("--scale", default="linear", choices=SCALES)
    parser.add_argument("--band", default="iqr", choices=BANDS)
    parser.add_argument("--out", default="fig.png", help="output image path")
    args = parser.parse_args(argv)
    try:
        spec = PlotSpec(input_dir=args.input_dir, metric=args.metric,
                        scale=args.scale, band=args.band, out=args.out)
        path = plot_runs(spec)
    except (SchemaError, ValueError, OSError) as exc:
        print("plots error: %s" % exc, file=sys.stderr)
        return 2
    print("wrote %s" % path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

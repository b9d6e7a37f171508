#!/usr/bin/env python3
"""Render the standard result figures from airtime-simulation CSVs.

Reads one or more results CSVs (header: scheme,num_stas,hotspot_load,
replication,total_throughput_mbps,jain_index,outage_prob) and writes four
figures plus a plain-text fairness table to the output directory:

  total_throughput_vs_users.png   one series per scheme over num_stas
  outage_vs_users.png
  outage_vs_hotspot_load.png      at the station count that was load-swept
  total_throughput_vs_hotspot_load.png
  jain_table.txt                  mean Jain index per (scheme, num_stas)

Series show the mean over replications with a shaded 95% confidence band.
Everything here is computed from the CSV alone; metrics are never rederived.

Usage: make_figures.py RESULTS_CSV [MORE_CSV ...] OUTDIR
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

REQUIRED_COLUMNS = [
    "scheme",
    "num_stas",
    "hotspot_load",
    "replication",
    "total_throughput_mbps",
    "jain_index",
    "outage_prob",
]

SCHEME_ORDER = ["MT", "SS-TF", "SS-AF", "PF"]

FIGURES = {
    "total_throughput_vs_users": ("num_stas", "total_throughput_mbps",
                                  "Number of stations", "Total throughput (Mbit/s)"),
    "outage_vs_users": ("num_stas", "outage_prob",
                        "Number of stations", "Outage probability"),
    "outage_vs_hotspot_load": ("hotspot_load", "outage_prob",
                               "Hotspot load fraction", "Outage probability"),
    "total_throughput_vs_hotspot_load": ("hotspot_load", "total_throughput_mbps",
                                         "Hotspot load fraction", "Total throughput (Mbit/s)"),
}


def load_results(paths) -> pd.DataFrame:
    frames = []
    for path in paths:
        df = pd.read_csv(path)
        missing = [c for c in REQUIRED_COLUMNS if c not in df.columns]
        if missing:
            raise ValueError(f"{path} is missing required column(s): {', '.join(missing)}")
        frames.append(df[REQUIRED_COLUMNS])
    return pd.concat(frames, ignore_index=True)


def _scheme_order(df: pd.DataFrame):
    present = list(df["scheme"].unique())
    return [s for s in SCHEME_ORDER if s in present] + sorted(set(present) - set(SCHEME_ORDER))


def _user_sweep(df: pd.DataFrame) -> pd.DataFrame:
    """Rows for the vs-station-count figures: the lowest load is the baseline."""
    return df[df["hotspot_load"] == df["hotspot_load"].min()]


def _load_sweep(df: pd.DataFrame) -> pd.DataFrame:
    """Rows for the vs-hotspot-load figures: the station count that was swept."""
    loads_per_u = df.groupby("num_stas")["hotspot_load"].nunique()
    return df[df["num_stas"] == loads_per_u.idxmax()]


def _plot(df: pd.DataFrame, x: str, y: str, xlabel: str, ylabel: str, out: Path) -> int:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    series = 0
    for scheme in _scheme_order(df):
        grouped = df[df["scheme"] == scheme].groupby(x)[y]
        if grouped.ngroups == 0:
            continue
        stat = grouped.agg(["mean", "std", "count"]).sort_index()
        band = 1.96 * stat["std"].fillna(0.0) / np.sqrt(stat["count"])
        ax.plot(stat.index, stat["mean"], marker="o", label=scheme)
        ax.fill_between(stat.index, stat["mean"] - band, stat["mean"] + band, alpha=0.2)
        series += 1
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return series


def jain_table_text(df: pd.DataFrame) -> str:
    """Mean Jain index per (scheme, station count), plain fixed-width text."""
    sweep = _user_sweep(df)
    users = sorted(sweep["num_stas"].unique())
    lines = ["Mean Jain fairness index by scheme and station count", ""]
    header = f"{'scheme':<8}" + "".join(f"{f'U={u}':>10}" for u in users)
    lines.append(header)
    lines.append("-" * len(header))
    for scheme in _scheme_order(sweep):
        row = sweep[sweep["scheme"] == scheme].groupby("num_stas")["jain_index"].mean()
        cells = "".join(f"{row.get(u, float('nan')):>10.3f}" for u in users)
        lines.append(f"{scheme:<8}{cells}")
    return "\n".join(lines) + "\n"


def make_figures(results_paths, outdir) -> dict:
    """Render all figures and the Jain table; returns output paths and series counts."""
    df = load_results(results_paths)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    outputs = {}
    for name, (x, y, xlabel, ylabel) in FIGURES.items():
        subset = _user_sweep(df) if x == "num_stas" else _load_sweep(df)
        path = outdir / f"{name}.png"
        outputs[name] = {"path": path, "series": _plot(subset, x, y, xlabel, ylabel, path)}

    table_path = outdir / "jain_table.txt"
    table_path.write_text(jain_table_text(df))
    outputs["jain_table"] = {"path": table_path, "series": df["scheme"].nunique()}
    return outputs


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("results", nargs="+", help="results CSV path(s)")
    parser.add_argument("outdir", help="directory for figures and the Jain table")
    args = parser.parse_args(argv)
    try:
        outputs = make_figures(args.results, args.outdir)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for name, info in outputs.items():
        print(f"wrote {info['path']} ({info['series']} series)")
    return 0


if __name__ == "__main__":
    sys.exit(main())

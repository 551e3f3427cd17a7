"""Figure rendering for run and sweep CSVs (SVG files next to the data)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import FormatError


def _read_csv(path):
    """Returns (config dict or None, header, rows)."""
    config = None
    rows = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# config: "):
                config = json.loads(line[len("# config: "):])
                continue
            if line.startswith("#") or not line:
                continue
            if header is None:
                header = line.split(",")
            else:
                rows.append(line.split(","))
    if header is None:
        raise FormatError(f"{path} has no CSV header")
    return config, header, rows


def _column(header, rows, name, numeric=True):
    idx = header.index(name)
    out = []
    for row in rows:
        cell = row[idx]
        if numeric:
            out.append(float(cell) if cell not in ("", "mean") else None)
        else:
            out.append(cell)
    return out


def plot_run(csv_path, out_path=None) -> Path:
    """Per-video p-values and bit accuracy for one run CSV."""
    _, header, rows = _read_csv(csv_path)
    rows = [r for r in rows if r[header.index("video")] != "mean"]
    videos = [int(r[header.index("video")]) for r in rows]
    pvals = _column(header, rows, "p_value")
    accs = _column(header, rows, "bit_accuracy")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    ax1.semilogy(videos, pvals, ".", ms=4)
    ax1.set_xlabel("video")
    ax1.set_ylabel("p-value")
    ax1.set_title("detection p-values")
    if any(a is not None for a in accs):
        ax2.plot(videos, [a if a is not None else float("nan") for a in accs], ".", ms=4)
        ax2.set_ylim(0.45, 1.05)
    ax2.set_xlabel("video")
    ax2.set_ylabel("bit accuracy")
    ax2.set_title("per-video bit accuracy")
    fig.tight_layout()
    out = Path(out_path) if out_path else Path(csv_path).with_suffix(".svg")
    fig.savefig(out)
    plt.close(fig)
    return out


def plot_sweep(csv_path, out_path=None) -> Path:
    """Aggregate curves along a sweep axis."""
    _, header, rows = _read_csv(csv_path)
    axis = rows[0][header.index("axis")] if rows else "value"
    values = _column(header, rows, "value")
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    for name, style in (
        ("bit_accuracy", "o-"),
        ("frames_decoded", "s--"),
        ("matching_accuracy", "^:"),
    ):
        series = _column(header, rows, name)
        if any(v is not None for v in series):
            ax.plot(values, [v if v is not None else float("nan") for v in series],
                    style, label=name, ms=4)
    ax.set_xlabel(axis)
    ax.set_ylabel("rate")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize=8)
    ax.set_title(f"sweep over {axis}")
    fig.tight_layout()
    out = Path(out_path) if out_path else Path(csv_path).with_suffix(".svg")
    fig.savefig(out)
    plt.close(fig)
    return out

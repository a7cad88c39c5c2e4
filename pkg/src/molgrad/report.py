"""Artifact writers: delimited curves, JSON summaries, and rendered figures.

CSV conventions: matrices and vectors are comma-delimited and
header-free; curve files carry a single header row. Floats are written
with 17 significant digits so a round-trip through text is lossless.
"""

import json
from pathlib import Path

import numpy as np

__all__ = [
    "fmt17",
    "write_curve_csv",
    "read_curve_csv",
    "write_json",
    "read_json",
    "render_curves",
]


def fmt17(v) -> str:
    return f"{float(v):.17g}"


def write_curve_csv(path, header, *columns) -> Path:
    """One header row, then comma-delimited columns of equal length."""
    columns = [np.asarray(c) for c in columns]
    if len(header) != len(columns):
        raise ValueError("header/column count mismatch")
    length = columns[0].shape[0]
    if any(c.shape[0] != length for c in columns):
        raise ValueError("columns must have equal length")
    path = Path(path)
    with path.open("w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(length):
            cells = []
            for c in columns:
                v = c[i]
                cells.append(str(int(v)) if np.issubdtype(c.dtype, np.integer) else fmt17(v))
            fh.write(",".join(cells) + "\n")
    return path


def read_curve_csv(path):
    """Returns (header list, dict of column arrays)."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=float, ndmin=2)
    return header, {name: data[:, j] for j, name in enumerate(header)}


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def render_curves(path, series, xlabel: str, ylabel: str, logy: bool = True,
                  logx: bool = False, title: str = "") -> Path:
    """Render labelled (x, y) series to a PNG file next to the CSVs."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for label, (xs, ys) in series.items():
        ax.plot(xs, ys, label=label, linewidth=1.4)
    if logy:
        ax.set_yscale("log")
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

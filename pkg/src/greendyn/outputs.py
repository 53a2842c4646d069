"""File writers shared by the command line: delimited tables, 16-bit PGM, run manifests."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


def fmt(x) -> str:
    """Round-trip text for a number; NaN and infinities as NaN / inf / -inf."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    return repr(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) else v for v in r])


def write_grid_csv(path, grid: np.ndarray, points: np.ndarray) -> None:
    """Row-major ``x,y,value`` with x + iy the affine coordinate of each pixel."""
    flat = grid.ravel()
    write_csv(path, ["x", "y", "value"],
              ((p.real, p.imag, v) for p, v in zip(points, flat)))


def write_pgm16(path, grid: np.ndarray) -> dict:
    """Binary 16-bit PGM, affinely rescaled; NaN pixels are 0. Returns the sidecar data."""
    g = np.asarray(grid, dtype=float)
    finite = np.isfinite(g)
    lo = float(g[finite].min()) if finite.any() else 0.0
    hi = float(g[finite].max()) if finite.any() else 0.0
    span = hi - lo
    scaled = np.zeros(g.shape)
    if span > 0:
        scaled[finite] = 1.0 + (g[finite] - lo) / span * 65534.0
    else:
        scaled[finite] = 1.0
    data = np.rint(scaled).astype(">u2")
    h, w = g.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(data.tobytes())
    meta = {"min": lo, "max": hi, "nan_pixels": int((~finite).sum()), "nan_value": 0,
            "mapping": "pixel = 1 + (value - min) / (max - min) * 65534; row 0 is the bottom edge y0"}
    Path(str(path) + ".txt").write_text("".join(f"{k}={fmt(v) if isinstance(v, float) else v}\n"
                                                for k, v in meta.items()))
    return meta


def write_manifest(path, subcommand: str, argv: Sequence[str], config: dict,
                   outputs: Sequence[str], version: str, extra: Optional[dict] = None) -> None:
    doc = {"tool": "greendyn", "version": version, "subcommand": subcommand, "argv": list(argv),
           "config": config, "outputs": list(outputs)}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True, default=str) + "\n")


def plot_grid(path, grid: np.ndarray, window: Sequence[float], title: str = "") -> None:
    """PNG rendering of a heatmap; needs the optional matplotlib dependency."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(5, 5))
    im = ax.imshow(np.ma.masked_invalid(grid), origin="lower", extent=list(window), cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title(title)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fit(path, d: np.ndarray, g: np.ndarray, alpha: float, intercept: float, title: str = "") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(5, 4))
    m = g > 0
    ax.loglog(d[m], g[m], ".", ms=2, alpha=0.4)
    t = np.geomspace(d[m].min(), d[m].max(), 50)
    ax.loglog(t, np.exp(intercept) * t ** alpha, "-", label=f"slope {alpha:.3f}")
    ax.set_xlabel("d(x, y)")
    ax.set_ylabel("|g(x) - g(y)|")
    ax.legend()
    ax.set_title(title)
    fig.savefig(path, dpi=120)
    plt.close(fig)

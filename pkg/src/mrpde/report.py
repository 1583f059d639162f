"""Output artifacts: delimited text that byte-for-byte reproduces across
runs, plus rendered figures for quick inspection.

All floats are written with repr(), the shortest round-tripping form, so
identical runs diff clean and parsers recover exact values.
"""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .sparse_grid import SparseField  # noqa: E402


def fmt(x) -> str:
    return repr(float(x))


def _val(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_val(u) for u in v)
    return str(v)


def write_grid_dump(path: str, field: SparseField) -> None:
    """One record per retained entry, canonical order: x y j lambda values."""
    xy = field.dom.xy(field.pos)
    with open(path, "w") as fh:
        for i in range(len(field)):
            cells = [fmt(xy[i, 0]), fmt(xy[i, 1]), str(int(field.j[i])),
                     str(int(field.lam[i]))]
            cells += [fmt(v) for v in field.values[i]]
            fh.write(" ".join(cells) + "\n")


def write_field_csv(path: str, field: SparseField) -> None:
    xy = field.dom.xy(field.pos)
    with open(path, "w") as fh:
        fh.write("x,y,j,lambda," + ",".join(field.var_names) + "\n")
        for i in range(len(field)):
            cells = [fmt(xy[i, 0]), fmt(xy[i, 1]), str(int(field.j[i])),
                     str(int(field.lam[i]))]
            cells += [fmt(v) for v in field.values[i]]
            fh.write(",".join(cells) + "\n")


def write_key_values(path: str, items: dict) -> None:
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k} = {_val(v)}\n")


def write_lines(path: str, lines) -> None:
    with open(path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")


def render_field_figure(path: str, field: SparseField, t: float,
                        var: int = 0) -> None:
    """Scatter of the retained values next to the grid colored by level."""
    xy = field.dom.xy(field.pos)
    fig, axes = plt.subplots(1, 2, figsize=(11, 5), constrained_layout=True)
    sc = axes[0].scatter(xy[:, 0], xy[:, 1], c=field.values[:, var], s=4,
                         cmap="viridis")
    fig.colorbar(sc, ax=axes[0], label=field.var_names[var])
    axes[0].set_title(f"{field.var_names[var]} at t = {t:.6g}")
    sc = axes[1].scatter(xy[:, 0], xy[:, 1], c=field.j, s=2, cmap="plasma",
                         vmin=0, vmax=field.dom.cap)
    fig.colorbar(sc, ax=axes[1], label="level")
    axes[1].set_title(f"{len(field)} points, finest level "
                      f"{field.finest_level()}")
    for ax in axes:
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_convergence_figure(path: str, rows: list) -> None:
    """rows: dicts with p, eps, error (and optionally deriv_error)."""
    fig, ax = plt.subplots(figsize=(6, 5), constrained_layout=True)
    for p in sorted({r["p"] for r in rows}):
        sel = sorted((r for r in rows if r["p"] == p), key=lambda r: r["eps"])
        ax.loglog([r["eps"] for r in sel], [r["error"] for r in sel],
                  "o-", label=f"p = {p}")
    lo = min(r["eps"] for r in rows)
    hi = max(r["eps"] for r in rows)
    ax.loglog([lo, hi], [lo, hi], "k--", linewidth=0.8, label="slope 1")
    ax.set_xlabel("threshold")
    ax.set_ylabel("max error at t = T/2")
    ax.legend()
    fig.savefig(path, dpi=110)
    plt.close(fig)


class OutputSink:
    """Writes the per-run artifact set under one directory."""

    def __init__(self, outdir: str, figures: bool = True):
        self.outdir = outdir
        self.figures = figures
        self.emitted = []
        os.makedirs(outdir, exist_ok=True)

    def _p(self, name: str) -> str:
        return os.path.join(self.outdir, name)

    def emit(self, step: int, t: float, field: SparseField) -> None:
        tag = f"{step:06d}"
        write_field_csv(self._p(f"field_{tag}.csv"), field)
        write_grid_dump(self._p(f"grid_{tag}.txt"), field)
        if self.figures:
            render_field_figure(self._p(f"field_{tag}.png"), field, t)
        self.emitted.append((step, t))

    def finish(self, report: dict, log_lines) -> None:
        write_lines(self._p("steps.log"), log_lines)
        write_key_values(self._p("report.txt"), report)

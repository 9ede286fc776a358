"""Diagnostic figures rendered next to the CSV outputs.

The delimited files are the contract; these plots are a convenience for
eyeballing a run.  Everything is rendered headless through the Agg backend.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_experiment", "render_surface"]

_SAVE_KW = {"dpi": 130, "bbox_inches": "tight"}


def _comparison_figure(rows, title: str, path: Path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 3.6))
    labels = [f"{r.case}\n{r.kind}" for r in rows]
    idx = np.arange(len(rows))
    analytic = np.array([abs(complex(r.analytic_re, r.analytic_im)) for r in rows])
    empirical = np.array([abs(complex(r.empirical_re, r.empirical_im)) for r in rows])
    se = np.array([max(r.se_re, r.se_im) for r in rows])
    ax1.errorbar(idx, empirical, yerr=3 * se, fmt="o", ms=4, capsize=3, label="Monte Carlo (3 SE)")
    ax1.plot(idx, analytic, "_", ms=14, color="crimson", label="analytic")
    ax1.set_xticks(idx, labels, fontsize=6, rotation=45)
    ax1.set_ylabel("|value|")
    ax1.legend(fontsize=7)
    ax1.set_title(title, fontsize=9)
    colors = ["tab:green" if r.passed else "tab:red" for r in rows]
    ax2.bar(idx, [r.z for r in rows], color=colors)
    ax2.axhline(3.0, color="k", lw=0.8, ls="--")
    ax2.set_xticks(idx, labels, fontsize=6, rotation=45)
    ax2.set_ylabel("z-score")
    ax2.set_title("deviation in standard errors", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def _margin_figure(rows, title: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7.0, 3.2))
    labels = [f"{r.case}\n{r.kind}" for r in rows]
    idx = np.arange(len(rows))
    err = np.array([r.error for r in rows])
    tol = np.array([r.tol for r in rows])
    finite = np.isfinite(tol)
    colors = ["tab:green" if r.passed else "tab:red" for r in rows]
    ax.bar(idx, err, color=colors, label="observed error")
    ax.plot(idx[finite], tol[finite], "k_", ms=16, label="tolerance")
    ax.set_xticks(idx, labels, fontsize=6, rotation=45)
    ax.set_yscale("symlog", linthresh=1e-12)
    ax.set_ylabel("error (symlog)")
    ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def render_experiment(name: str, rows, out_dir: Path):
    """Render the standard figure for an experiment's check rows."""
    out = Path(out_dir) / f"{name.replace('-', '_')}.png"
    if all(r.kind == "cf" for r in rows):
        _comparison_figure(rows, name, out)
    else:
        _margin_figure(rows, name, out)
    return [out]


def render_surface(surface, out_dir: Path, stem: str = "forward_surface"):
    """Heatmap of the simulated surface plus the spot slice."""
    out = Path(out_dir) / f"{stem}.png"
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 3.4))
    extent = [
        float(surface.maturities[0]),
        float(surface.maturities[-1]),
        float(surface.times[0]),
        float(surface.times[-1]),
    ]
    im = ax1.imshow(surface.values, aspect="auto", origin="lower", extent=extent, cmap="viridis")
    fig.colorbar(im, ax=ax1, shrink=0.85)
    ax1.set_xlabel("time to maturity")
    ax1.set_ylabel("time")
    ax1.set_title("forward surface", fontsize=9)
    ax2.plot(surface.times, surface.spot, label="spot f(t, 0)")
    ax2.plot(surface.times, surface.transport[:, 0], "--", label="transport f0(t)")
    ax2.axhline(surface.transport_limit, color="gray", lw=0.8, label="long-run level")
    ax2.set_xlabel("time")
    ax2.legend(fontsize=7)
    ax2.set_title("spot slice", fontsize=9)
    fig.tight_layout()
    fig.savefig(out, **_SAVE_KW)
    plt.close(fig)
    return [out]

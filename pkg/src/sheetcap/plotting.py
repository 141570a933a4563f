"""Line charts for experiment reports, written as SVG files.

SVG output is made reproducible: no date metadata and a fixed id salt.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "svg.hashsalt": "sheetcap",
    "svg.fonttype": "none",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.5,
    "lines.markersize": 5,
}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_capacity_refinement(series: dict[str, tuple[Sequence[float], Sequence[float]]], path,
                             title: str = "Capacity under refinement", logy: bool = False) -> Path:
    """One line per named chain: atoms-per-side (or level) against capacity."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.5, 3.8))
        for label, (x, y) in series.items():
            ax.plot(x, y, marker="o", label=label)
        ax.set_xscale("log", base=2)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("atoms per side")
        ax.set_ylabel("discrete capacity")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        return _save(fig, path)


def plot_hit_vs_eps(eps: Sequence[float], p_hat: Sequence[float], ci_lo: Sequence[float],
                    ci_hi: Sequence[float], lower: Sequence[float], upper: Sequence[float], path,
                    title: str = "eps-hitting probability") -> Path:
    """Estimated hitting probability with its 95% band and the two bound curves."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.5, 3.8))
        ax.plot(eps, p_hat, marker="o", color="k", label="estimate")
        ax.fill_between(eps, ci_lo, ci_hi, color="k", alpha=0.15, lw=0)
        ax.plot(eps, lower, ls="--", marker="v", label="lower bound")
        ax.plot(eps, upper, ls="--", marker="^", label="upper bound")
        ax.set_yscale("log")
        ax.set_xlabel("eps")
        ax.set_ylabel("probability")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        return _save(fig, path)

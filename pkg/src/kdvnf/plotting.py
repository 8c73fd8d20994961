"""PNG renderings of the two-column plot data written by the CLI."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def line_plot(path, series, xlabel="", ylabel="", title="", logx=False, logy=False):
    """series: list of (x, y, label)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for x, y, label in series:
        y = np.asarray(y, float)
        if logy:
            y = np.abs(y)
        ax.plot(x, y, marker="o" if len(x) < 80 else None, ms=3, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if any(lbl for _, _, lbl in series):
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)

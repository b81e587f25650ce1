"""Static SVG figures with byte-stable output."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {"svg.hashsalt": "parametric-qed", "svg.fonttype": "none", "figure.figsize": (6.4, 4.2),
         "axes.grid": True, "grid.alpha": 0.3}


def line_chart(path, x, series: dict, xlabel: str, ylabel: str, title: str | None = None,
               logy: bool = False, styles: dict | None = None) -> Path:
    """Plot named y-series against x and save as SVG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    styles = styles or {}
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, y in series.items():
            xs = x[name] if isinstance(x, dict) else x
            ax.plot(xs, y, label=name, **styles.get(name, {}))
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if logy:
            ax.set_yscale("log")
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path

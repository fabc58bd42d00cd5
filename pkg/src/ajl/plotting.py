"""Curve-overlay figures written as reproducible SVG files."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

golden = (5 ** 0.5 - 1) / 2
panel_width = 3.4

params = {
    "font.family": "DejaVu Sans",
    "font.size": 8,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "lines.linewidth": 1.2,
    "svg.fonttype": "none",
    "svg.hashsalt": "ajl",
    "path.simplify": False,
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    # no timestamp, fixed id salt -> identical bytes for identical data
    fig.savefig(tmp, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    tmp.replace(path)
    return path


def overlay_panels(path, panels, xlabel="x", ylabel=""):
    """One panel per entry; each entry is ``(title, [(x, y, label, style), ...])``.

    Style ``"truth"`` is drawn solid red, ``"estimate"`` dashed black,
    anything else solid blue.
    """
    styles = {"truth": dict(color="tab:red", ls="-"),
              "estimate": dict(color="black", ls="--")}
    with plt.rc_context(params):
        n = max(1, len(panels))
        fig, axes = plt.subplots(1, n, figsize=(panel_width * n, panel_width * golden), squeeze=False)
        for ax, (title, curves) in zip(axes[0], panels):
            for x, y, label, style in curves:
                ax.plot(x, y, label=label, **styles.get(style, dict(color="tab:blue", ls="-")))
            ax.set_title(title)
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)

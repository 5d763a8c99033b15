"""Matplotlib figures for run reports. Uses the Agg backend; nothing is shown on screen."""

from __future__ import annotations

from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import Metrics  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

COLORS = {"relayed": "#4c72b0", "suppressed": "#dd8452", "delivered": "#55a868"}


def figsize(n_mes: int):
    width = min(16.0, max(6.0, 0.35 * n_mes + 3.0))
    return width, 6.5


def plot_metrics(metrics: Metrics, path: Union[str, Path], title: str = "") -> Path:
    """Two panels: per-ME broker counters, and event counts by kind."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, (ax_me, ax_kind) = plt.subplots(2, 1, figsize=figsize(len(metrics.per_me)))
        names = list(metrics.per_me)
        xs = range(len(names))
        width = 0.27
        for offset, field in zip((-width, 0.0, width), ("relayed", "suppressed", "delivered")):
            values = [getattr(metrics.per_me[n], field) for n in names]
            ax_me.bar([x + offset for x in xs], values, width, label=field, color=COLORS[field])
        ax_me.set_xticks(list(xs))
        ax_me.set_xticklabels(names, rotation=45 if len(names) > 8 else 0, ha="right" if len(names) > 8 else "center")
        ax_me.set_ylabel("envelopes")
        ax_me.set_title(title or "per-ME broker counters")
        ax_me.legend(frameon=False, ncol=3)

        kinds = list(metrics.kinds)
        ax_kind.barh(kinds, [metrics.kinds[k] for k in kinds], color="#8172b2")
        ax_kind.invert_yaxis()
        ax_kind.set_xlabel("events")
        ax_kind.set_title("%d events to quiescence, %d link frames, max ttl depth %d"
                          % (metrics.events, metrics.link_frames, metrics.max_ttl_depth))
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)
    return path

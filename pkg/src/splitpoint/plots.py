"""Report figures written next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 120,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.4,
}


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_profile(profile, path, table=None) -> Path:
    """Cumulative client FLOPs, activation size and cumulative parameters per layer."""
    idx = np.arange(1, profile.n_layers + 1)
    panels = [
        (profile.cum_flops[1:], "cumulative client FLOPs / sample"),
        (profile.act_size[1:], "activation size (scalars)"),
        (profile.cum_params[1:], "cumulative client parameters"),
    ]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
        for ax, (y, label) in zip(axes, panels):
            ax.plot(idx, y, "o-")
            if table is not None:
                keep = list(table.layers)
                ax.plot(keep, y[np.array(keep) - 1], "s", mfc="none", ms=9, label="surviving cut")
                ax.legend()
            ax.set_xlabel("layer index")
            ax.set_ylabel(label)
            ax.set_xticks(idx)
        return _save(fig, path)


def plot_gain_surface(surface, path) -> Path:
    r = np.asarray(surface.r_cvs)
    b = np.asarray(surface.beta_cvs)
    gain = np.where(np.isfinite(surface.gain), surface.gain, np.nan)
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(6, 4.5))
        ax = fig.add_subplot(projection="3d")
        B, R = np.meshgrid(b, r)
        ax.plot_surface(R, B, gain, cmap="viridis", edgecolor="k", linewidth=0.2)
        ax.set_xlabel("rate cv")
        ax.set_ylabel("speed-gap cv")
        ax.set_zlabel("gain")
        ax.set_title(f"selection-rate gain vs fixed layer {surface.naive_layer}")
        return _save(fig, path)


def plot_timelines(timelines, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        for tl in timelines:
            cum = tl.round_cumulative()
            ax.plot(np.arange(1, len(cum) + 1), cum, label=tl.selector)
        ax.set_xlabel("training round")
        ax.set_ylabel("wall clock (s)")
        ax.legend()
        return _save(fig, path)


def plot_loss_curves(curves: dict, path, column: int = 1, ylabel: str = "training loss") -> Path:
    """``curves`` maps selector label -> rows of (seconds, loss, accuracy)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, rows in curves.items():
            arr = np.asarray(rows, dtype=float)
            ax.plot(arr[:, 0], arr[:, column], label=label)
        ax.set_xlabel("training time (s)")
        ax.set_ylabel(ylabel)
        ax.legend()
        return _save(fig, path)

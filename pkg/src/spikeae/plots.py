"""Matplotlib renderings of the CSV outputs (Agg backend, PNG files)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "image.interpolation": "nearest",
}
DIVERGING = "coolwarm"
SEQUENTIAL = "viridis"


def save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # no software/date stamp so reruns give identical files
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def training_curves(rows, path):
    """Train/validation MSE and layer-3 ANR against epoch, one line per seed."""
    with plt.rc_context(RC):
        fig, (ax_mse, ax_anr) = plt.subplots(1, 2, figsize=(8, 3), constrained_layout=True)
        seeds = sorted({r[16] for r in rows})
        for seed in seeds:
            for split, style in (("train", "--"), ("validation", "-")):
                sel = [r for r in rows if r[16] == seed and r[1] == split]
                if not sel:
                    continue
                ep = [r[0] for r in sel]
                ax_mse.plot(ep, [r[2] for r in sel], style, marker="o", ms=3, label=f"seed {seed} {split}")
                anr = [r[10] for r in sel]
                if all(a is not None for a in anr):
                    ax_anr.plot(ep, anr, style, marker="o", ms=3)
        ax_mse.set(xlabel="epoch", ylabel="reconstruction MSE")
        ax_anr.set(xlabel="epoch", ylabel="layer-3 active neuron ratio", ylim=(0, 1.05))
        ax_mse.legend(fontsize=7)
        return save(fig, path)


def reconstructions(x, x_hat, labels, path):
    n = len(labels)
    with plt.rc_context(RC):
        fig, axes = plt.subplots(2, n, figsize=(1.0 * n, 2.2), squeeze=False)
        for i in range(n):
            for r, img in enumerate((x[i], x_hat[i])):
                ax = axes[r, i]
                ax.imshow(np.clip(np.squeeze(img), 0, 1), cmap="gray", vmin=0, vmax=1)
                ax.set_xticks([])
                ax.set_yticks([])
            axes[0, i].set_title(str(int(labels[i])))
        axes[0, 0].set_ylabel("input")
        axes[1, 0].set_ylabel("output")
        return save(fig, path)


def histograms(activity, path):
    """Per-layer histograms of normalized firing rate."""
    layers = list(activity.items())
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, len(layers), figsize=(2.4 * len(layers), 2.2), squeeze=False,
                                 constrained_layout=True)
        for ax, (i, act) in zip(axes[0], layers):
            edges = np.linspace(0, 1, len(act.histogram) + 1)
            ax.stairs(act.histogram, edges, fill=True)
            ax.set(title=f"layer {i}", xlabel="firing rate")
        axes[0, 0].set_ylabel("neurons")
        return save(fig, path)


def rate_histogram(hist, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(3.4, 2.2), constrained_layout=True)
        ax.stairs(hist, np.linspace(0, 1, len(hist) + 1), fill=True)
        ax.set(xlabel="mean latent activity", ylabel="neurons")
        return save(fig, path)


def _label_band(ax, labels):
    ax.imshow(np.asarray(labels)[None, :], aspect="auto", cmap="tab10", vmin=0, vmax=9)
    ax.set_yticks([])
    ax.set_xticks([])


def latent_overview(lat, order, maps, path):
    """Clustered latent matrix with label band, and both correlation maps."""
    vmin, vmax = lat.scale
    cmap = DIVERGING if vmin < 0 else SEQUENTIAL
    with plt.rc_context(RC):
        fig = plt.figure(figsize=(11, 3.8), constrained_layout=True)
        grid = fig.add_gridspec(2, 3, height_ratios=(1, 14))
        band = fig.add_subplot(grid[0, 0])
        _label_band(band, lat.labels[order])
        band.set_title("latent activity (clustered examples)")
        ax = fig.add_subplot(grid[1, 0])
        im = ax.imshow(lat.values[order].T, aspect="auto", cmap=cmap, vmin=vmin, vmax=vmax)
        ax.set(xlabel="example", ylabel="latent neuron")
        fig.colorbar(im, ax=ax, shrink=0.8)

        eo = maps.example_order
        band = fig.add_subplot(grid[0, 1])
        _label_band(band, lat.labels[eo])
        band.set_title("example correlation")
        ax = fig.add_subplot(grid[1, 1])
        ax.imshow(maps.example_corr[np.ix_(eo, eo)], cmap=DIVERGING, vmin=-1, vmax=1)
        ax.set(xlabel="example", ylabel="example")

        ax = fig.add_subplot(grid[1, 2])
        if maps.neuron_corr is not None:
            no = maps.neuron_order
            im = ax.imshow(maps.neuron_corr[np.ix_(no, no)], cmap=DIVERGING, vmin=-1, vmax=1)
            fig.colorbar(im, ax=ax, shrink=0.8)
        else:
            ax.text(0.5, 0.5, "fewer than two\nactive neurons", ha="center", va="center")
        ax.set(title="neuron correlation", xlabel="neuron", ylabel="neuron")
        return save(fig, path)

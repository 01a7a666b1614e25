"""Plot emission: loss curves and study line plots."""

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def loss_curves(csv_path, out_png):
    with open(csv_path) as f:
        rows = list(csv.DictReader(f))
    if not rows:
        return
    steps = [int(r["step"]) for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    for column in ("total", "msa", "msc", "rec_l1", "rec_p", "rec_ssim"):
        ax.plot(steps, [float(r[column]) for r in rows], label=column, linewidth=1)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def study_lines(rows, x_key, y_keys, out_png, x_label=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    xs = [r[x_key] for r in rows]
    for key in y_keys:
        ax.plot(xs, [r[key] for r in rows], marker="o", label=key)
    ax.set_xlabel(x_label or x_key)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)


def before_after_grid(pairs, out_png):
    """Rows of (hazy, dehazed) image pairs."""
    n = len(pairs)
    fig, axes = plt.subplots(n, 2, figsize=(5, 2.4 * n), squeeze=False)
    for i, (before, after) in enumerate(pairs):
        axes[i][0].imshow(before)
        axes[i][0].set_title("input", fontsize=8)
        axes[i][1].imshow(after)
        axes[i][1].set_title("output", fontsize=8)
        for ax in axes[i]:
            ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_png, dpi=110)
    plt.close(fig)

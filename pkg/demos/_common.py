"""Shared helpers for the demo scripts."""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from onestep_eit.reconstruct import rasterize_field  # noqa: E402


def out_dir() -> Path:
    """Output directory from ``argv[1]`` (default ``demo_out``)."""
    path = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def save_panels(fields, titles, path, size=256):
    """Save reconstructions side by side on a shared color scale."""
    imgs = [rasterize_field(f, size) for f in fields]
    vmax = max(abs(im).max() for im in imgs) or 1.0
    fig, axes = plt.subplots(1, len(imgs), figsize=(3.2 * len(imgs), 3.4), squeeze=False)
    for ax, im, title in zip(axes[0], imgs, titles):
        ax.imshow(im, extent=(-1, 1, -1, 1), cmap="RdBu_r", vmin=-vmax, vmax=vmax)
        ax.set_title(title, fontsize=9)
        ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    print(f"wrote {path}")

"""Matplotlib figure rendering for CLI reports (Agg, file output only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "adapt_report_figure",
    "concat_strip",
    "iou_figure",
    "kept_fraction_figure",
    "sweep_energy_figure",
]


def concat_strip(images) -> np.ndarray:
    """Horizontal pixel concatenation of equally sized images (no rendering)."""
    arrs = [np.asarray(im) for im in images]
    if not arrs:
        raise ValueError("expected at least one image")
    h = arrs[0].shape[0]
    if any(a.shape[0] != h or a.ndim != arrs[0].ndim for a in arrs):
        raise ValueError("strip panels must share height and channel count")
    return np.concatenate(arrs, axis=1)


def sweep_energy_figure(betas, energies, path) -> None:
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(betas, energies, "o-")
    ax.set_xlabel("beta")
    ax.set_ylabel("amplitude shift energy")
    ax.set_title("Spectrum replaced vs. band size")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def iou_figure(per_class, mean, path, class_names=None) -> None:
    per_class = np.asarray(per_class, dtype=float)
    k = per_class.size
    names = class_names if class_names else [str(i) for i in range(k)]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * k), 3.5))
    shown = np.nan_to_num(per_class, nan=0.0)
    ax.bar(range(k), shown, color=["#888888" if np.isnan(v) else "#3572b0" for v in per_class])
    ax.axhline(mean, color="#c0392b", linestyle="--", label=f"mean {mean:.4f}")
    ax.set_xticks(range(k))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("IoU")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def kept_fraction_figure(kept_fraction, path) -> None:
    kept = np.asarray(kept_fraction, dtype=float)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * kept.size), 3.5))
    ax.bar(range(kept.size), kept, color="#3572b0")
    ax.set_xlabel("class")
    ax.set_ylabel("kept fraction")
    ax.set_ylim(0, 1.05)
    ax.set_title("Pseudo-label pixels kept per class")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def adapt_report_figure(residuals, clamp_counts, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    if len(residuals):
        ax1.hist(residuals, bins=min(30, max(5, len(residuals) // 2)), color="#3572b0")
    ax1.set_xlabel("max imaginary residual")
    ax1.set_ylabel("items")
    if len(clamp_counts):
        ax2.hist(clamp_counts, bins=min(30, max(5, len(clamp_counts) // 2)), color="#e67e22")
    ax2.set_xlabel("clamped pixels")
    ax2.set_ylabel("items")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

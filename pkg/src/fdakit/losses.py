"""Scalar loss kernels over per-pixel class probability maps.

These kernels define reference semantics a training stack can test
against: natural log everywhere, probabilities floored at 1e-12 before any
log, and reductions computed in a fixed summation order so repeated runs
agree bit for bit. The default reduction is the mean over valid pixels,
which makes loss magnitudes resolution independent; a "sum" mode is
available where exact sum-over-pixels fidelity matters (the entropy weight
default of 0.005 was calibrated for mean reduction at training
resolution).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EmptyReductionError",
    "IGNORE_LABEL",
    "LossConfig",
    "PROB_FLOOR",
    "as_label_map",
    "as_prediction_map",
    "charbonnier",
    "combined_loss",
    "cross_entropy",
    "pixel_entropy",
    "robust_entropy",
    "robust_entropy_grad",
    "sst_loss",
]

IGNORE_LABEL = 255
PROB_FLOOR = 1e-12

_REDUCTIONS = ("mean", "sum")


class EmptyReductionError(ValueError):
    """A reduction had no valid pixels to aggregate over."""


@dataclass(frozen=True)
class LossConfig:
    """Knobs shared by the loss kernels.

    ``eta`` is the Charbonnier exponent, ``lambda_ent`` the weight of the
    entropy term in combined losses, ``epsilon`` the Charbonnier floor
    constant.
    """

    eta: float = 2.0
    lambda_ent: float = 0.005
    epsilon: float = 0.001
    reduction: str = "mean"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.lambda_ent < 0:
            raise ValueError(f"lambda_ent must be non-negative, got {self.lambda_ent}")
        if self.reduction not in _REDUCTIONS:
            raise ValueError(f"reduction must be one of {_REDUCTIONS}, got {self.reduction!r}")


_DEFAULT = LossConfig()


def as_prediction_map(pred, validate: bool = True) -> np.ndarray:
    """Coerce to a float64 (H, W, K) probability map, checking softmax validity.

    With ``validate=False`` only shape and finiteness are enforced, which
    lets the kernels run on perturbed inputs (finite-difference probes).
    """
    arr = np.asarray(pred, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] < 1:
        raise ValueError(f"expected an (H, W, K) array, got shape {np.shape(pred)}")
    if not np.isfinite(arr).all():
        raise ValueError("prediction map contains non-finite probabilities")
    if validate:
        if arr.min() < 0.0:
            raise ValueError("probabilities must be non-negative")
        sums = arr.sum(axis=2)
        err = float(np.abs(sums - 1.0).max())
        if err > 1e-5:
            raise ValueError(f"per-pixel probabilities must sum to 1 within 1e-5 (max error {err:.3g})")
    return arr


def as_label_map(labels, num_classes: int) -> np.ndarray:
    """Coerce to an (H, W) integer label map; non-ignore labels must be in [0, K)."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"expected an (H, W) label map, got shape {np.shape(labels)}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"labels must be integers, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    valid = arr != IGNORE_LABEL
    if valid.any():
        lo, hi = int(arr[valid].min()), int(arr[valid].max())
        if lo < 0 or hi >= num_classes:
            raise ValueError(
                f"non-ignore labels must lie in [0, {num_classes}), got range [{lo}, {hi}]"
            )
    return arr


def cross_entropy(pred, labels, cfg: LossConfig = _DEFAULT, validate: bool = True) -> float:
    """Cross-entropy between a probability map and integer labels.

    Reduces -log p(label) over non-ignore pixels (mean by default).
    Raises EmptyReductionError when every pixel is ignored: an all-ignored
    map has no defined loss, and silently returning 0 would hide it.
    """
    arr = as_prediction_map(pred, validate=validate)
    lab = as_label_map(labels, arr.shape[2])
    if lab.shape != arr.shape[:2]:
        raise ValueError(f"label dims {lab.shape} do not match prediction dims {arr.shape[:2]}")
    keep = lab != IGNORE_LABEL
    if not keep.any():
        raise EmptyReductionError("cross_entropy: every pixel is ignored")
    gather = np.take_along_axis(arr, np.where(keep, lab, 0)[:, :, None], axis=2)[:, :, 0]
    vals = -np.log(np.maximum(gather[keep], PROB_FLOOR))
    total = float(vals.sum())
    return total / vals.size if cfg.reduction == "mean" else total


def pixel_entropy(pred, validate: bool = True) -> np.ndarray:
    """Per-pixel Shannon entropy -sum_k p log p (natural log, 0*log 0 := 0)."""
    arr = as_prediction_map(pred, validate=validate)
    contrib = np.where(arr > 0.0, arr * np.log(np.maximum(arr, PROB_FLOOR)), 0.0)
    return -contrib.sum(axis=2)


def charbonnier(x, eta: float, epsilon: float = 0.001):
    """Smooth robust penalty (x^2 + epsilon^2)^eta.

    Strictly increasing on x >= 0 for any eta > 0, so it weights
    high-entropy pixels more heavily than low-entropy ones.
    """
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    return (np.asarray(x, dtype=np.float64) ** 2 + epsilon ** 2) ** eta


def robust_entropy(pred, cfg: LossConfig = _DEFAULT, validate: bool = True) -> float:
    """Charbonnier-weighted entropy: reduce rho(entropy) over all pixels."""
    ent = pixel_entropy(pred, validate=validate)
    vals = charbonnier(ent, cfg.eta, cfg.epsilon)
    total = float(vals.sum())
    return total / vals.size if cfg.reduction == "mean" else total


def robust_entropy_grad(pred, cfg: LossConfig = _DEFAULT, validate: bool = True) -> np.ndarray:
    """Gradient of ``robust_entropy`` with respect to each probability entry.

    Probabilities are treated as free inputs (no renormalization term), the
    same convention a training stack uses when it backpropagates through a
    softmax separately. Returns an (H, W, K) array.
    """
    arr = as_prediction_map(pred, validate=validate)
    ent = pixel_entropy(arr, validate=False)
    # d rho / d H, then d H / d p_k = -(log p_k + 1)
    rho_prime = cfg.eta * (ent ** 2 + cfg.epsilon ** 2) ** (cfg.eta - 1.0) * 2.0 * ent
    dent = -(np.log(np.maximum(arr, PROB_FLOOR)) + 1.0)
    grad = rho_prime[:, :, None] * dent
    if cfg.reduction == "mean":
        grad /= ent.size
    return grad


def combined_loss(src_ce: float, tgt_ent: float, cfg: LossConfig = _DEFAULT) -> float:
    """Segmentation loss plus weighted entropy regularizer."""
    if not (np.isfinite(src_ce) and np.isfinite(tgt_ent)):
        raise ValueError("loss terms must be finite")
    return float(src_ce) + cfg.lambda_ent * float(tgt_ent)


def sst_loss(src_ce: float, tgt_ent: float, pseudo_ce: float, cfg: LossConfig = _DEFAULT) -> float:
    """Self-supervised round loss: combined loss plus the pseudo-label term.

    ``pseudo_ce`` is a cross_entropy value computed against pseudo labels
    (rejected pixels carry IGNORE_LABEL and are excluded there).
    """
    if not np.isfinite(pseudo_ce):
        raise ValueError("loss terms must be finite")
    return combined_loss(src_ce, tgt_ent, cfg) + float(pseudo_ce)

"""Prediction averaging, confidence-filtered pseudo-labels, and IoU scoring.

Pseudo-labeling is a two-pass protocol: pass 1 collects the per-class
confidence pools (``class_confidences``; pools from shards merge by
concatenation), pass 2 derives thresholds and applies the acceptance rule
(``confidence_thresholds`` + ``pseudo_labels``). A parallel driver can
shard pass 1 by image and still reproduce the serial result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .losses import EmptyReductionError, IGNORE_LABEL, as_label_map, as_prediction_map

__all__ = [
    "EnsembleConfig",
    "PseudoLabelResult",
    "argmax_labels",
    "class_confidences",
    "compute_miou",
    "confidence_thresholds",
    "mean_prediction",
    "pseudo_labels",
]

SCOPE_BATCH = "batch"
SCOPE_IMAGE = "image"


@dataclass(frozen=True)
class EnsembleConfig:
    """Acceptance rule for pseudo-labels.

    A pixel is kept iff its confidence reaches ``confidence_floor`` OR
    falls within the top ``top_fraction`` of confidences among pixels
    sharing its candidate class. ``scope`` controls the pool those
    quantiles are taken over: the whole batch (default) or each image
    separately.
    """

    top_fraction: float = 0.66
    confidence_floor: float = 0.9
    scope: str = SCOPE_BATCH

    def __post_init__(self):
        if not (0.0 < self.top_fraction <= 1.0):
            raise ValueError(f"top_fraction must lie in (0, 1], got {self.top_fraction}")
        if not (0.0 <= self.confidence_floor <= 1.0):
            raise ValueError(f"confidence_floor must lie in [0, 1], got {self.confidence_floor}")
        if self.scope not in (SCOPE_BATCH, SCOPE_IMAGE):
            raise ValueError(f"scope must be '{SCOPE_BATCH}' or '{SCOPE_IMAGE}', got {self.scope!r}")


@dataclass
class PseudoLabelResult:
    """Filtered labels plus per-class bookkeeping.

    ``labels`` holds one (H, W) int map per input image with IGNORE_LABEL
    where the filter rejected the pixel. ``kept_fraction[k]`` is kept/total
    among pixels whose candidate class is k (0 when the class is absent);
    ``mean_confidence[k]`` averages the confidences of kept pixels.
    """

    labels: list[np.ndarray]
    kept_fraction: np.ndarray
    mean_confidence: np.ndarray


def mean_prediction(preds: Sequence[np.ndarray]) -> np.ndarray:
    """Per-pixel arithmetic mean of probability maps.

    The mean of softmax outputs is itself a probability distribution over
    the K classes, so the result is a valid prediction map.
    """
    if len(preds) == 0:
        raise ValueError("expected at least one prediction map")
    maps = [as_prediction_map(p) for p in preds]
    shape = maps[0].shape
    for i, m in enumerate(maps):
        if m.shape != shape:
            raise ValueError(f"prediction dims differ: map 0 is {shape}, map {i} is {m.shape}")
    return np.mean(np.stack(maps, axis=0), axis=0)


def argmax_labels(pred, validate: bool = True) -> np.ndarray:
    """Per-pixel index of the maximum probability; ties go to the lowest class."""
    arr = as_prediction_map(pred, validate=validate)
    return np.argmax(arr, axis=2).astype(np.int32)


def class_confidences(pred) -> tuple[np.ndarray, np.ndarray]:
    """Pass 1 of pseudo-labeling: candidate labels and confidences for one map."""
    arr = as_prediction_map(pred)
    cand = np.argmax(arr, axis=2).astype(np.int32)
    conf = np.max(arr, axis=2)
    return cand, conf


def _keep_count(n: int, top_fraction: float) -> int:
    # nearest-rank with a 1e-9 rounding guard so e.g. 0.66 * 100 keeps
    # exactly 66 pixels instead of 67 from float fuzz
    return min(n, int(math.ceil(round(top_fraction * n, 9))))


def confidence_thresholds(cand_conf_pairs: Sequence[tuple[np.ndarray, np.ndarray]],
                          num_classes: int, top_fraction: float) -> np.ndarray:
    """Pass 2a: per-class quantile thresholds over the pooled confidences.

    The threshold is the nearest-rank (1 - top_fraction) quantile of the
    pooled confidences of each candidate class; classes with no pixels get
    +inf so the quantile branch never accepts them.
    """
    pooled: list[list[np.ndarray]] = [[] for _ in range(num_classes)]
    for cand, conf in cand_conf_pairs:
        for k in range(num_classes):
            sel = conf[cand == k]
            if sel.size:
                pooled[k].append(sel)
    thresholds = np.full(num_classes, np.inf)
    for k in range(num_classes):
        if not pooled[k]:
            continue
        vals = np.sort(np.concatenate(pooled[k]))
        keep = _keep_count(vals.size, top_fraction)
        thresholds[k] = vals[vals.size - keep]
    return thresholds


def pseudo_labels(preds, cfg: EnsembleConfig = EnsembleConfig()) -> PseudoLabelResult:
    """Filter argmax labels by the top-fraction / confidence-floor rule.

    ``preds`` is one (H, W, K) map or a sequence of them (a batch). With
    top_fraction=1 and confidence_floor=0 every pixel is kept and the
    labels equal ``argmax_labels``.
    """
    if isinstance(preds, np.ndarray) and preds.ndim == 3:
        batch = [preds]
    else:
        batch = list(preds)
    if len(batch) == 0:
        raise ValueError("expected at least one prediction map")
    pairs = [class_confidences(p) for p in batch]
    num_classes = max(as_prediction_map(p).shape[2] for p in batch)

    labels: list[np.ndarray] = []
    kept_counts = np.zeros(num_classes, dtype=np.int64)
    total_counts = np.zeros(num_classes, dtype=np.int64)
    conf_sums = np.zeros(num_classes, dtype=np.float64)

    if cfg.scope == SCOPE_BATCH:
        thresholds = confidence_thresholds(pairs, num_classes, cfg.top_fraction)
    for cand, conf in pairs:
        if cfg.scope == SCOPE_IMAGE:
            thresholds = confidence_thresholds([(cand, conf)], num_classes, cfg.top_fraction)
        keep = (conf >= cfg.confidence_floor) | (conf >= thresholds[cand])
        out = np.where(keep, cand, IGNORE_LABEL).astype(np.int32)
        labels.append(out)
        for k in range(num_classes):
            sel = cand == k
            total_counts[k] += int(sel.sum())
            kept = sel & keep
            kept_counts[k] += int(kept.sum())
            conf_sums[k] += float(conf[kept].sum())

    kept_fraction = np.divide(kept_counts, total_counts,
                              out=np.zeros(num_classes), where=total_counts > 0)
    mean_confidence = np.divide(conf_sums, kept_counts,
                                out=np.zeros(num_classes), where=kept_counts > 0)
    return PseudoLabelResult(labels, kept_fraction, mean_confidence)


def compute_miou(preds, gts, num_classes: int) -> tuple[np.ndarray, float]:
    """Per-class intersection-over-union and its mean over a set of map pairs.

    IoU_k = TP_k / (TP_k + FP_k + FN_k) accumulated over all pairs.
    Ground-truth IGNORE pixels never count; predicted IGNORE pixels count
    as missing (false negatives for their ground-truth class). Classes
    absent from both ground truth and predictions are excluded from the
    mean and reported as NaN.
    """
    if num_classes < 1:
        raise ValueError(f"num_classes must be at least 1, got {num_classes}")
    if isinstance(preds, np.ndarray) and preds.ndim == 2:
        preds, gts = [preds], [gts]
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts):
        raise ValueError(f"got {len(preds)} predictions but {len(gts)} ground truths")

    tp = np.zeros(num_classes, dtype=np.int64)
    pred_total = np.zeros(num_classes, dtype=np.int64)
    gt_total = np.zeros(num_classes, dtype=np.int64)
    any_valid = False
    for i, (p, g) in enumerate(zip(preds, gts)):
        pl = as_label_map(p, num_classes)
        gl = as_label_map(g, num_classes)
        if pl.shape != gl.shape:
            raise ValueError(f"pair {i}: prediction dims {pl.shape} != ground truth dims {gl.shape}")
        valid = gl != IGNORE_LABEL
        if not valid.any():
            continue
        any_valid = True
        pv, gv = pl[valid], gl[valid]
        gt_total += np.bincount(gv, minlength=num_classes)[:num_classes]
        scored = pv != IGNORE_LABEL
        pred_total += np.bincount(pv[scored], minlength=num_classes)[:num_classes]
        hit = scored & (pv == gv)
        tp += np.bincount(gv[hit], minlength=num_classes)[:num_classes]
    if not any_valid:
        raise EmptyReductionError("compute_miou: no valid (non-ignore) pixels in any pair")

    union = gt_total + pred_total - tp
    present = union > 0
    iou = np.full(num_classes, np.nan)
    iou[present] = tp[present] / union[present]
    return iou, float(np.mean(iou[present]))

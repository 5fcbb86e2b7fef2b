"""Frequency-domain image adaptation toolkit.

Swap the low-frequency amplitude band of source images with target images
to re-style datasets without touching content, evaluate the matching
robust-entropy loss kernels, and build confidence-filtered pseudo-labels
from prediction ensembles.
"""

__version__ = "0.1.0"

from .ensemble import (
    EnsembleConfig,
    PseudoLabelResult,
    argmax_labels,
    compute_miou,
    mean_prediction,
    pseudo_labels,
)
from .losses import (
    IGNORE_LABEL,
    EmptyReductionError,
    LossConfig,
    charbonnier,
    combined_loss,
    cross_entropy,
    pixel_entropy,
    robust_entropy,
    robust_entropy_grad,
    sst_loss,
)
from .pipeline import (
    AdaptJob,
    DatasetManifest,
    JobReport,
    build_manifest,
    pair_stream,
    preprocess,
    read_tensor,
    run_adapt_job,
    write_tensor,
)
from .spectral import (
    AmplitudePhase,
    forward_fft,
    inverse_fft,
    recombine,
    split_amplitude_phase,
)
from .transfer import (
    BetaMask,
    TransferResult,
    build_mask,
    multi_beta_transfer,
    spectral_transfer,
)

__all__ = [
    "AdaptJob",
    "AmplitudePhase",
    "BetaMask",
    "DatasetManifest",
    "EmptyReductionError",
    "EnsembleConfig",
    "IGNORE_LABEL",
    "JobReport",
    "LossConfig",
    "PseudoLabelResult",
    "TransferResult",
    "argmax_labels",
    "build_manifest",
    "build_mask",
    "charbonnier",
    "combined_loss",
    "compute_miou",
    "cross_entropy",
    "forward_fft",
    "inverse_fft",
    "mean_prediction",
    "multi_beta_transfer",
    "pair_stream",
    "pixel_entropy",
    "preprocess",
    "pseudo_labels",
    "read_tensor",
    "recombine",
    "robust_entropy",
    "robust_entropy_grad",
    "run_adapt_job",
    "split_amplitude_phase",
    "spectral_transfer",
    "sst_loss",
    "write_tensor",
]

"""Low-frequency amplitude swapping between image spectra.

The band to swap is a centered rectangle whose half-extent is the fraction
``beta`` of each spectrum dimension, so the band size is resolution
independent. Replacing the band amplitudes of a source spectrum with a
target's while keeping the source phase re-renders the source content with
the target's low-frequency appearance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft

from .spectral import as_image_array, dc_bin

__all__ = [
    "BetaMask",
    "PreparedTarget",
    "TransferResult",
    "amplitude_shift_energy",
    "band_half_extents",
    "build_mask",
    "multi_beta_transfer",
    "prepare_target",
    "spectral_transfer",
    "swapped_band_energy",
]


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not (0.0 <= beta <= 1.0) or not math.isfinite(beta):
        raise ValueError(f"beta must lie in [0, 1], got {beta}")
    return beta


def band_half_extents(height: int, width: int, beta: float) -> tuple[int, int]:
    """Half-extents (floor(beta*H), floor(beta*W)) of the swapped band."""
    beta = _check_beta(beta)
    return math.floor(beta * height), math.floor(beta * width)


@dataclass(frozen=True)
class BetaMask:
    """Binary low-frequency band mask in the DC-centered layout.

    The band is inclusive: bit (m, n) is set iff |m - H//2| <= floor(beta*H)
    and |n - W//2| <= floor(beta*W). beta=0 keeps exactly the DC bin, and an
    axis saturates to full coverage once 2*floor(beta*dim)+1 >= dim, so
    beta=0.5 and beta=1 select every bin.
    """

    height: int
    width: int
    beta: float
    half_h: int
    half_w: int
    bits: np.ndarray

    @property
    def popcount(self) -> int:
        return int(np.count_nonzero(self.bits))


def build_mask(height: int, width: int, beta: float) -> BetaMask:
    """Build the band mask for an H x W spectrum at the given beta."""
    if height < 1 or width < 1:
        raise ValueError(f"mask dims must be at least 1x1, got {height}x{width}")
    half_h, half_w = band_half_extents(height, width, beta)
    cy, cx = dc_bin(height, width)
    rows = np.abs(np.arange(height) - cy) <= half_h
    cols = np.abs(np.arange(width) - cx) <= half_w
    bits = rows[:, None] & cols[None, :]
    return BetaMask(height, width, float(beta), half_h, half_w, bits)


def _band_rows_cols(height: int, width: int, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices of the band in the standard (unshifted) FFT layout."""
    half_h, half_w = band_half_extents(height, width, beta)
    rows = np.unique(np.arange(-half_h, half_h + 1) % height)
    cols = np.unique(np.arange(-half_w, half_w + 1) % width)
    return rows, cols


@dataclass
class TransferResult:
    """Outcome of one amplitude swap.

    ``adapted`` has the source dims; ``imag_residual`` is the max absolute
    imaginary part discarded by the inverse transform; ``clamp_count`` is
    the number of samples that fell outside [0, 255] before clamping
    (clamping itself is skipped when the transfer ran with clamp=False).
    """

    adapted: np.ndarray
    beta: float
    imag_residual: float
    clamp_count: int


def _swap_band_amplitude(f_src: np.ndarray, f_tgt: np.ndarray, rows: np.ndarray,
                         cols: np.ndarray, reuse_src: bool) -> np.ndarray:
    """``f_src`` with its band amplitude replaced by ``f_tgt``'s.

    Scaling a coefficient by |target|/|source| rewrites its modulus while
    keeping its argument; zero source coefficients take the target
    amplitude at phase 0 (the arg(0) := 0 convention). With ``reuse_src``
    the caller hands over ownership of ``f_src`` and no copy is made.
    """
    out = f_src if reuse_src else f_src.copy()
    ix = np.ix_(rows, cols)
    block = out[ix]
    amp_s = np.abs(block)
    amp_t = np.abs(f_tgt[ix])
    zero = amp_s == 0.0
    ratio = np.divide(amp_t, amp_s, out=np.zeros_like(amp_s), where=~zero)
    block = block * ratio
    block[zero] = amp_t[zero]
    out[ix] = block
    return out


def _transfer_from_spectra(src: np.ndarray, f_src: np.ndarray, f_tgt: np.ndarray,
                           beta: float, strict_zero: bool, clamp: bool,
                           reuse_src: bool = False) -> TransferResult:
    if strict_zero and beta == 0.0:
        # identity reading of the beta=0 limit: swap nothing at all
        return TransferResult(src.copy(), 0.0, 0.0, 0)
    height, width = src.shape[:2]
    rows, cols = _band_rows_cols(height, width, beta)
    mixed = _swap_band_amplitude(f_src, f_tgt, rows, cols, reuse_src)
    out = scipy.fft.ifft2(mixed, axes=(0, 1), overwrite_x=True)
    residual = float(np.abs(out.imag).max())
    real = np.ascontiguousarray(out.real)
    clamp_count = int(np.count_nonzero((real < 0.0) | (real > 255.0)))
    if clamp:
        real = np.clip(real, 0.0, 255.0)
    return TransferResult(real, float(beta), residual, clamp_count)


@dataclass(frozen=True)
class PreparedTarget:
    """Validated target spectrum, reusable across many transfers.

    Batch jobs typically style many sources with few targets; preparing a
    target once skips its per-pair validation and forward transform. The
    results are identical to passing the target image directly.
    """

    shape: tuple[int, int, int]
    spectrum: np.ndarray


def prepare_target(target) -> PreparedTarget:
    """Precompute the spectrum of a [0, 255] target image."""
    tgt = as_image_array(target, require_range=True)
    return PreparedTarget(tuple(tgt.shape), scipy.fft.fft2(tgt, axes=(0, 1)))


def _validated_pair(source, target, clamp: bool) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Returns (source array, target spectrum or None, target array or None).

    Range enforcement is skipped when clamp=False so unclamped outputs can
    be fed back in (e.g. to check that re-applying a transfer is a no-op).
    """
    src = as_image_array(source, require_range=clamp)
    if isinstance(target, PreparedTarget):
        if src.shape != target.shape:
            raise ValueError(
                f"source dims {src.shape} differ from the prepared target's {target.shape}; "
                "resize the source or prepare a matching target"
            )
        return src, target.spectrum, None
    tgt = as_image_array(target, require_range=clamp)
    if src.shape != tgt.shape:
        raise ValueError(
            f"source and target dims differ ({src.shape} vs {tgt.shape}); "
            "resize the target to the source dims first (the batch pipeline does this)"
        )
    return src, None, tgt


def spectral_transfer(source, target, beta: float, *, strict_zero: bool = False,
                      clamp: bool = True) -> TransferResult:
    """Swap the low-frequency amplitude band of ``source`` with ``target``'s.

    Per channel: take both spectra, replace the source amplitude with the
    target amplitude on the beta band, keep the source phase everywhere,
    and invert. The real part is clamped to [0, 255] unless ``clamp`` is
    False; quantization to 8-bit happens at encode time, not here.
    ``target`` may be an image or a ``PreparedTarget``.

    With the default convention beta=0 still swaps the DC bin, which
    matches the source mean brightness to the target's; ``strict_zero``
    makes beta=0 return the source unchanged instead.
    """
    return multi_beta_transfer(source, target, [beta],
                               strict_zero=strict_zero, clamp=clamp)[0]


def multi_beta_transfer(source, target, betas: Sequence[float], *,
                        strict_zero: bool = False, clamp: bool = True) -> list[TransferResult]:
    """Run the amplitude swap for several betas off a single FFT pair.

    Both spectra are computed once and reused, so the per-beta results are
    identical to individual ``spectral_transfer`` calls. Results follow
    the input beta order.
    """
    if len(betas) == 0:
        raise ValueError("betas must be non-empty")
    betas = [_check_beta(b) for b in betas]
    src, f_tgt, tgt = _validated_pair(source, target, clamp)
    if strict_zero and all(b == 0.0 for b in betas):
        return [TransferResult(src.copy(), 0.0, 0.0, 0) for _ in betas]
    f_src = scipy.fft.fft2(src, axes=(0, 1))
    if f_tgt is None:
        f_tgt = scipy.fft.fft2(tgt, axes=(0, 1))
    return [
        _transfer_from_spectra(src, f_src, f_tgt, beta, strict_zero, clamp,
                               reuse_src=(i == len(betas) - 1))
        for i, beta in enumerate(betas)
    ]


def swapped_band_energy(target, beta: float) -> float:
    """Total squared target amplitude over the beta band.

    This is the spectral energy a transfer at this beta writes into the
    source spectrum; it is non-decreasing in beta because the band only
    grows.
    """
    tgt = as_image_array(target)
    beta = _check_beta(beta)
    f_tgt = scipy.fft.fft2(tgt, axes=(0, 1))
    rows, cols = _band_rows_cols(tgt.shape[0], tgt.shape[1], beta)
    block = f_tgt[np.ix_(rows, cols)]
    return float((block.real ** 2 + block.imag ** 2).sum())


def amplitude_shift_energy(image_a, image_b) -> float:
    """Sum of squared per-bin amplitude differences between two images.

    Measures how far apart two images are in amplitude-spectrum terms;
    used to quantify how much of a source spectrum a transfer replaced.
    """
    a = as_image_array(image_a)
    b = as_image_array(image_b)
    if a.shape != b.shape:
        raise ValueError(f"image dims differ: {a.shape} vs {b.shape}")
    amp_a = np.abs(scipy.fft.fft2(a, axes=(0, 1)))
    amp_b = np.abs(scipy.fft.fft2(b, axes=(0, 1)))
    return float(((amp_a - amp_b) ** 2).sum())

"""DC-centered 2D Fourier analysis and synthesis of image channels.

Conventions used throughout the package:

- the forward transform is the plain double sum with no scale factor; the
  inverse carries the 1/(H*W) normalization
- spectra are stored DC-centered: the zero-frequency bin sits at index
  ``(H // 2, W // 2)``
- color images are transformed channel by channel; a spectrum list always
  holds one 2D complex array per channel
- the argument of a zero coefficient is defined as 0, so amplitude/phase
  decomposition is total

All operations are pure functions; arrays are safe to share across
threads. The FFT backend keeps an internal thread-safe plan cache that is
invisible to callers.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft

__all__ = [
    "AmplitudePhase",
    "as_image_array",
    "conjugate_symmetry_residual",
    "dc_bin",
    "forward_fft",
    "inverse_fft",
    "recombine",
    "split_amplitude_phase",
]


def dc_bin(height: int, width: int) -> tuple[int, int]:
    """Index of the zero-frequency bin in the DC-centered layout."""
    return height // 2, width // 2


def as_image_array(image, require_range: bool = False) -> np.ndarray:
    """Coerce ``image`` to a float64 ``(H, W, C)`` array and validate it.

    Accepts ``(H, W)`` or ``(H, W, C)`` with C in {1, 3}. Non-finite
    samples are rejected; with ``require_range`` samples must also lie in
    [0, 255] (the convention for images entering a transfer).
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(
            f"expected an (H, W) or (H, W, C) array with C in {{1, 3}}, got shape {np.shape(image)}"
        )
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"image dims must be at least 1x1, got {arr.shape[:2]}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite samples")
    if require_range and (arr.min() < 0.0 or arr.max() > 255.0):
        raise ValueError(
            f"image samples must lie in [0, 255], got range [{arr.min()}, {arr.max()}]"
        )
    return arr


def _as_spectrum_stack(spectra: Sequence[np.ndarray]) -> np.ndarray:
    """Validate a list of per-channel spectra and stack them to (H, W, C)."""
    if len(spectra) == 0:
        raise ValueError("expected at least one channel spectrum")
    arrs = [np.asarray(s, dtype=np.complex128) for s in spectra]
    shape = arrs[0].shape
    for i, a in enumerate(arrs):
        if a.ndim != 2:
            raise ValueError(f"channel spectrum {i} is not 2D (shape {a.shape})")
        if a.shape != shape:
            raise ValueError(
                f"channel spectra dims differ: channel 0 is {shape}, channel {i} is {a.shape}"
            )
        if not np.isfinite(a).all():
            raise ValueError(f"channel spectrum {i} contains non-finite coefficients")
    return np.stack(arrs, axis=-1)


def forward_fft(image) -> list[np.ndarray]:
    """Per-channel 2D DFT of an image, unnormalized and DC-centered.

    Returns one complex (H, W) array per channel with the zero-frequency
    coefficient moved to ``dc_bin(H, W)``.
    """
    arr = as_image_array(image)
    spec = scipy.fft.fft2(arr, axes=(0, 1))
    spec = np.fft.fftshift(spec, axes=(0, 1))
    return [np.ascontiguousarray(spec[:, :, c]) for c in range(spec.shape[2])]


def inverse_fft(spectra: Sequence[np.ndarray]) -> tuple[np.ndarray, float]:
    """Map DC-centered spectra back to image space.

    Applies the 1/(H*W)-normalized inverse transform and returns the real
    part as an (H, W, C) float64 array together with the maximum absolute
    imaginary residual (a diagnostic: it is ~0 whenever the input spectra
    are conjugate-symmetric). The output is not clamped or quantized.
    """
    stack = _as_spectrum_stack(spectra)
    out = scipy.fft.ifft2(np.fft.ifftshift(stack, axes=(0, 1)), axes=(0, 1))
    residual = float(np.abs(out.imag).max())
    return np.ascontiguousarray(out.real), residual


@dataclass(frozen=True)
class AmplitudePhase:
    """Modulus/argument decomposition of per-channel spectra.

    ``amplitude`` is non-negative, ``phase`` is in (-pi, pi]; both are
    (H, W, C) float64 arrays. Recombining ``amplitude * exp(j * phase)``
    reproduces the originating spectra.
    """

    amplitude: np.ndarray
    phase: np.ndarray


def split_amplitude_phase(spectra: Sequence[np.ndarray]) -> AmplitudePhase:
    """Split spectra into amplitude and phase; the phase of a zero coefficient is 0."""
    stack = _as_spectrum_stack(spectra)
    return AmplitudePhase(amplitude=np.abs(stack), phase=np.angle(stack))


def recombine(ap: AmplitudePhase) -> list[np.ndarray]:
    """Rebuild per-channel spectra as ``amplitude * (cos(phase) + j*sin(phase))``."""
    amplitude = np.asarray(ap.amplitude, dtype=np.float64)
    phase = np.asarray(ap.phase, dtype=np.float64)
    if amplitude.shape != phase.shape or amplitude.ndim != 3:
        raise ValueError(
            f"amplitude and phase must share an (H, W, C) shape, got {amplitude.shape} and {phase.shape}"
        )
    if not np.isfinite(amplitude).all() or not np.isfinite(phase).all():
        raise ValueError("amplitude/phase contain non-finite values")
    if amplitude.min() < 0.0:
        raise ValueError("amplitude must be non-negative everywhere")
    spec = amplitude * (np.cos(phase) + 1j * np.sin(phase))
    return [np.ascontiguousarray(spec[:, :, c]) for c in range(spec.shape[2])]


def conjugate_symmetry_residual(spectrum: np.ndarray) -> float:
    """Deviation of a DC-centered spectrum from conjugate symmetry.

    Spectra of real-valued channels satisfy F(m, n) = conj(F(-m, -n));
    returns max |F - conj(mirror F)| relative to the peak amplitude.
    """
    s = np.asarray(spectrum, dtype=np.complex128)
    if s.ndim != 2:
        raise ValueError(f"expected a 2D spectrum, got shape {s.shape}")
    h, w = s.shape
    std = np.fft.ifftshift(s)
    mirrored = std[(-np.arange(h)) % h][:, (-np.arange(w)) % w]
    scale = float(np.abs(s).max())
    if scale == 0.0:
        return 0.0
    return float(np.abs(std - np.conj(mirrored)).max() / scale)

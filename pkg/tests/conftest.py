import numpy as np
import pytest


def make_image(rng, h, w, c=3):
    """Random integer-valued image in [0, 255], float64 (H, W, C)."""
    return rng.integers(0, 256, size=(h, w, c)).astype(np.float64)


def make_prediction(rng, h, w, k):
    """Random valid probability map (H, W, K)."""
    raw = rng.uniform(0.05, 1.0, size=(h, w, k))
    return raw / raw.sum(axis=2, keepdims=True)


def synth_photo(rng, h, w):
    """Structured synthetic image: gradients, shapes, mild noise.

    Compresses like a photograph, unlike pure noise, which matters for the
    throughput-sensitive pipeline tests.
    """
    y, x = np.mgrid[0:h, 0:w]
    img = np.zeros((h, w, 3))
    for c in range(3):
        img[..., c] = 70 + 110 * (x / w) + 35 * np.sin(2 * np.pi * y / 97 + 2 * c)
    for _ in range(10):
        top, left = int(rng.integers(0, h)), int(rng.integers(0, w))
        bh, bw = int(rng.integers(8, max(9, h // 3))), int(rng.integers(8, max(9, w // 3)))
        color = rng.integers(0, 256, size=3).astype(np.float64)
        img[top:top + bh, left:left + bw] = 0.5 * img[top:top + bh, left:left + bw] + 0.5 * color
    img += rng.normal(0, 2.0, size=img.shape)
    return np.clip(img, 0, 255).round()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

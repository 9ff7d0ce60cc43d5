"""Real 2-D FFT helpers (thin wrappers over :mod:`numpy.fft`) and frequency grids."""

import numpy as np


def rfft2(x: np.ndarray) -> np.ndarray:
    """Real-to-complex transform over the last two axes."""
    return np.fft.rfft2(x, axes=(-2, -1))


def irfft2(spec: np.ndarray, shape: tuple) -> np.ndarray:
    return np.fft.irfft2(spec, s=shape, axes=(-2, -1))


def radial_frequency(H: int, W: int) -> np.ndarray:
    """Radial frequency in cycles/image for each ``rfft2`` bin, shape ``[H, W//2+1]``."""
    fy = np.fft.fftfreq(H) * H
    fx = np.fft.rfftfreq(W) * W
    return np.sqrt(fy[:, None] ** 2 + fx[None, :] ** 2)


def nyquist(H: int, W: int) -> float:
    return min(H, W) / 2.0

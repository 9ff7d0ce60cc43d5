"""Dataset containers and the procedural toy dataset."""

from __future__ import annotations

import numpy as np

from .errors import FormatError
from .numerics.rng import Rng
from .store import read_store, write_store


def load_dataset(path, num_classes: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Read ``images [B, 3, H, W]`` and ``labels [B]`` from an ANCT store.

    uint8 pixels are scaled by 1/255; float32 pixels must already lie in [0, 1].
    """
    entries = read_store(path)
    for name in ("images", "labels"):
        if name not in entries:
            raise FormatError(f"{path}: missing entry {name!r}")
    images, labels = entries["images"], entries["labels"]
    if images.ndim != 4:
        raise FormatError(f"{path}: entry 'images' must be rank 4 [B, C, H, W], got {images.shape}")
    if images.dtype == np.uint8:
        images = images.astype(np.float32) / np.float32(255.0)
    elif images.dtype == np.float32:
        if images.size and (images.min() < 0 or images.max() > 1):
            raise FormatError(f"{path}: entry 'images' float pixels outside [0, 1]")
    else:
        raise FormatError(f"{path}: entry 'images' has dtype {images.dtype}, expected uint8 or float32")
    if labels.dtype == np.float32:
        if not np.all(labels == np.round(labels)):
            raise FormatError(f"{path}: entry 'labels' holds non-integer floats")
    labels = labels.reshape(-1).astype(np.int64)
    if len(labels) != len(images):
        raise FormatError(f"{path}: entry 'labels' has {len(labels)} rows for {len(images)} images")
    if labels.size and labels.min() < 0:
        raise FormatError(f"{path}: entry 'labels' has negative values")
    if num_classes is not None and labels.size and labels.max() >= num_classes:
        raise FormatError(f"{path}: entry 'labels' value {labels.max()} >= num_classes {num_classes}")
    return np.ascontiguousarray(images), labels


def save_dataset(path, images, labels):
    labels = np.asarray(labels)
    lab = labels.astype(np.uint8) if labels.size and labels.max() < 256 and labels.min() >= 0 \
        else labels.astype(np.int32)
    write_store(path, {"images": np.asarray(images), "labels": lab})


def make_gratings(n: int, rng: Rng, size: int = 32, classes: int = 10,
                  noise: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    """Colour sinusoidal gratings whose orientation encodes the class.

    Frequency, phase, contrast, tint and background vary per image and white
    noise is added, so the class is only recoverable from orientation.
    Returns uint8 images ``[n, 3, size, size]`` and labels ``[n]``.
    """
    labels = (np.arange(n) % classes)[rng.permutation(n)]
    theta = np.pi * (labels + rng.uniform(-0.3, 0.3, n)) / classes
    freq = rng.uniform(2.0, 4.5, n)
    phase = rng.uniform(0.0, 2 * np.pi, n)
    contrast = rng.uniform(0.08, 0.3, n)
    background = rng.uniform(0.3, 0.7, (n, 3))
    tint = rng.uniform(0.4, 1.0, (n, 3)) * np.where(rng.random((n, 3)) < 0.5, -1.0, 1.0)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    coord = (np.cos(theta)[:, None, None] * xx + np.sin(theta)[:, None, None] * yy) / size
    wave = np.sin(2 * np.pi * freq[:, None, None] * coord + phase[:, None, None])
    img = background[:, :, None, None] + (contrast[:, None] * tint)[:, :, None, None] * wave[:, None]
    img = img + noise * rng.normal((n, 3, size, size))
    return np.clip(np.round(img * 255), 0, 255).astype(np.uint8), labels.astype(np.int64)

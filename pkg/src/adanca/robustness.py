"""PGD attack, accuracy evaluation and the band-limited noise sensitivity map.

Images are ``[B, 3, H, W]`` floats in [0, 1]. Attack magnitudes in this module
are in the same [0, 1] units; the CLI converts from x/255.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, InputError, RangeError, ShapeError
from .numerics import functional as F
from .numerics.fft import irfft2, nyquist, radial_frequency, rfft2
from .numerics.rng import Rng
from .numerics.tensor import Tensor, no_grad

DEFAULT_MAGNITUDES = (0.0, 0.02, 0.04, 0.08, 0.16, 0.32)


def default_bands(image_size: int = 32, count: int = 6) -> list[tuple[float, float]]:
    """``count`` log-spaced annuli from 1 cycle/image up to Nyquist."""
    edges = np.geomspace(1.0, image_size / 2.0, count + 1)
    return [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]


@dataclass(frozen=True)
class PgdConfig:
    epsilon: float
    step_size: float
    steps: int

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.step_size > self.epsilon:
            raise ConfigError(f"step size {self.step_size} exceeds epsilon {self.epsilon}")

    @classmethod
    def from_255(cls, epsilon: float, step_size: float, steps: int) -> "PgdConfig":
        return cls(epsilon / 255.0, step_size / 255.0, steps)


def _logits(model, x: np.ndarray) -> np.ndarray:
    with no_grad():
        return model(x).data


def _require_test_mode(model):
    if getattr(model, "training", False):
        raise ContractError("model must be in test mode (stochastic forward passes obfuscate gradients)")


def input_gradient(model, images: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of the mean cross-entropy with respect to the input pixels."""
    x = Tensor(images, requires_grad=True, dtype=images.dtype)
    loss = F.cross_entropy(model(x), labels)
    loss.backward(inputs=[x])
    return x.grad


def pgd_attack(model, images, labels, cfg: PgdConfig, batch_size: int = 128) -> np.ndarray:
    """L-infinity PGD from the clean image: sign-gradient ascent on cross-entropy,
    projected onto the epsilon ball and the [0, 1] pixel range after each step."""
    _require_test_mode(model)
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if cfg.steps == 0:
        return images.copy()
    out = np.empty_like(images)
    for s in range(0, len(images), batch_size):
        x0 = images[s:s + batch_size]
        y = labels[s:s + batch_size]
        x = x0.copy()
        lo = np.clip(x0 - cfg.epsilon, 0.0, 1.0)
        hi = np.clip(x0 + cfg.epsilon, 0.0, 1.0)
        for _ in range(cfg.steps):
            g = input_gradient(model, x, y)
            x = np.clip(x + cfg.step_size * np.sign(g), lo, hi).astype(np.float32)
        out[s:s + batch_size] = x
    return out


def predict(model, images, batch_size: int = 256) -> np.ndarray:
    _require_test_mode(model)
    images = np.asarray(images, dtype=np.float32)
    preds = [np.argmax(_logits(model, images[s:s + batch_size]), axis=1)
             for s in range(0, len(images), batch_size)]
    return np.concatenate(preds)


def evaluate(model, images, labels, batch_size: int = 256) -> float:
    """Top-1 accuracy in percent (argmax ties resolve to the lowest class index)."""
    labels = np.asarray(labels).reshape(-1)
    if len(labels) == 0:
        raise InputError("cannot evaluate on an empty dataset")
    if len(images) != len(labels):
        raise ShapeError(f"{len(images)} images but {len(labels)} labels")
    hits = int((predict(model, images, batch_size) == labels).sum())
    return 100.0 * hits / len(labels)


@dataclass(frozen=True)
class AttackReport:
    clean_acc: float
    adv_acc: float
    beta: float
    gamma: float | None = None


def band_mask(H: int, W: int, band: tuple[float, float]) -> np.ndarray:
    """Boolean ``rfft2`` mask for ``f_lo <= |f| < f_hi``; a band reaching Nyquist
    also keeps the corner frequencies above it."""
    f_lo, f_hi = band
    nyq = nyquist(H, W)
    if not (0 <= f_lo < f_hi <= nyq):
        raise RangeError(f"band must satisfy 0 <= f_lo < f_hi <= {nyq}, got {band}")
    r = radial_frequency(H, W)
    mask = r >= f_lo
    if f_hi < nyq:
        mask &= r < f_hi
    return mask


def band_noise(images, magnitude: float, band: tuple[float, float], rng: Rng,
               return_noise: bool = False):
    """Add band-limited Gaussian noise with spatial std ``magnitude``.

    White noise is filtered per channel to the radial band, rescaled per image
    so its std equals ``magnitude``, added and clamped to [0, 1].
    """
    images = np.asarray(images, dtype=np.float32)
    B, Cc, H, W = images.shape
    mask = band_mask(H, W, band)
    if magnitude == 0:
        noise = np.zeros(images.shape, dtype=np.float64)
    else:
        white = rng.normal((B, Cc, H, W))
        noise = irfft2(rfft2(white) * mask, (H, W))
        std = noise.reshape(B, -1).std(axis=1)
        scale = np.divide(magnitude, std, out=np.zeros_like(std), where=std > 0)
        noise = noise * scale[:, None, None, None]
    noisy = np.clip(images + noise, 0.0, 1.0).astype(np.float32)
    return (noisy, noise) if return_noise else noisy


@dataclass
class AccuracyMap:
    magnitudes: list[float]
    bands: list[tuple[float, float]]
    values: np.ndarray  # [len(magnitudes), len(bands)], percent

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.magnitudes), len(self.bands)):
            raise ShapeError(f"values {self.values.shape} do not match the "
                             f"{len(self.magnitudes)}x{len(self.bands)} grid")

    def drop_levels(self, k: int) -> "AccuracyMap":
        return AccuracyMap(list(self.magnitudes[k:]), list(self.bands), self.values[k:])

    def to_csv(self) -> str:
        lines = ["magnitude,band_lo,band_hi,accuracy\n"]
        for i, m in enumerate(self.magnitudes):
            for j, (lo, hi) in enumerate(self.bands):
                lines.append(f"{m:.6g},{lo:.6g},{hi:.6g},{self.values[i, j]:.6g}\n")
        return "".join(lines)

    @classmethod
    def from_csv(cls, text: str) -> "AccuracyMap":
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:] if ln.strip()]
        mags, bands = [], []
        for r in rows:
            m, b = float(r[0]), (float(r[1]), float(r[2]))
            if m not in mags:
                mags.append(m)
            if b not in bands:
                bands.append(b)
        vals = np.full((len(mags), len(bands)), np.nan)
        for r in rows:
            vals[mags.index(float(r[0])), bands.index((float(r[1]), float(r[2])))] = float(r[3])
        if np.isnan(vals).any():
            raise ShapeError("accuracy map CSV does not cover a full magnitude x band grid")
        return cls(mags, bands, vals)


def noise_sensitivity_map(model, images, labels, magnitudes, bands, rng: Rng,
                          batch_size: int = 256) -> AccuracyMap:
    """Accuracy on band-noised copies of the dataset for every (magnitude, band) cell.

    Each cell draws its noise from its own derived stream, so the map is
    reproducible and independent of evaluation order.
    """
    _require_test_mode(model)
    vals = np.zeros((len(magnitudes), len(bands)))
    for i, m in enumerate(magnitudes):
        for j, band in enumerate(bands):
            noisy = band_noise(images, m, band, rng.spawn(i * len(bands) + j))
            vals[i, j] = evaluate(model, noisy, labels, batch_size)
    return AccuracyMap(list(magnitudes), list(bands), vals)


def accuracy_map_similarity(A_m: AccuracyMap, A_gt: AccuracyMap, skip_levels: int = 2) -> float:
    """``100 - mean |A_m - A_gt|`` over the cells left after dropping the
    ``skip_levels`` lowest magnitudes."""
    a, b = np.asarray(A_m.values), np.asarray(A_gt.values)
    if a.shape != b.shape or list(A_m.magnitudes) != list(A_gt.magnitudes) \
            or [tuple(x) for x in A_m.bands] != [tuple(x) for x in A_gt.bands]:
        raise ShapeError("accuracy maps are on different grids")
    if not 0 <= skip_levels < a.shape[0]:
        raise RangeError(f"skip_levels must leave at least one magnitude, got {skip_levels}")
    diff = np.abs(a[skip_levels:] - b[skip_levels:])
    return float(100.0 - diff.sum() / diff.size)


def compared_cells(A: AccuracyMap, skip_levels: int = 2) -> int:
    return (len(A.magnitudes) - skip_levels) * len(A.bands)

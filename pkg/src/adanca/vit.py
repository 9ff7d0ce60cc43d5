"""Toy regular Vision Transformer host with AdaNCA insertion points.

Position ``0`` runs an adaptor right after patch embedding; position ``i``
runs it after block ``i``. Blocks are pre-norm; classification averages the
final tokens (no class token).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, RangeError, ShapeError
from .nca import AdaNCA, AdaNCAConfig, adaptor_flops, drop_path
from .numerics import functional as F
from .numerics.module import Conv2d, LayerNorm, Linear, Module, ModuleDict, ModuleList
from .numerics.rng import Rng
from .numerics.tensor import Parameter, Tensor, as_tensor, no_grad


@dataclass(frozen=True)
class VitConfig:
    image_size: int = 32
    patch_size: int = 4
    embed_dim: int = 64
    depth: int = 6
    heads: int = 4
    mlp_ratio: float = 5.0
    num_classes: int = 10
    in_channels: int = 3
    drop_path_rate: float = 0.1
    drop_path_schedule: tuple = field(default=None)

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ConfigError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.drop_path_schedule is None:
            sched = tuple(float(r) for r in np.linspace(0.0, self.drop_path_rate, self.depth))
            object.__setattr__(self, "drop_path_schedule", sched)
        if len(self.drop_path_schedule) != self.depth:
            raise ConfigError("drop_path_schedule needs one rate per block")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid * self.grid

    @property
    def hidden_dim(self) -> int:
        return int(round(self.embed_dim * self.mlp_ratio))


class Attention(Module):
    def __init__(self, dim: int, heads: int, rng: Rng):
        super().__init__()
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.heads = heads

    def forward(self, x, return_weights: bool = False):
        B, N, C = x.shape
        h, d = self.heads, C // self.heads
        qkv = self.qkv(x).reshape(B, N, 3, h, d).transpose(2, 0, 3, 1, 4)  # [3, B, h, N, d]
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = F.softmax((q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(d)), axis=-1)
        out = (attn @ v).transpose(0, 2, 1, 3).reshape(B, N, C)
        out = self.proj(out)
        return (out, attn) if return_weights else out


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng: Rng):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class Block(Module):
    def __init__(self, dim: int, heads: int, hidden: int, drop_path_rate: float, rng: Rng):
        super().__init__()
        self.norm1 = LayerNorm(dim)
        self.attn = Attention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, hidden, rng)
        self.drop_path_rate = drop_path_rate

    def forward(self, x, rng: Rng | None = None):
        if x.ndim != 3:
            raise ShapeError(f"block expects [B, N, C] tokens, got {x.shape}")
        rate = self.drop_path_rate if self.training else 0.0
        x = x + drop_path(self.attn(self.norm1(x)), rate, rng)
        x = x + drop_path(self.mlp(self.norm2(x)), rate, rng)
        return x


def attention_block(block: Block, tokens, rng: Rng | None = None) -> Tensor:
    """Apply one pre-norm transformer block to ``[B, N, C]`` (or ``[N, C]``) tokens."""
    tokens = as_tensor(tokens)
    if tokens.ndim == 2:
        return block(tokens.reshape(1, *tokens.shape), rng).reshape(tokens.shape)
    return block(tokens, rng)


class HostModel(Module):
    def __init__(self, cfg: VitConfig, rng: Rng, zero_head: bool = True):
        super().__init__()
        self.cfg = cfg
        C = cfg.embed_dim
        self.patch_embed = Conv2d(cfg.in_channels, C, cfg.patch_size, rng.spawn(1),
                                  stride=cfg.patch_size, padding=0)
        self.pos_embed = Parameter((rng.spawn(2).normal((cfg.num_tokens, C)) * 0.02).astype(np.float32))
        brng = rng.spawn(3)
        self.blocks = ModuleList(
            Block(C, cfg.heads, cfg.hidden_dim, cfg.drop_path_schedule[i], brng.spawn(i))
            for i in range(cfg.depth))
        self.norm = LayerNorm(C)
        self.head = Linear(C, cfg.num_classes, rng.spawn(4), zero_init=zero_head)
        self.adaptors = ModuleDict()
        self._rng = rng
        # per-channel input standardisation; fit_input_stats sets it from training data
        self.register_buffer("input_mean", np.full(cfg.in_channels, 0.5, np.float32))
        self.register_buffer("input_std", np.full(cfg.in_channels, 0.25, np.float32))

    def fit_input_stats(self, images):
        """Set the standardisation buffers to the per-channel mean/std of ``images [B, 3, H, W]``."""
        images = np.asarray(images)
        mean = images.mean(axis=(0, 2, 3), dtype=np.float64)
        std = images.std(axis=(0, 2, 3), dtype=np.float64)
        dt = self._buffers["input_mean"].dtype
        self._buffers["input_mean"] = mean.astype(dt)
        self._buffers["input_std"] = np.where(std > 0, std, 1.0).astype(dt)

    # -- adaptor management ---------------------------------------------
    def adaptor_drop_path(self, position: int) -> float:
        return 0.0 if position == 0 else self.cfg.drop_path_schedule[position - 1]

    def insert_adanca(self, position: int, cfg: AdaNCAConfig, rng: Rng | None = None) -> AdaNCA:
        if not 0 <= position:
            raise RangeError(f"adaptor position must be >= 0, got {position}")
        if position > self.cfg.depth:
            raise RangeError(f"adaptor position {position} > depth {self.cfg.depth}")
        if str(position) in self.adaptors:
            raise ConfigError(f"position {position} already has an adaptor")
        if cfg.channels != self.cfg.embed_dim:
            raise ConfigError(f"adaptor channels {cfg.channels} != embed_dim {self.cfg.embed_dim}")
        rng = rng or self._rng.spawn(1000 + position)
        adaptor = AdaNCA(cfg, rng)
        adaptor.training = self.training
        for m in adaptor.modules():
            m.training = self.training
        self.adaptors[str(position)] = adaptor
        # keep entries ordered by position so checkpoints are canonical
        items = sorted(self.adaptors.items(), key=lambda kv: int(kv[0]))
        self.adaptors.clear()
        self.adaptors.update(items)
        return adaptor

    def remove_adanca(self, position: int) -> AdaNCA:
        try:
            return self.adaptors.pop(str(position))
        except KeyError:
            raise RangeError(f"no adaptor at position {position}") from None

    @property
    def adaptor_positions(self) -> list[int]:
        return [int(k) for k in self.adaptors]

    # -- forward -----------------------------------------------------------
    def _run_adaptor(self, position: int, x: Tensor, rng) -> Tensor:
        key = str(position)
        if key not in self.adaptors:
            return x
        B, N, C = x.shape
        g = self.cfg.grid
        out = self.adaptors[key](x.reshape(B, g, g, C), rng)
        return out.reshape(B, N, C)

    def embed(self, images) -> Tensor:
        images = as_tensor(images)
        c = self.cfg
        if images.ndim != 4 or images.shape[1:] != (c.in_channels, c.image_size, c.image_size):
            raise ShapeError(
                f"expected images [B, {c.in_channels}, {c.image_size}, {c.image_size}], got {images.shape}")
        mean = self._buffers["input_mean"][:, None, None]
        inv_std = (1.0 / self._buffers["input_std"][:, None, None]).astype(mean.dtype)
        x = (images - mean) * inv_std
        x = self.patch_embed(x.transpose(0, 2, 3, 1))  # [B, g, g, C]
        B = x.shape[0]
        return x.reshape(B, c.num_tokens, c.embed_dim) + self.pos_embed

    def forward(self, images, rng: Rng | None = None, dump: dict | None = None) -> Tensor:
        if self.training and rng is None:
            raise ContractError("train-mode forward needs an Rng")
        x = self.embed(images)
        x = self._run_adaptor(0, x, rng)
        for i, block in enumerate(self.blocks, start=1):
            x = block(x, rng)
            if dump is not None:
                dump[f"block.{i}.out"] = x.data.copy()
            x = self._run_adaptor(i, x, rng)
        x = self.norm(x).mean(axis=1)
        return self.head(x)


def forward_classify(model: HostModel, images, mode: str = "test", rng: Rng | None = None) -> np.ndarray:
    """Logits ``[B, num_classes]`` as a NumPy array, without recording a graph."""
    if mode not in ("train", "test"):
        raise ContractError(f"mode must be 'train' or 'test', got {mode!r}")
    was = model.training
    model.train(mode == "train")
    try:
        with no_grad():
            return model(np.asarray(images, dtype=np.float32), rng).data
    finally:
        model.train(was)


def insert_adanca(model: HostModel, position: int, cfg: AdaNCAConfig, rng: Rng | None = None) -> HostModel:
    model.insert_adanca(position, cfg, rng)
    return model


def _linear_flops(n_rows: int, fan_in: int, fan_out: int) -> int:
    return 2 * n_rows * fan_in * fan_out


def count_params_flops(model: HostModel) -> tuple[int, int]:
    """Exact parameter count and FLOPs of one test-mode forward (batch 1).

    FLOPs count each multiply-add as 2 and cover convolutions, linear layers
    and the two attention matmuls; adaptor FLOPs scale with their test steps.
    """
    c = model.cfg
    N, C, P = c.num_tokens, c.embed_dim, c.patch_size
    flops = _linear_flops(N, c.in_channels * P * P, C)
    per_block = (_linear_flops(N, C, 3 * C) + 2 * (2 * N * N * C) + _linear_flops(N, C, C)
                 + _linear_flops(N, C, c.hidden_dim) + _linear_flops(N, c.hidden_dim, C))
    flops += c.depth * per_block + _linear_flops(1, C, c.num_classes)
    for adaptor in model.adaptors.values():
        flops += adaptor_flops(adaptor.cfg, c.grid, c.grid)
    return model.num_parameters(), flops


def activation_dump(model: HostModel, images, batch_size: int = 64) -> dict[str, np.ndarray]:
    """Per-block outputs ``block.<i>.out`` of shape ``[B, N, C]`` in test mode."""
    images = np.asarray(images, dtype=np.float32)
    chunks: dict[str, list] = {}
    was = model.training
    model.eval()
    try:
        with no_grad():
            for s in range(0, len(images), batch_size):
                dump: dict = {}
                model(images[s:s + batch_size], None, dump=dump)
                for k, v in dump.items():
                    chunks.setdefault(k, []).append(v)
    finally:
        model.train(was)
    return {k: np.concatenate(v) for k, v in chunks.items()}

"""The AdaNCA adaptor: multi-scale dynamic interaction, update MLP, and the
stochastic recurrent evolution used between ViT blocks.

Token maps are ``[B, H, W, C]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, ContractError
from .numerics import functional as F
from .numerics.module import BatchNorm, Conv2d, LayerNorm, Linear, Module, ModuleList
from .numerics.rng import Rng
from .numerics.tensor import Parameter, Tensor, as_tensor


@dataclass(frozen=True)
class AdaNCAConfig:
    channels: int
    kernel_count: int = 4
    scale_count: int = 2
    step_range: tuple[int, int] = (2, 4)
    keep_prob: float = 0.9
    test_step: int | None = None
    drop_path_rate: float = 0.0
    recur: bool = True
    stocu: bool = True
    rands: bool = True
    dynin: bool = True
    kernel_size: int = field(default=3, repr=False)

    def __post_init__(self):
        t1, t2 = self.step_range
        if self.test_step is None:
            object.__setattr__(self, "test_step", self.mean_step)
        if self.channels < 1 or self.kernel_count < 1 or self.scale_count < 1:
            raise ConfigError("channels, kernel_count and scale_count must be positive")
        if not 1 <= t1 <= t2:
            raise ConfigError(f"step range must satisfy 1 <= T1 <= T2, got {self.step_range}")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ConfigError(f"keep_prob must be in (0, 1], got {self.keep_prob}")
        if not t1 <= self.test_step <= t2:
            raise ConfigError(f"test_step {self.test_step} outside step range {self.step_range}")
        if not 0.0 <= self.drop_path_rate < 1.0:
            raise ConfigError(f"drop_path_rate must be in [0, 1), got {self.drop_path_rate}")
        if self.rands and not self.recur:
            raise ConfigError("random steps need the recurrent update (rands requires recur)")

    @property
    def mean_step(self) -> int:
        return math.ceil((self.step_range[0] + self.step_range[1]) / 2)

    def with_(self, **changes) -> "AdaNCAConfig":
        return replace(self, **changes)


class WeightNet(Module):
    """Two 3x3 convolutions with batch norm between; emits raw per-token weights."""

    def __init__(self, channels: int, outputs: int, rng: Rng):
        super().__init__()
        self.conv1 = Conv2d(channels, outputs, 3, rng, bias=False)
        self.norm = BatchNorm(outputs)
        self.conv2 = Conv2d(outputs, outputs, 3, rng)
        self.outputs = outputs

    def forward(self, x):
        return self.conv2(self.norm(self.conv1(x)))


class UpdateMlp(Module):
    """C -> C -> C per-token MLP; the last layer starts at zero so evolution starts as identity."""

    def __init__(self, channels: int, rng: Rng):
        super().__init__()
        self.fc1 = Linear(channels, channels, rng)
        self.fc2 = Linear(channels, channels, rng, zero_init=True)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class KernelBank(Module):
    """Learnable depthwise kernels, dims ``[S, M, C, k, k]``."""

    def __init__(self, scales: int, kernels: int, channels: int, rng: Rng, size: int = 3):
        super().__init__()
        bound = 1.0 / size  # fan-in of a depthwise k x k kernel is k*k
        self.weight = Parameter(rng.uniform(-bound, bound, (scales, kernels, channels, size, size))
                                .astype(np.float32))

    def kernel(self, s: int, m: int) -> Tensor:
        return self.weight[s, m]


def dynamic_interaction(state, bank: KernelBank, weights, scale: int) -> Tensor:
    """Per-token weighted sum of the ``M`` depthwise convolutions at dilation ``scale``.

    ``weights`` is the ``[B, H, W, M]`` output of the interaction weight net, or
    ``None`` for the plain (unweighted) sum used when dynamic interaction is off.
    ``scale`` is 1-based; dilation equals the scale.
    """
    state = as_tensor(state)
    M = bank.weight.shape[1]
    if weights is not None and weights.shape[-1] != M:
        raise ConfigError(f"weight net emits {weights.shape[-1]} weights for {M} kernels")
    out = None
    for m in range(M):
        conv = F.depthwise_conv2d(state, bank.kernel(scale - 1, m), dilation=scale)
        term = conv if weights is None else conv * weights[..., m:m + 1]
        out = term if out is None else out + term
    return out


def multi_scale_dynamic_interaction(state, bank: KernelBank, w_i, w_m) -> Tensor:
    """Sum over scales of per-token scale weights times the dilated dynamic interaction.

    ``w_i`` is shared across scales. Either net may be passed as a module or as
    a precomputed weight tensor (tests freeze them this way); ``w_i=None``
    selects the unweighted kernel sum.
    """
    state = as_tensor(state)
    S = bank.weight.shape[0]
    wi = w_i(state) if isinstance(w_i, Module) else w_i
    wm = w_m(state) if isinstance(w_m, Module) else as_tensor(w_m)
    if wm.shape[-1] != S:
        raise ConfigError(f"scale weight net emits {wm.shape[-1]} weights for {S} scales")
    out = None
    for s in range(1, S + 1):
        term = dynamic_interaction(state, bank, wi, s) * wm[..., s - 1:s]
        out = term if out is None else out + term
    return out


class NCACell(Module):
    """One parameter set of the adaptor: input norm, interaction nets, kernel bank, update MLP.

    The update sees the layer-normalised state. Without it the raw per-token
    weights let train-mode evolution grow the state geometrically.
    """

    def __init__(self, cfg: AdaNCAConfig, rng: Rng):
        super().__init__()
        C = cfg.channels
        self.norm = LayerNorm(C)
        self.bank = KernelBank(cfg.scale_count, cfg.kernel_count, C, rng, cfg.kernel_size)
        self.w_i = WeightNet(C, cfg.kernel_count, rng) if cfg.dynin else None
        self.w_m = WeightNet(C, cfg.scale_count, rng)
        self.mlp = UpdateMlp(C, rng)

    def update(self, state) -> Tensor:
        return self.mlp(multi_scale_dynamic_interaction(self.norm(state), self.bank, self.w_i, self.w_m))


def evolve_step(state, cell: NCACell, cfg: AdaNCAConfig, mode: str, rng: Rng | None = None) -> Tensor:
    """One residual update. Train mode masks whole tokens with keep probability
    ``p`` and rescales the surviving updates by ``1/p``."""
    if cfg.keep_prob <= 0:
        raise ConfigError("keep_prob must be positive")
    state = as_tensor(state)
    u = cell.update(state)
    if mode == "test" or not cfg.stocu:
        return state + u
    if mode != "train":
        raise ContractError(f"mode must be 'train' or 'test', got {mode!r}")
    if rng is None:
        raise ContractError("train-mode evolution needs an Rng for the update mask")
    mask = rng.bernoulli(cfg.keep_prob, state.shape[:-1] + (1,)).astype(state.dtype)
    return state + u * Tensor(mask / cfg.keep_prob, dtype=state.dtype)


class AdaNCA(Module):
    """Adaptor wrapping the recurrent evolution plus the host's drop path."""

    def __init__(self, cfg: AdaNCAConfig, rng: Rng):
        super().__init__()
        self.cfg = cfg
        n_cells = 1 if cfg.recur else cfg.mean_step
        self.cells = ModuleList(NCACell(cfg, rng.spawn(i)) for i in range(n_cells))

    def num_steps(self, mode: str, rng: Rng | None) -> int:
        cfg = self.cfg
        if not cfg.recur:
            return len(self.cells)
        if mode == "test":
            return cfg.test_step
        if cfg.rands:
            if rng is None:
                raise ContractError("random step draw needs an Rng")
            return int(rng.integers(cfg.step_range[0], cfg.step_range[1]))
        return cfg.mean_step

    def evolve(self, state, mode: str, rng: Rng | None = None) -> Tensor:
        T = self.num_steps(mode, rng)
        for t in range(T):
            cell = self.cells[0] if self.cfg.recur else self.cells[t]
            state = evolve_step(state, cell, self.cfg, mode, rng)
        return state

    def forward(self, state, rng: Rng | None = None) -> Tensor:
        mode = "train" if self.training else "test"
        state = as_tensor(state)
        out = self.evolve(state, mode, rng)
        if mode == "train" and self.cfg.drop_path_rate > 0:
            out = state + drop_path(out - state, self.cfg.drop_path_rate, rng)
        return out


def drop_path(residual, rate: float, rng: Rng | None) -> Tensor:
    """Per-sample stochastic depth on a residual branch (train mode only)."""
    if rate <= 0:
        return residual
    if rng is None:
        raise ContractError("drop path needs an Rng")
    keep = 1.0 - rate
    shape = (residual.shape[0],) + (1,) * (residual.ndim - 1)
    mask = rng.bernoulli(keep, shape).astype(residual.dtype) / keep
    return residual * Tensor(mask, dtype=residual.dtype)


def adaptor_flops(cfg: AdaNCAConfig, H: int, W: int) -> int:
    """Multiply-add count x2 of one test-mode forward on an H x W grid."""
    C, M, S, k = cfg.channels, cfg.kernel_count, cfg.scale_count, cfg.kernel_size
    hw = H * W
    per_step = 0
    if cfg.dynin:
        per_step += hw * (C * M * 9 + M * M * 9)  # W_I convs
    per_step += hw * (C * S * 9 + S * S * 9)  # W_M convs
    per_step += S * M * hw * C * k * k  # depthwise convs
    per_step += S * M * hw * C + S * hw * C  # weighted sums
    per_step += 2 * hw * C * C  # update MLP
    per_step += 2 * hw * C  # input layer norm
    steps = len(range(cfg.mean_step)) if not cfg.recur else cfg.test_step
    return 2 * per_step * steps

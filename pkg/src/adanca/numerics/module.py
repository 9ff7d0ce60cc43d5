"""Parameter containers and the standard layers built on the primitives."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import functional as F
from .rng import Rng
from .tensor import Parameter


class Module:
    """Minimal module tree: parameters, buffers, children, train/eval flag.

    Attribute assignment order defines parameter order, which in turn fixes
    checkpoint entry order.
    """

    def __init__(self):
        object.__setattr__(self, "_buffers", OrderedDict())
        self.training = True

    def register_buffer(self, name: str, value: np.ndarray):
        self._buffers[name] = value

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, ModuleList):
                for i, m in enumerate(value):
                    yield from m.named_parameters(f"{prefix}{name}.{i}.")
            elif isinstance(value, ModuleDict):
                for k, m in value.items():
                    yield from m.named_parameters(f"{prefix}{name}.{k}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, buf in self._buffers.items():
            yield prefix + name, buf
        for name, child in self._children(prefix):
            yield from child.named_buffers(name)

    def _children(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield f"{prefix}{name}.", value
            elif isinstance(value, ModuleList):
                for i, m in enumerate(value):
                    yield f"{prefix}{name}.{i}.", m
            elif isinstance(value, ModuleDict):
                for k, m in value.items():
                    yield f"{prefix}{name}.{k}.", m

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self._children():
            yield from child.modules()

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def astype(self, dtype):
        """Cast parameters and buffers in place (float64 is used by gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        for m in self.modules():
            for k in m._buffers:
                m._buffers[k] = m._buffers[k].astype(dtype)
        return self

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict((k, p.data) for k, p in self.named_parameters())
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: dict):
        own = self.state_dict()
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch; missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in self.named_parameters():
            if state[name].shape != p.shape:
                raise ValueError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = np.array(state[name], dtype=p.data.dtype)
        for m_prefix, m in [("", self)] + list(self._iter_prefixed()):
            for k in m._buffers:
                m._buffers[k] = np.array(state[m_prefix + k], dtype=m._buffers[k].dtype)

    def _iter_prefixed(self, prefix=""):
        for name, child in self._children(prefix):
            yield name, child
            yield from child._iter_prefixed(name)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(list):
    pass


class ModuleDict(OrderedDict):
    pass


def _fan_in_uniform(rng: Rng, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape).astype(np.float32)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: Rng, bias: bool = True,
                 zero_init: bool = False):
        super().__init__()
        shape = (in_features, out_features)
        if zero_init:
            w = np.zeros(shape, np.float32)
        else:
            w = _fan_in_uniform(rng, shape, in_features)
        self.weight = Parameter(w)
        if bias:
            b = np.zeros(out_features, np.float32) if zero_init else _fan_in_uniform(rng, out_features, in_features)
            self.bias = Parameter(b)
        else:
            self.bias = None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: Rng,
                 stride: int = 1, padding="same", bias: bool = True):
        super().__init__()
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Parameter(_fan_in_uniform(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in))
        self.bias = Parameter(_fan_in_uniform(rng, out_channels, fan_in)) if bias else None
        self.stride = stride
        self.padding = padding

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class BatchNorm(Module):
    """Channels-last batch normalisation (momentum 0.1, eps 1e-5)."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.weight = Parameter(np.ones(channels, np.float32))
        self.bias = Parameter(np.zeros(channels, np.float32))
        self.register_buffer("running_mean", np.zeros(channels, np.float32))
        self.register_buffer("running_var", np.ones(channels, np.float32))
        self.momentum = momentum
        self.eps = eps

    def forward(self, x):
        return F.batch_norm(x, self.weight, self.bias, self._buffers["running_mean"],
                            self._buffers["running_var"], self.training, self.momentum, self.eps)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.weight = Parameter(np.ones(dim, np.float32))
        self.bias = Parameter(np.zeros(dim, np.float32))
        self.eps = eps

    def forward(self, x):
        return F.layer_norm(x, self.weight, self.bias, self.eps)

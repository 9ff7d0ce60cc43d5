"""Differentiable primitives.

All tensors are channels-last: token maps are ``[B, H, W, C]`` and token
sequences ``[B, N, C]``. Reductions and depthwise convolutions accumulate in
float64 and cast back to the input dtype; GEMM-based ops run in the input dtype.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ReceptiveFieldError, ShapeError
from . import kernels
from .tensor import Tensor, as_tensor, make_result

def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after NumPy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _result_dtype(*arrays):
    return np.float64 if any(a.dtype == np.float64 for a in arrays) else np.float32


def _operands(a, b) -> tuple[Tensor, Tensor]:
    # Python scalars take the dtype of the tensor operand so they never promote float32.
    if isinstance(a, Tensor) and not isinstance(b, Tensor) and np.ndim(b) == 0:
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor) and np.ndim(a) == 0:
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    return as_tensor(a), as_tensor(b)


# -- elementwise ----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _operands(a, b)
    out = (a.data + b.data).astype(_result_dtype(a.data, b.data), copy=False)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result(out, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _operands(a, b)
    out = (a.data - b.data).astype(_result_dtype(a.data, b.data), copy=False)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result(out, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _operands(a, b)
    out = (a.data * b.data).astype(_result_dtype(a.data, b.data), copy=False)

    def bw(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _operands(a, b)
    out = (a.data / b.data).astype(_result_dtype(a.data, b.data), copy=False)

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), bw, "div")


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = np.power(a.data, exponent).astype(a.dtype, copy=False)

    def bw(g):
        return (g * exponent * np.power(a.data, exponent - 1),)

    return make_result(out, (a,), bw, "power")


def gelu(x) -> Tensor:
    """GELU, ``x * Phi(x)`` with the Gaussian CDF (no tanh approximation)."""
    x = as_tensor(x)
    flat = np.ascontiguousarray(x.data).reshape(-1)
    y, cdf = kernels.gelu_forward(flat)
    out = y.reshape(x.shape)

    def bw(g):
        g = np.ascontiguousarray(g, dtype=flat.dtype).reshape(-1)
        return (kernels.gelu_backward(flat, cdf, g).reshape(x.shape),)

    return make_result(out, (x,), bw, "gelu")


# -- shape ----------------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    orig = x.shape

    def bw(g):
        return (g.reshape(orig),)

    return make_result(x.data.reshape(shape), (x,), bw, "reshape")


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bw(g):
        return (g.transpose(inv),)

    return make_result(np.ascontiguousarray(x.data.transpose(axes)), (x,), bw, "transpose")


def getitem(x, key) -> Tensor:
    x = as_tensor(x)

    def bw(g):
        full = np.zeros_like(x.data)
        full[key] = g
        return (full,)

    return make_result(np.ascontiguousarray(x.data[key]), (x,), bw, "getitem")


Tensor.__getitem__ = getitem


# -- reductions -----------------------------------------------------------

def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64)).astype(x.dtype)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return make_result(out, (x,), bw, "sum")


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    n = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    out = np.asarray(x.data.mean(axis=axis, keepdims=keepdims, dtype=np.float64)).astype(x.dtype)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape),)

    return make_result(out, (x,), bw, "mean")


# -- linear algebra -------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched ``a @ b`` with NumPy broadcasting over leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return make_result(out, (a, b), bw, "matmul")


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` over the last axis; ``weight`` is ``[in, out]``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear expects last dim {weight.shape[0]}, got {x.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
        parents.append(bias)
    out = out.reshape(*lead, weight.shape[1])

    def bw(g):
        g2 = g.reshape(-1, weight.shape[1])
        gx = (g2 @ weight.data.T).reshape(x.shape) if x.requires_grad else None
        gw = x2.T @ g2 if weight.requires_grad else None
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0, dtype=np.float64))
        return grads

    return make_result(out, parents, bw, "linear")


# -- normalisation / probabilities ----------------------------------------

def softmax(x, axis=-1) -> Tensor:
    """Softmax in the input dtype; the normalising sums accumulate in float64."""
    x = as_tensor(x)
    dt = x.dtype
    e = np.exp(x.data - x.data.max(axis=axis, keepdims=True))
    s = e / e.sum(axis=axis, keepdims=True, dtype=np.float64).astype(dt)

    def bw(g):
        inner = (g * s).sum(axis=axis, keepdims=True, dtype=np.float64).astype(dt)
        return (s * (g - inner),)

    return make_result(s, (x,), bw, "softmax")


def cross_entropy(logits, labels, label_smoothing: float = 0.0) -> Tensor:
    """Mean softmax cross-entropy of ``logits [B, K]`` against integer ``labels``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    B, K = logits.shape
    if labels.shape[0] != B:
        raise ShapeError(f"{B} logit rows but {labels.shape[0]} labels")
    z = logits.data.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    target = np.full((B, K), label_smoothing / K)
    target[np.arange(B), labels] += 1.0 - label_smoothing
    loss = -(target * logp).sum() / B

    def bw(g):
        return (g * (np.exp(logp) - target) / B,)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), bw, "cross_entropy")


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    dt = x.dtype
    mu = x.data.mean(axis=-1, keepdims=True, dtype=np.float64)
    xc = x.data - mu.astype(dt)
    var = np.square(xc).mean(axis=-1, keepdims=True, dtype=np.float64)
    rstd = (1.0 / np.sqrt(var + eps)).astype(dt)
    xhat = xc * rstd
    out = xhat * gamma.data + beta.data

    def bw(g):
        gxhat = g * gamma.data
        m1 = gxhat.mean(axis=-1, keepdims=True, dtype=np.float64).astype(dt)
        m2 = (gxhat * xhat).mean(axis=-1, keepdims=True, dtype=np.float64).astype(dt)
        gx = rstd * (gxhat - m1 - xhat * m2)
        red = tuple(range(x.ndim - 1))
        return gx, (g * xhat).sum(axis=red, dtype=np.float64), g.sum(axis=red, dtype=np.float64)

    return make_result(out.astype(_result_dtype(out), copy=False), (x, gamma, beta), bw, "layer_norm")


def batch_norm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel normalisation over every axis but the last.

    In training mode batch statistics are used and the running buffers are
    updated in place (unbiased variance, PyTorch convention).
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    red = tuple(range(x.ndim - 1))
    x64 = x.data.astype(np.float64)
    if training:
        n = x.size // x.shape[-1]
        mu = x64.mean(axis=red)
        var = x64.var(axis=red)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (n / max(n - 1, 1))
    else:
        mu = running_mean.astype(np.float64)
        var = running_var.astype(np.float64)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x64 - mu) * rstd
    out = (xhat * gamma.data + beta.data).astype(x.dtype)

    def bw(g):
        g64 = g.astype(np.float64)
        gxhat = g64 * gamma.data
        if training:
            gx = rstd * (gxhat - gxhat.mean(axis=red) - xhat * (gxhat * xhat).mean(axis=red))
        else:
            gx = gxhat * rstd
        return gx, (g64 * xhat).sum(axis=red), g64.sum(axis=red)

    return make_result(out, (x, gamma, beta), bw, "batch_norm")


# -- convolutions ---------------------------------------------------------

def _as_batched(x: Tensor):
    if x.ndim == 3:
        return reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"expected [H, W, C] or [B, H, W, C], got {x.shape}")
    return x, False


def depthwise_conv2d(x, kernel, dilation: int = 1) -> Tensor:
    """Dilated depthwise convolution with zero padding to the same size.

    ``kernel`` is ``[C, k, k]`` with odd ``k``; output channel ``c`` only sees
    input channel ``c``.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    xb, squeezed = _as_batched(x)
    if kernel.ndim != 3 or kernel.shape[1] != kernel.shape[2]:
        raise ShapeError(f"kernel must be [C, k, k], got {kernel.shape}")
    C, K = kernel.shape[0], kernel.shape[1]
    if K % 2 == 0:
        raise ShapeError(f"kernel size must be odd, got {K}")
    if xb.shape[3] != C:
        raise ShapeError(f"kernel has {C} channels, input has {xb.shape[3]}")
    if dilation < 1:
        raise ConfigError(f"dilation must be >= 1, got {dilation}")
    H, W = xb.shape[1], xb.shape[2]
    if dilation * (K - 1) >= 2 * min(H, W):
        raise ReceptiveFieldError(
            f"dilation {dilation} with {K}x{K} kernel exceeds the {H}x{W} grid")
    dt = _result_dtype(xb.data, kernel.data)
    xd = np.ascontiguousarray(xb.data, dtype=dt)
    kd = np.ascontiguousarray(kernel.data, dtype=dt)
    out = kernels.dwconv_forward(xd, kd, dilation)

    def bw(g):
        g = np.ascontiguousarray(g, dtype=dt)
        gx = kernels.dwconv_backward_input(g, kd, dilation) if xb.requires_grad else None
        gk = kernels.dwconv_backward_kernel(xd, g, K, dilation) if kernel.requires_grad else None
        return gx, gk

    res = make_result(out, (xb, kernel), bw, "depthwise_conv2d")
    return reshape(res, x.shape) if squeezed else res


def conv2d(x, weight, bias=None, stride: int = 1, padding="same") -> Tensor:
    """Full cross-channel convolution, channels-last, zero padding.

    ``weight`` is ``[C_out, C_in, k, k]``. ``padding="same"`` pads ``(k-1)//2``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    xb, squeezed = _as_batched(x)
    if weight.ndim != 4:
        raise ShapeError(f"weight must be [C_out, C_in, k, k], got {weight.shape}")
    Cout, Cin, K, _ = weight.shape
    if xb.shape[3] != Cin:
        raise ShapeError(f"weight expects {Cin} input channels, input has {xb.shape[3]}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    pad = (K - 1) // 2 if padding == "same" else int(padding)
    B, H, W, _ = xb.shape
    xp = np.pad(xb.data, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else xb.data
    Hp, Wp = xp.shape[1], xp.shape[2]
    Ho, Wo = (Hp - K) // stride + 1, (Wp - K) // stride + 1
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"{K}x{K} kernel does not fit a {H}x{W} input")
    dt = _result_dtype(xb.data, weight.data)
    xp = xp.astype(dt, copy=False)
    wt = np.ascontiguousarray(weight.data.transpose(2, 3, 1, 0), dtype=dt)  # [K, K, Cin, Cout]
    taps = [(i, j, (slice(None), slice(i, i + stride * Ho, stride), slice(j, j + stride * Wo, stride)))
            for i in range(K) for j in range(K)]
    # one GEMM per kernel tap avoids materialising the Cin*K*K-wide column matrix
    cols = [np.ascontiguousarray(xp[sl]).reshape(-1, Cin) for _, _, sl in taps]
    out = np.zeros((B * Ho * Wo, Cout), dtype=dt)
    for (i, j, _), col in zip(taps, cols):
        out += col @ wt[i, j]
    out = out.reshape(B, Ho, Wo, Cout)
    parents = [xb, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data.astype(dt, copy=False)
        parents.append(bias)

    def bw(g):
        g2 = np.ascontiguousarray(g, dtype=dt).reshape(-1, Cout)
        gx = gw = None
        if xb.requires_grad:
            gxp = np.zeros((B, Hp, Wp, Cin), dtype=dt)
            for i, j, sl in taps:
                gxp[sl] += (g2 @ wt[i, j].T).reshape(B, Ho, Wo, Cin)
            gx = gxp[:, pad:pad + H, pad:pad + W]
        if weight.requires_grad:
            gw = np.empty((K, K, Cin, Cout), dtype=dt)
            for (i, j, _), col in zip(taps, cols):
                gw[i, j] = col.T @ g2
            gw = gw.transpose(3, 2, 0, 1)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g2.sum(axis=0, dtype=np.float64))
        return grads

    res = make_result(out, parents, bw, "conv2d")
    return reshape(res, res.shape[1:]) if squeezed else res

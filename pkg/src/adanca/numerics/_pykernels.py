"""Pure NumPy/Python fallbacks for the compiled kernels in ``_ckernels``.

Same signatures and semantics; selected by :mod:`adanca.numerics.kernels`
when the extension is unavailable or ``ADANCA_PURE_PYTHON`` is set.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def _taps(K, dilation):
    r = K // 2
    return [(i, j, (i - r) * dilation, (j - r) * dilation) for i in range(K) for j in range(K)]


def _shifted(x, dy, dx):
    """View of ``x`` shifted so that out[y, x] = x[y + dy, x + dx] (zero outside)."""
    B, H, W, C = x.shape
    out = np.zeros_like(x)
    ys, ye = max(0, -dy), min(H, H - dy)
    xs, xe = max(0, -dx), min(W, W - dx)
    if ys < ye and xs < xe:
        out[:, ys:ye, xs:xe] = x[:, ys + dy:ye + dy, xs + dx:xe + dx]
    return out


def dwconv_forward(x, k, dilation):
    acc = np.zeros(x.shape, dtype=np.float64)
    for i, j, dy, dx in _taps(k.shape[1], dilation):
        acc += _shifted(x, dy, dx) * k[:, i, j].astype(np.float64)
    return acc.astype(x.dtype)


def dwconv_backward_input(g, k, dilation):
    acc = np.zeros(g.shape, dtype=np.float64)
    for i, j, dy, dx in _taps(k.shape[1], dilation):
        acc += _shifted(g, -dy, -dx) * k[:, i, j].astype(np.float64)
    return acc.astype(g.dtype)


def dwconv_backward_kernel(x, g, K, dilation):
    C = x.shape[3]
    gk = np.zeros((C, K, K), dtype=np.float64)
    g64 = g.astype(np.float64)
    for i, j, dy, dx in _taps(K, dilation):
        gk[:, i, j] = np.einsum("bhwc,bhwc->c", _shifted(x, dy, dx).astype(np.float64), g64)
    return gk.astype(x.dtype)


def _rotl(x, s):
    return ((x << s) | (x >> (64 - s))) & _MASK64


def xoshiro_fill(state, out):
    s0, s1, s2, s3 = (int(v) for v in state)
    for i in range(out.shape[0]):
        out[i] = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
    state[:] = np.array([s0, s1, s2, s3], dtype=np.uint64)


def gelu_forward(x):
    from scipy.special import ndtr

    cdf = ndtr(x).astype(x.dtype)
    return (x * cdf).astype(x.dtype), cdf


def gelu_backward(x, cdf, g):
    pdf = np.exp(-0.5 * x * x) * x.dtype.type(0.3989422804014327)
    return (g * (cdf + x * pdf)).astype(x.dtype)

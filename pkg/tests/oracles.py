"""Brute-force loop oracles shared by the test modules."""

import numpy as np


def naive_dwconv(x, k, d):
    """Per-pixel loop oracle, channels-last, zero padding."""
    H, W, C = x.shape
    K = k.shape[-1]
    r = (K - 1) // 2
    out = np.zeros_like(x, dtype=np.float64)
    for i in range(H):
        for j in range(W):
            for c in range(C):
                acc = 0.0
                for a in range(K):
                    for b in range(K):
                        ii, jj = i + (a - r) * d, j + (b - r) * d
                        if 0 <= ii < H and 0 <= jj < W:
                            acc += x[ii, jj, c] * k[c, a, b]
                out[i, j, c] = acc
    return out


def naive_conv(x, w, b=None, stride=1):
    H, W, _ = x.shape
    Cout, Cin, K, _ = w.shape
    r = (K - 1) // 2
    Ho, Wo = (H + 2 * r - K) // stride + 1, (W + 2 * r - K) // stride + 1
    out = np.zeros((Ho, Wo, Cout))
    for i in range(Ho):
        for j in range(Wo):
            for o in range(Cout):
                acc = 0.0 if b is None else b[o]
                for a in range(K):
                    for bb in range(K):
                        ii, jj = i * stride + a - r, j * stride + bb - r
                        if 0 <= ii < H and 0 <= jj < W:
                            acc += (x[ii, jj, :] * w[o, :, a, bb]).sum()
                out[i, j, o] = acc
    return out

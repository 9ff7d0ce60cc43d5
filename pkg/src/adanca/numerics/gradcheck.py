"""Central finite-difference oracle for the autograd engine."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import ContractError, NumericError
from .tensor import Tensor, no_grad


def finite_difference_check(f: Callable[[Tensor], Tensor], point, step: float = 1e-3,
                            coords=None) -> float:
    """Max over coordinates of ``|analytic - central_diff| / (|analytic| + 1e-8)``.

    ``f`` maps a tensor to a scalar tensor. ``coords`` optionally restricts the
    check to a subset of flat indices. The point's dtype is kept, so pass
    float64 to keep rounding noise well below the tolerance.
    """
    base = np.array(point.data if isinstance(point, Tensor) else point)
    if base.dtype not in (np.float32, np.float64):
        base = base.astype(np.float64)
    x = Tensor(base.copy(), requires_grad=True, dtype=base.dtype)
    out = f(x)
    if out.size != 1:
        raise ContractError(f"f must return a scalar, got shape {out.shape}")
    if not np.isfinite(out.data).all():
        raise NumericError("f is not finite at the check point")
    out.backward()
    analytic = np.zeros_like(base, dtype=np.float64) if x.grad is None else x.grad.astype(np.float64)

    flat = base.reshape(-1)
    idx = np.arange(flat.size) if coords is None else np.asarray(coords).reshape(-1)
    worst = 0.0
    with no_grad():
        for i in idx:
            vals = []
            for sign in (1.0, -1.0):
                probe = flat.copy()
                probe[i] += sign * step
                v = f(Tensor(probe.reshape(base.shape), dtype=base.dtype)).data
                if not np.isfinite(v).all():
                    raise NumericError(f"f not finite at coordinate {i} offset {sign * step}")
                vals.append(float(np.asarray(v, dtype=np.float64).reshape(-1)[0]))
            # the probe is rounded to the working dtype, use the realised step
            hi = flat[i] + np.asarray(step, dtype=base.dtype)
            lo = flat[i] - np.asarray(step, dtype=base.dtype)
            fd = (vals[0] - vals[1]) / (float(hi) - float(lo))
            a = analytic.reshape(-1)[i]
            worst = max(worst, abs(a - fd) / (abs(a) + 1e-8))
    return worst

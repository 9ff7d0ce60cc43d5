"""Layer-similarity analysis and adaptor placement.

Layers are 1-based throughout: ``kappa(S, i, j)`` scores the layer set
``i..j`` of an ``L x L`` similarity matrix.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, NumericError, RangeError, ShapeError, SizeError
from .numerics.rng import Rng

MAX_CKA_ROWS = 4096
BRUTE_FORCE_LIMIT = 10**6


def linear_cka(X, Y) -> float:
    """Linear CKA between two representations sharing the sample axis.

    Returns 0 when either centred matrix is identically zero.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    X = X.reshape(X.shape[0], -1)
    Y = Y.reshape(Y.shape[0], -1)
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"sample counts differ: {X.shape[0]} vs {Y.shape[0]}")
    if X.shape[0] < 2:
        raise ShapeError("CKA needs at least 2 samples")
    X = X - X.mean(axis=0)
    Y = Y - Y.mean(axis=0)
    xx = np.linalg.norm(X.T @ X)
    yy = np.linalg.norm(Y.T @ Y)
    if xx == 0.0 or yy == 0.0:
        return 0.0
    val = np.linalg.norm(Y.T @ X) ** 2 / (xx * yy)
    return float(min(max(val, 0.0), 1.0))


def similarity_matrix(activations: list[np.ndarray], max_rows: int = MAX_CKA_ROWS,
                      seed: int = 0) -> np.ndarray:
    """Pairwise CKA over per-layer activations ``[B, N, C]`` (or ``[rows, features]``).

    Tokens are the samples: each activation is flattened to ``[B*N, C]`` and
    subsampled (same rows for every layer) to at most ``max_rows``.
    """
    feats = [np.asarray(a, dtype=np.float64).reshape(-1, np.shape(a)[-1]) for a in activations]
    rows = feats[0].shape[0]
    if rows > max_rows:
        idx = np.sort(Rng(seed, 0xC4A).permutation(rows)[:max_rows])
        feats = [f[idx] for f in feats]
    L = len(feats)
    S = np.eye(L)
    for m in range(L):
        for n in range(m + 1, L):
            S[m, n] = S[n, m] = linear_cka(feats[m], feats[n])
    return S


def _check_square(S) -> np.ndarray:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError(f"similarity matrix must be square, got {S.shape}")
    return S


def set_cohesion_index(S, i: int, j: int) -> float:
    """Within-set mean similarity of layers ``i..j`` minus the mean similarity
    to the layers before (if any) and after (if any)."""
    S = _check_square(S)
    L = S.shape[0]
    if not 1 <= i <= j <= L:
        raise RangeError(f"need 1 <= i <= j <= {L}, got i={i}, j={j}")
    a, b = i - 1, j  # 0-based half-open [a, b)
    n = j - i + 1
    val = S[a:b, a:b].sum() / (n * n)
    if i > 1:
        val -= S[:a, a:b].sum() / ((i - 1) * n)
    if j < L:
        val -= S[a:b, b:].sum() / ((L - j) * n)
    return float(val)


kappa = set_cohesion_index


def network_redundancy(S, i: int) -> float:
    """Redundancy of splitting after layer ``i``: kappa(1, i) + kappa(i+1, L)."""
    S = _check_square(S)
    L = S.shape[0]
    if not 1 <= i < L:
        raise RangeError(f"split position must satisfy 1 <= i < {L}, got {i}")
    return set_cohesion_index(S, 1, i) + set_cohesion_index(S, i + 1, L)


@dataclass(frozen=True)
class Partition:
    spans: tuple[tuple[int, int], ...]
    value: float

    @property
    def insert_positions(self) -> list[int]:
        """Adaptor positions, i.e. the last layer of every stage but the final one."""
        return [end for _, end in self.spans[:-1]]

    @property
    def stages(self) -> int:
        return len(self.spans)


def _kappa_table(S: np.ndarray) -> np.ndarray:
    L = S.shape[0]
    K = np.full((L + 2, L + 2), np.nan)
    for i in range(1, L + 1):
        for j in range(i, L + 1):
            K[i, j] = set_cohesion_index(S, i, j)
    return K


def find_optimal_partition(S, stages: int) -> Partition:
    """Split layers ``1..L`` into ``stages`` contiguous sets maximising the sum of kappa.

    ``D[i][u]`` is the best value for the first ``i`` layers in ``u`` sets;
    ``D[i][u] = max_j D[j][u-1] + kappa(j+1, i)``. Ties keep the smallest ``j``.
    """
    S = _check_square(S)
    L = S.shape[0]
    if stages < 1:
        raise InfeasibleError(f"stages must be >= 1, got {stages}")
    if stages > L:
        raise InfeasibleError(f"cannot split {L} layers into {stages} non-empty stages")
    K = _kappa_table(S)
    D = np.full((L + 1, stages + 1), -np.inf)
    split = np.zeros((L + 1, stages + 1), dtype=np.int64)
    D[0, 0] = 0.0
    for i in range(1, L + 1):
        for u in range(1, min(i, stages) + 1):
            for j in range(0, i):
                if D[j, u - 1] == -np.inf:
                    continue
                cur = D[j, u - 1] + K[j + 1, i]
                if cur > D[i, u]:
                    D[i, u] = cur
                    split[i, u] = j
    spans = []
    layer, u = L, stages
    while u > 0:
        start = split[layer, u] + 1
        spans.append((int(start), int(layer)))
        layer = split[layer, u]
        u -= 1
    return Partition(tuple(reversed(spans)), float(D[L, stages]))


def brute_force_partition(S, stages: int, limit: int = BRUTE_FORCE_LIMIT) -> Partition:
    """Enumerate every contiguous partition; oracle for :func:`find_optimal_partition`.

    Among equal objectives the winner is the one whose boundaries are smallest
    when compared from the last boundary backwards, which is the choice the DP's
    smallest-split rule makes.
    """
    S = _check_square(S)
    L = S.shape[0]
    if stages < 1 or stages > L:
        raise InfeasibleError(f"cannot split {L} layers into {stages} non-empty stages")
    if math.comb(L - 1, stages - 1) > limit:
        raise SizeError(f"C({L - 1}, {stages - 1}) partitions exceed the limit {limit}")
    K = _kappa_table(S)
    best, best_key = None, None
    for cuts in itertools.combinations(range(1, L), stages - 1):
        bounds = (0,) + cuts + (L,)
        value = 0.0
        for a, b in zip(bounds[:-1], bounds[1:]):
            value = value + K[a + 1, b]
        key = (value, tuple(-c for c in reversed(cuts)))
        if best is None or key > best_key:
            best, best_key = bounds, key
    spans = tuple((a + 1, b) for a, b in zip(best[:-1], best[1:]))
    return Partition(spans, float(best_key[0]))


def count_partitions(L: int, stages: int) -> int:
    return math.comb(L - 1, stages - 1)


def robustness_metrics(clean_acc: float, adv_acc: float,
                       baseline_beta: float | None = None) -> tuple[float, float | None]:
    """Attack failure rate ``beta = 100 * adv/clean`` (percent) and, given a
    baseline beta, the relative improvement ``gamma``."""
    if clean_acc == 0:
        raise NumericError("clean accuracy is zero; failure rate undefined")
    if not 0 < clean_acc <= 100:
        raise RangeError(f"clean accuracy must be in (0, 100], got {clean_acc}")
    if not 0 <= adv_acc <= clean_acc:
        raise RangeError(f"adversarial accuracy must be in [0, clean], got {adv_acc}")
    beta = 100.0 * adv_acc / clean_acc
    gamma = None
    if baseline_beta is not None:
        gamma = improvement(beta, baseline_beta)
    return beta, gamma


def improvement(beta: float, baseline_beta: float) -> float:
    if baseline_beta == 0:
        raise NumericError("baseline failure rate is zero; improvement undefined")
    return (beta - baseline_beta) / baseline_beta


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ShapeError("pearson_r needs two equal-length samples of size >= 2")
    xc, yc = x - x.mean(), y - y.mean()
    den = np.sqrt((xc ** 2).sum() * (yc ** 2).sum())
    if den == 0:
        raise NumericError("zero variance sample")
    return float((xc * yc).sum() / den)


def min_max_normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    span = v.max() - v.min()
    return np.zeros_like(v) if span == 0 else (v - v.min()) / span


def format_matrix_csv(S) -> str:
    """Comma-separated rows, 6 significant digits."""
    return "".join(",".join(f"{v:.6g}" for v in row) + "\n" for row in np.asarray(S))

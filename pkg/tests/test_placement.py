"""Layer similarity, cohesion index, placement DP and robustness metrics."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adanca.errors import InfeasibleError, NumericError, RangeError, ShapeError, SizeError
from adanca.placement import (brute_force_partition, count_partitions, find_optimal_partition,
                              format_matrix_csv, improvement, kappa, linear_cka, min_max_normalize,
                              network_redundancy, pearson_r, robustness_metrics, similarity_matrix)

BLOCK = np.kron(np.eye(2), np.ones((2, 2)))


def random_similarity(L, g):
    A = g.random((L, L))
    S = (A + A.T) / 2
    np.fill_diagonal(S, 1.0)
    return S


def kappa_oracle(S, i, j):
    """Loop form of the cohesion index with explicit pair lists."""
    L = len(S)
    inside = [(m, n) for m in range(i, j + 1) for n in range(i, j + 1)]
    val = sum(S[m - 1][n - 1] for m, n in inside) / len(inside)
    if i > 1:
        left = [(m, n) for m in range(i, j + 1) for n in range(1, i)]
        val -= sum(S[m - 1][n - 1] for m, n in left) / len(left)
    if j < L:
        right = [(m, n) for m in range(i, j + 1) for n in range(j + 1, L + 1)]
        val -= sum(S[m - 1][n - 1] for m, n in right) / len(right)
    return val


# -- CKA -------------------------------------------------------------------------

def test_cka_self_is_one():
    X = np.random.default_rng(0).normal(size=(50, 7))
    assert linear_cka(X, X) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_cka_invariant_to_orthogonal_and_scale(seed):
    g = np.random.default_rng(seed)
    X, Y = g.normal(size=(60, 6)), g.normal(size=(60, 5))
    Q, _ = np.linalg.qr(g.normal(size=(6, 6)))
    base = linear_cka(X, Y)
    assert linear_cka(3.7 * X @ Q, Y) == pytest.approx(base, abs=1e-5)
    assert linear_cka(X + 2.0, Y) == pytest.approx(base, abs=1e-5)
    assert linear_cka(Y, X) == pytest.approx(base, abs=1e-12)


def test_cka_orthogonal_representations_is_zero():
    # columns after the first are orthogonal to the ones vector, hence already centred
    g = np.random.default_rng(1)
    Q, _ = np.linalg.qr(np.column_stack([np.ones(40), g.normal(size=(40, 8))]))
    assert linear_cka(Q[:, 1:5], Q[:, 5:9]) == pytest.approx(0.0, abs=1e-12)


def test_cka_constant_input_is_zero_and_errors():
    X = np.random.default_rng(2).normal(size=(10, 3))
    assert linear_cka(X, np.ones((10, 2))) == 0.0
    with pytest.raises(ShapeError):
        linear_cka(X, X[:5])
    with pytest.raises(ShapeError):
        linear_cka(X[:1], X[:1])


def test_similarity_matrix_symmetric_unit_diagonal():
    g = np.random.default_rng(3)
    acts = [g.normal(size=(4, 9, 6)) for _ in range(4)]
    S = similarity_matrix(acts)
    np.testing.assert_array_equal(S, S.T)
    np.testing.assert_array_equal(np.diag(S), 1.0)
    assert np.all((S >= 0) & (S <= 1))


def test_similarity_matrix_subsampling_is_seeded():
    g = np.random.default_rng(4)
    acts = [g.normal(size=(20, 10, 4)) for _ in range(3)]
    a = similarity_matrix(acts, max_rows=50, seed=1)
    np.testing.assert_array_equal(a, similarity_matrix(acts, max_rows=50, seed=1))
    assert not np.array_equal(a, similarity_matrix(acts, max_rows=50, seed=2))


# -- cohesion index ----------------------------------------------------------------

def test_block_matrix_kappa_values():
    assert kappa(BLOCK, 1, 2) == pytest.approx(1.0, abs=1e-9)
    assert kappa(BLOCK, 1, 3) == pytest.approx(2 / 9, abs=1e-9)
    assert network_redundancy(BLOCK, 2) == pytest.approx(2.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(L=st.integers(2, 8), seed=st.integers(0, 10**6), data=st.data())
def test_kappa_matches_loop_oracle(L, seed, data):
    S = random_similarity(L, np.random.default_rng(seed))
    i = data.draw(st.integers(1, L))
    j = data.draw(st.integers(i, L))
    assert kappa(S, i, j) == pytest.approx(kappa_oracle(S, i, j), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(L=st.integers(1, 10), seed=st.integers(0, 10**6))
def test_full_span_kappa_is_global_mean(L, seed):
    S = random_similarity(L, np.random.default_rng(seed))
    assert kappa(S, 1, L) == pytest.approx(S.mean(), abs=1e-12)


def test_all_ones_redundancy_is_zero():
    S = np.ones((5, 5))
    for i in range(1, 5):
        assert network_redundancy(S, i) == pytest.approx(0.0, abs=1e-12)


def test_redundancy_argmax_is_block_boundary():
    S = np.full((6, 6), 0.1)
    S[:4, :4] = 0.9
    S[4:, 4:] = 0.9
    np.fill_diagonal(S, 1.0)
    scores = [network_redundancy(S, i) for i in range(1, 6)]
    assert int(np.argmax(scores)) + 1 == 4


@pytest.mark.parametrize("args", [(0, 1), (2, 1), (1, 5)])
def test_kappa_range_errors(args):
    with pytest.raises(RangeError):
        kappa(BLOCK, *args)


def test_redundancy_range_and_shape_errors():
    with pytest.raises(RangeError):
        network_redundancy(BLOCK, 4)
    with pytest.raises(ShapeError):
        kappa(np.ones((2, 3)), 1, 1)


# -- partition DP ------------------------------------------------------------------

def test_block_matrix_partition():
    p = find_optimal_partition(BLOCK, 2)
    assert p.spans == ((1, 2), (3, 4))
    assert p.value == pytest.approx(2.0, abs=1e-12)
    assert p.insert_positions == [2]
    assert brute_force_partition(BLOCK, 2) == p


def test_single_stage_and_singletons():
    S = random_similarity(6, np.random.default_rng(5))
    p1 = find_optimal_partition(S, 1)
    assert p1.spans == ((1, 6),) and p1.value == pytest.approx(kappa(S, 1, 6), abs=1e-12)
    assert p1.insert_positions == []
    pL = find_optimal_partition(S, 6)
    assert pL.spans == tuple((i, i) for i in range(1, 7))
    assert pL.value == pytest.approx(sum(kappa(S, i, i) for i in range(1, 7)), abs=1e-12)


def test_dp_matches_brute_force_on_200_matrices():
    g = np.random.default_rng(2024)
    for _ in range(200):
        L = int(g.integers(4, 11))
        stages = int(g.integers(2, 5))
        S = random_similarity(L, g)
        dp, bf = find_optimal_partition(S, stages), brute_force_partition(S, stages)
        assert abs(dp.value - bf.value) < 1e-9
        assert dp.spans == bf.spans


def test_ties_resolve_to_smallest_split():
    # constant matrix: every interior stage scores -1, so ties abound
    S = np.ones((6, 6))
    for stages in (2, 3, 4):
        dp, bf = find_optimal_partition(S, stages), brute_force_partition(S, stages)
        assert dp.spans == bf.spans
        assert dp.value == bf.value


@settings(max_examples=25, deadline=None)
@given(L=st.integers(2, 8), seed=st.integers(0, 10**6), data=st.data())
def test_dp_objective_dominates_every_partition(L, seed, data):
    stages = data.draw(st.integers(1, L))
    S = random_similarity(L, np.random.default_rng(seed))
    p = find_optimal_partition(S, stages)
    starts = [a for a, _ in p.spans]
    assert starts[0] == 1 and p.spans[-1][1] == L and len(p.spans) == stages
    assert all(b + 1 == a for (_, b), (a, _) in zip(p.spans[:-1], p.spans[1:]))
    assert p.value == pytest.approx(sum(kappa(S, a, b) for a, b in p.spans), abs=1e-12)
    for cuts in itertools.combinations(range(1, L), stages - 1):
        bounds = (0,) + cuts + (L,)
        total = sum(kappa(S, a + 1, b) for a, b in zip(bounds[:-1], bounds[1:]))
        assert p.value >= total - 1e-12


def test_partition_errors():
    with pytest.raises(InfeasibleError):
        find_optimal_partition(BLOCK, 5)
    with pytest.raises(InfeasibleError):
        find_optimal_partition(BLOCK, 0)
    with pytest.raises(SizeError):
        brute_force_partition(np.eye(30), 10)
    assert count_partitions(10, 4) == 84


# -- metrics ------------------------------------------------------------------------

def test_failure_rate_reference_values():
    assert robustness_metrics(86.56, 10.64)[0] == pytest.approx(12.29, abs=0.01)
    assert robustness_metrics(86.56, 16.18)[0] == pytest.approx(18.69, abs=0.01)
    assert improvement(22.35, 12.29) == pytest.approx(0.8186, abs=0.0005)
    beta, gamma = robustness_metrics(50.0, 25.0, baseline_beta=40.0)
    assert (beta, gamma) == (50.0, 0.25)


@pytest.mark.parametrize("clean,adv,err", [(0.0, 0.0, NumericError), (101.0, 5.0, RangeError),
                                           (50.0, 60.0, RangeError), (50.0, -1.0, RangeError)])
def test_metric_errors(clean, adv, err):
    with pytest.raises(err):
        robustness_metrics(clean, adv)


def test_improvement_zero_baseline():
    with pytest.raises(NumericError):
        improvement(10.0, 0.0)


def test_pearson_against_numpy():
    g = np.random.default_rng(6)
    x, y = g.normal(size=30), g.normal(size=30)
    assert pearson_r(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)
    assert pearson_r(x, 2 * x + 1) == pytest.approx(1.0)
    with pytest.raises(NumericError):
        pearson_r(x, np.ones(30))
    with pytest.raises(ShapeError):
        pearson_r(x, y[:5])


def test_min_max_normalize():
    np.testing.assert_allclose(min_max_normalize([2.0, 4.0, 3.0]), [0.0, 1.0, 0.5])
    np.testing.assert_array_equal(min_max_normalize([3.0, 3.0]), [0.0, 0.0])


def test_matrix_csv_six_significant_digits():
    text = format_matrix_csv(np.array([[1.0, 1 / 3], [1 / 3, 1.0]]))
    assert text == "1,0.333333\n0.333333,1\n"

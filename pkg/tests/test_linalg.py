import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sllcert.linalg import (
    complement,
    frobenius_norm,
    index_set,
    kth_largest,
    row_group_norm,
    spectral_norm,
    submatrix,
    top_k_indices,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def small_matrices(max_side=8):
    shapes = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shapes.flatmap(lambda s: arrays(np.float64, s, elements=finite))


def test_spectral_norm_examples():
    assert spectral_norm(np.eye(2)) == pytest.approx(1.0, abs=1e-12)
    assert spectral_norm(np.zeros((2, 2))) == 0.0
    assert spectral_norm([[3.0, 4.0], [0.0, 0.0]]) == pytest.approx(5.0, abs=1e-12)


def test_spectral_norm_empty_and_bad_input():
    assert spectral_norm(np.zeros((0, 3))) == 0.0
    with pytest.raises(ValueError):
        spectral_norm([[np.nan, 1.0]])
    with pytest.raises(ValueError):
        spectral_norm(np.eye(2), tol=0)
    with pytest.raises(ValueError):
        spectral_norm(np.eye(2), max_iter=0)


@settings(max_examples=300, deadline=None)
@given(small_matrices())
def test_spectral_norm_matches_svd(M):
    sigma = np.linalg.svd(M, compute_uv=False)[0]
    assert abs(spectral_norm(M) - sigma) <= 1e-8 * max(1.0, sigma)


def test_spectral_norm_clustered_singular_values():
    # two equal top singular values stall the power iteration
    U, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 6)))
    M = U @ np.diag([2.0, 2.0 - 1e-13, 1.0, 0.5, 0.1, 0.0]) @ U.T
    assert spectral_norm(M) == pytest.approx(2.0, abs=1e-8)


def test_spectral_norm_deterministic():
    M = np.random.default_rng(3).standard_normal((7, 5))
    assert spectral_norm(M) == spectral_norm(M.copy())


@settings(max_examples=200, deadline=None)
@given(small_matrices())
def test_spectral_below_frobenius(M):
    assert spectral_norm(M) <= frobenius_norm(M) * (1 + 1e-12) + 1e-12


@settings(max_examples=200, deadline=None)
@given(small_matrices(), st.data())
def test_submatrix_norm_below_full(M, data):
    rows = data.draw(st.lists(st.integers(0, M.shape[0] - 1), unique=True))
    cols = data.draw(st.lists(st.integers(0, M.shape[1] - 1), unique=True))
    sub = submatrix(M, sorted(rows), sorted(cols))
    assert spectral_norm(sub) <= spectral_norm(M) * (1 + 1e-9) + 1e-12


def test_row_group_norm():
    assert row_group_norm([[3.0, 4.0], [0.0, -5.0]]) == 5.0
    assert row_group_norm(np.eye(4)) == 1.0
    assert row_group_norm(np.zeros((2, 3))) == 0.0
    with pytest.raises(ValueError):
        row_group_norm(np.zeros((0, 2)))


def test_submatrix():
    M = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(submatrix(M, [1], [0]), [[3.0]])
    np.testing.assert_array_equal(submatrix(M, [0, 1], [0, 1]), M)
    assert submatrix(M, [], [0, 1]).shape == (0, 2)
    with pytest.raises(ValueError):
        submatrix(M, [2], [0])


def test_selection_examples():
    v = np.array([0.8, -1.0, 0.3])
    assert kth_largest(v, 1) == 0.8
    np.testing.assert_array_equal(top_k_indices(v, 1), [0])
    assert kth_largest(v, 2) == 0.3
    np.testing.assert_array_equal(top_k_indices(v, 2), [0, 2])
    assert kth_largest([1.0, 1.0], 1) == 1.0
    np.testing.assert_array_equal(top_k_indices([1.0, 1.0], 1), [0])
    assert kth_largest(v, 0) == np.inf
    with pytest.raises(ValueError):
        kth_largest(v, 4)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 12), elements=st.sampled_from([-1.0, 0.0, 0.5, 1.0, 2.0])))
def test_top_k_nested(v):
    for s in range(v.shape[0]):
        assert set(top_k_indices(v, s)) <= set(top_k_indices(v, s + 1))


@given(st.integers(1, 20), st.data())
def test_complement_involution(n, data):
    S = index_set(data.draw(st.lists(st.integers(0, n - 1))), n)
    np.testing.assert_array_equal(complement(complement(S, n), n), S)
    assert np.all(np.diff(S) > 0)


def test_index_set_range():
    with pytest.raises(ValueError):
        index_set([3], 3)

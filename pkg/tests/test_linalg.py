import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from ddfem.linalg import LinearSolverError, TripletBuffer, compress, relative_residual, solve


def test_duplicates_sum():
    buf = TripletBuffer()
    buf.add([0, 0], [0, 0], [1.0, 2.0])
    A = compress(buf, 1)
    assert A.nnz == 1 and A[0, 0] == 3.0


def test_empty_buffer():
    A = compress(TripletBuffer(), 3)
    assert A.shape == (3, 3) and A.nnz == 0


def test_out_of_range_index():
    buf = TripletBuffer()
    buf.add([3], [0], [1.0])
    with pytest.raises(IndexError):
        compress(buf, 3)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), size=st.integers(1, 200))
def test_insertion_order_independence(seed, size):
    rng = np.random.default_rng(seed)
    r = rng.integers(0, 7, size)
    c = rng.integers(0, 7, size)
    v = rng.standard_normal(size) * 10.0 ** rng.integers(-8, 8, size)
    a, b = TripletBuffer(), TripletBuffer()
    a.add(r, c, v)
    perm = rng.permutation(size)
    half = size // 2
    b.add(r[perm[:half]], c[perm[:half]], v[perm[:half]])
    other = TripletBuffer()
    other.add(r[perm[half:]], c[perm[half:]], v[perm[half:]])
    b.merge(other)
    A, B = compress(a, 7), compress(b, 7)
    assert np.array_equal(A.indptr, B.indptr)
    assert np.array_equal(A.indices, B.indices)
    assert A.data.tobytes() == B.data.tobytes()
    for i in range(7):
        row = A.indices[A.indptr[i] : A.indptr[i + 1]]
        assert np.all(np.diff(row) > 0)


def test_add_local_scatter():
    buf = TripletBuffer()
    buf.add_local(np.array([[0, 2]]), np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    assert np.array_equal(compress(buf, 3).toarray(), [[1, 0, 2], [0, 0, 0], [3, 0, 4]])


def test_solve_examples():
    b = np.array([0.3, -1.0, 7.0])
    assert np.allclose(solve(sp.identity(3, format="csr"), b), b)
    assert np.allclose(solve(sp.csr_matrix([[2.0, 0], [0, 4.0]]), np.array([2.0, 8.0])), [1, 2])


def test_random_spd_residual_contract():
    rng = np.random.default_rng(7)
    M = sp.random(50, 50, density=0.1, random_state=rng)
    A = (M @ M.T + sp.identity(50)).tocsr()
    x = rng.standard_normal(50)
    b = A @ x
    y = solve(A, b)
    assert relative_residual(A, y, b) <= 1e-10
    assert np.allclose(y, x)


def test_nonsymmetric_system():
    rng = np.random.default_rng(3)
    A = sp.csr_matrix(np.eye(30) * 4 + rng.standard_normal((30, 30)))
    b = rng.standard_normal(30)
    assert relative_residual(A, solve(A, b), b) <= 1e-10


def test_singular_matrix_reported():
    with pytest.raises(LinearSolverError, match="singular|pivot|factor"):
        solve(sp.csr_matrix([[1.0, 2.0], [2.0, 4.0]]), np.array([1.0, 1.0]))


def test_non_finite_rejected():
    with pytest.raises(LinearSolverError):
        solve(sp.csr_matrix([[np.nan]]), np.array([1.0]))


def test_solve_is_deterministic():
    rng = np.random.default_rng(11)
    A = sp.csr_matrix(np.eye(40) * 5 + rng.standard_normal((40, 40)))
    b = rng.standard_normal(40)
    assert solve(A, b).tobytes() == solve(A, b).tobytes()

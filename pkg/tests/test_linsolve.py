import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikelab import linsolve
from spikelab.linsolve import NoConvergenceError, SolverError, SparseOperator
from spikelab.mesh import assemble_laplacian, build_mesh, make_domain


def square_interior_laplacian(n):
    """Classical 5-point -Δ on the interior of the unit square, n x n nodes."""
    h = 1.0 / (n + 1)
    rows, cols, vals = [], [], []
    idx = lambda i, j: i * n + j
    for i in range(n):
        for j in range(n):
            rows.append(idx(i, j))
            cols.append(idx(i, j))
            vals.append(4.0 / h**2)
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < n and 0 <= jj < n:
                    rows.append(idx(i, j))
                    cols.append(idx(ii, jj))
                    vals.append(-1.0 / h**2)
    return SparseOperator.from_coo(n * n, rows, cols, vals)


def test_identity_solve():
    A = SparseOperator.identity(6)
    b = np.arange(6.0)
    assert np.allclose(linsolve.solve(A, b), b)


def test_matches_dense_oracle_on_square():
    A = square_interior_laplacian(5)
    b = np.ones(25)
    dense = np.zeros((25, 25))
    for i in range(25):
        e = np.zeros(25)
        e[i] = 1.0
        dense[:, i] = A @ e
    expected = np.linalg.solve(dense, b)
    x = linsolve.solve(A, b, tol=1e-12)
    assert np.max(np.abs(x - expected)) < 1e-8


def test_zero_diagonal_rejected():
    A = SparseOperator.from_coo(3, [0, 1], [1, 0], [1.0, 1.0])  # row 2 all zero
    with pytest.raises(SolverError):
        linsolve.solve(A, np.ones(3))


def test_no_convergence_reports_residual():
    A = square_interior_laplacian(12)
    with pytest.raises(NoConvergenceError) as err:
        linsolve.solve(A, np.ones(144), tol=1e-14, max_iter=2)
    assert err.value.achieved > 0


def test_duplicate_entries_are_summed():
    A = SparseOperator.from_coo(2, [0, 0, 1], [0, 0, 1], [1.0, 2.0, 5.0])
    assert np.allclose(A.diagonal(), [3.0, 5.0])


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=2, max_value=6), st.floats(-2, 2), st.floats(-2, 2))
def test_matvec_linearity(n, alpha, beta):
    A = square_interior_laplacian(n)
    rng = np.random.default_rng(n)
    x = rng.standard_normal(n * n)
    y = rng.standard_normal(n * n)
    left = A @ (alpha * x + beta * y)
    right = alpha * (A @ x) + beta * (A @ y)
    assert np.allclose(left, right, rtol=1e-12, atol=1e-9)


def test_solve_matvec_roundtrip():
    A = square_interior_laplacian(8)
    rng = np.random.default_rng(3)
    x = rng.standard_normal(64)
    x2 = linsolve.solve(A, A @ x, tol=1e-12)
    assert np.max(np.abs(x2 - x)) < 1e-7


def test_diagonal_matrix_eigenpairs():
    A = SparseOperator.from_coo(3, [0, 1, 2], [0, 1, 2], [1.0, 2.0, 3.0])
    ep = linsolve.smallest_eigenpairs(A, m=2, sigma=0.0, tol=1e-12)
    assert np.allclose(ep.eigenvalues, [1.0, 2.0])
    for k, col in enumerate(ep.eigenvectors.T):
        assert abs(abs(col[k]) - 1.0) < 1e-8


def test_disk_smallest_eigenvalue():
    m = build_mesh(make_domain("disk", r=1.0), 1.0 / 24)
    A = assemble_laplacian(m)
    ep = linsolve.smallest_eigenpairs(A, m=1, sigma=0.0, tol=1e-10)
    assert ep.eigenvalues[0] == pytest.approx(2.404825557695773**2, rel=0.02)
    assert np.all(ep.residuals <= 1e-10)


def test_deflation_orthogonality_symmetric():
    A = square_interior_laplacian(10)
    ep = linsolve.smallest_eigenpairs(A, m=4, sigma=0.0, tol=1e-10)
    V = ep.eigenvectors
    gram = V.T @ V - np.eye(4)
    assert np.max(np.abs(gram)) < 1e-8
    assert np.all(np.diff(ep.eigenvalues) >= -1e-12)


def test_shift_retry_on_exact_eigenvalue():
    A = SparseOperator.from_coo(3, [0, 1, 2], [0, 1, 2], [1.0, 2.0, 3.0])
    ep = linsolve.smallest_eigenpairs(A, m=1, sigma=1.0, tol=1e-10)
    assert ep.eigenvalues[0] == pytest.approx(1.0)

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from wavegal import solver as slv


def _spd(n, seed=0, shift=1.0):
    M = np.random.default_rng(seed).standard_normal((n, n))
    return sp.csr_matrix(M.T @ M + shift * np.eye(n))


def test_one_by_one():
    rep = slv.solve_direct(sp.csr_matrix([[2.0]]), rhs=np.array([4.0]))
    assert rep.coeffs[0] == 2.0


def test_random_spd_residual():
    A = _spd(50)
    b = np.random.default_rng(1).standard_normal(50)
    rep = slv.solve_direct(A, rhs=b)
    assert rep.residual <= 1e-10
    assert np.linalg.norm(A @ rep.coeffs - b) / np.linalg.norm(b) <= 1e-10


def test_negative_diagonal_rejected():
    with pytest.raises(slv.NotSPDError):
        slv.solve_direct(-sp.identity(3, format="csr"), rhs=np.ones(3))


def test_singular_matrix_rejected():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(slv.NotSPDError):
        slv.solve_direct(A, rhs=np.array([1.0, 0.0]))


def test_gmres_identity_one_iteration():
    rep = slv.solve_gmres(sp.identity(20, format="csr"), rhs=np.arange(1.0, 21.0))
    assert rep.iterations == 1 and rep.converged
    np.testing.assert_allclose(rep.coeffs, np.arange(1.0, 21.0))


def test_gmres_iteration_count_bounded_by_distinct_eigenvalues():
    d = np.repeat([1.0, 2.0, 5.0, 9.0], 10)
    rep = slv.solve_gmres(sp.diags(d).tocsr(), rhs=np.ones(40), tol=1e-12)
    assert rep.iterations <= 4


def test_gmres_reports_nonconvergence():
    A = _spd(60, shift=1e-6)
    rep = slv.solve_gmres(A, rhs=np.ones(60), tol=1e-14, max_iter=3)
    assert not rep.converged and rep.iterations == 3 and rep.message


def test_gmres_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        slv.solve_gmres(sp.identity(2, format="csr"), rhs=np.ones(2), tol=0)


@pytest.mark.parametrize("scaling", ["none", "jacobi"])
def test_solvers_agree(scaling):
    A = _spd(80, seed=3)
    A = sp.diags(np.logspace(0, 3, 80)) @ A @ sp.diags(np.logspace(0, 3, 80))
    b = np.random.default_rng(4).standard_normal(80)
    x0 = slv.solve_direct(A, rhs=b, scaling=scaling).coeffs
    x1 = slv.solve_gmres(A, rhs=b, tol=1e-12, scaling=scaling).coeffs
    x2 = slv.solve_cg(A, rhs=b, tol=1e-13, max_iter=5000).coeffs
    np.testing.assert_allclose(x1, x0, rtol=1e-6)
    np.testing.assert_allclose(x2, x0, rtol=1e-6)


def test_condition_number_trivial():
    assert slv.condition_number(sp.identity(5, format="csr")).kappa == pytest.approx(1.0)
    r = slv.condition_number(sp.diags([1.0, 10.0]).tocsr())
    assert r.kappa == pytest.approx(10.0)
    assert (r.sigma_min, r.sigma_max) == pytest.approx((1.0, 10.0))


def test_condition_modes_agree():
    A = _spd(300, seed=5, shift=0.5)
    d = slv.condition_number(A, mode="dense").kappa
    i = slv.condition_number(A, mode="iterative").kappa
    assert i == pytest.approx(d, rel=1e-3)


def test_jacobi_scaled_condition():
    D = sp.diags([1.0, 1e4, 1e8])
    A = (D @ sp.identity(3) @ D).tocsr()
    assert slv.condition_number(A).kappa == pytest.approx(1e16)
    assert slv.condition_number(A, scaling="jacobi").kappa == pytest.approx(1.0)


def test_dense_limit():
    with pytest.raises(ValueError):
        slv.condition_number(sp.identity(10, format="csr"), mode="dense", dense_max=5)


@settings(max_examples=25)
@given(st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=30))
def test_diagonal_condition_property(vals):
    r = slv.condition_number(sp.diags(vals).tocsr())
    assert r.kappa == pytest.approx(max(vals) / min(vals), rel=1e-10)


def test_dispatch():
    A = _spd(10)
    b = np.ones(10)
    for m in ("direct", "gmres", "cg"):
        rep = slv.solve(_System(A, b), method=m, tol=1e-10)
        assert rep.method.value == m
        np.testing.assert_allclose(A @ rep.coeffs, b, atol=1e-7)
    with pytest.raises(ValueError):
        slv.solve(_System(A, b), method="lu")


class _System:
    def __init__(self, A, b):
        self.matrix, self.rhs = A, b

    def aslinearoperator(self):
        import scipy.sparse.linalg as spla
        return spla.aslinearoperator(self.matrix)

    def diagonal(self):
        return self.matrix.diagonal()

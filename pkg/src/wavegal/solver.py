"""Linear solvers and condition numbers for Galerkin systems.

``solve_direct`` factorises the sparse matrix, ``solve_gmres`` runs full
(non-restarted, unpreconditioned) GMRES from a zero guess and counts
iterations, ``solve_cg`` is a Jacobi-preconditioned CG for matrix-free
systems that are too large to factorise.

Every solver accepts ``scaling="jacobi"``, which solves the symmetrically
scaled system ``D A D y = D b`` with ``D = diag(A)^{-1/2}`` and returns
``c = D y``.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DENSE_MAX = 6000
GMRES_MEMORY_LIMIT = 2.0e9     # bytes of Krylov basis


class NotSPDError(RuntimeError):
    """The matrix could not be factorised or is not positive definite."""


class Method(str, enum.Enum):
    DIRECT = "direct"
    GMRES = "gmres"
    CG = "cg"


@dataclass
class SolveReport:
    coeffs: np.ndarray
    method: Method
    iterations: Optional[int]
    residual: float
    converged: bool = True
    kappa: Optional[float] = None
    sigma_min: Optional[float] = None
    sigma_max: Optional[float] = None
    message: str = ""


@dataclass
class ConditionReport:
    kappa: float
    sigma_min: float
    sigma_max: float
    converged: bool = True
    mode: str = "dense"


# --- helpers --------------------------------------------------------------------

def _as_pair(system):
    """``(matrix or None, operator, rhs)`` from a system or a bare matrix."""
    if sp.issparse(system) or isinstance(system, np.ndarray):
        A = sp.csr_matrix(system)
        return A, spla.aslinearoperator(A), None
    A = system.matrix
    return A, system.aslinearoperator(), np.asarray(system.rhs, dtype=float)


def _scaling(system, A, scaling):
    if scaling in (None, "none"):
        return None
    if scaling != "jacobi":
        raise ValueError(f"unknown scaling {scaling!r}")
    d = A.diagonal() if A is not None else system.diagonal()
    if np.any(d <= 0):
        raise NotSPDError("non-positive diagonal entry; cannot scale")
    return 1.0 / np.sqrt(d)


def _scaled_operator(op, s):
    n = op.shape[0]
    return spla.LinearOperator((n, n), matvec=lambda v: s * (op @ (s * np.ravel(v))),
                               dtype=np.float64)


def _residual_ld(A, x, b):
    """``b - A x`` accumulated in extended precision (CSR ``A``)."""
    A = sp.csr_matrix(A)
    xl = np.asarray(x, dtype=np.longdouble)
    prod = A.data.astype(np.longdouble) * xl[A.indices]
    ax = np.zeros(A.shape[0], dtype=np.longdouble)
    nz = np.diff(A.indptr) > 0
    if prod.size:
        ax[nz] = np.add.reduceat(prod, A.indptr[:-1][nz])
    return np.asarray(b, dtype=np.longdouble) - ax


def _rel_residual(op, x, b):
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - op @ x)
    return r / nb if nb > 0 else r


# --- solvers --------------------------------------------------------------------

def solve_direct(system, rhs=None, scaling="none", check=1e-10):
    """Sparse LU solve with a relative residual check.

    Raises :class:`NotSPDError` when the factorisation breaks down or the
    residual exceeds ``check``.
    """
    A, op, b = _as_pair(system)
    b = np.asarray(rhs if rhs is not None else b, dtype=float)
    if A is None:
        raise ValueError("direct solve needs an explicit matrix")
    s = _scaling(system, A, scaling)
    M = A if s is None else (sp.diags(s) @ A @ sp.diags(s))
    bb = b if s is None else s * b
    if np.any(M.diagonal() <= 0):
        raise NotSPDError("matrix has a non-positive diagonal entry")
    try:
        lu = spla.splu(sp.csc_matrix(M))
    except RuntimeError as exc:
        raise NotSPDError(f"factorisation failed: {exc}") from exc
    y = lu.solve(bb)
    if not np.all(np.isfinite(y)):
        raise NotSPDError("factorisation produced non-finite values")
    # a few steps of iterative refinement for badly scaled systems
    for _ in range(3):
        r = _residual_ld(M, y, bb)
        if np.linalg.norm(r.astype(float)) <= 1e-3 * check * np.linalg.norm(bb):
            break
        y = y + lu.solve(r.astype(float))
    x = y if s is None else s * y
    nb = np.linalg.norm(b)
    res = float(np.linalg.norm(_residual_ld(A, x, b).astype(float)) / (nb if nb > 0 else 1.0))
    if res > check:
        raise NotSPDError(f"relative residual {res:.3e} exceeds {check:.0e}")
    return SolveReport(x, Method.DIRECT, None, float(res))


def solve_gmres(system, rhs=None, tol=1e-8, max_iter=None, scaling="none"):
    """Full GMRES from a zero guess; the report carries the iteration count.

    Non-convergence within ``max_iter`` is reported, not raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A, op, b = _as_pair(system)
    b = np.asarray(rhs if rhs is not None else b, dtype=float)
    n = op.shape[0]
    max_iter = n if max_iter is None else int(min(max_iter, n))
    need = 8.0 * n * (max_iter + 1)
    if need > GMRES_MEMORY_LIMIT:
        log.warning("full GMRES basis needs %.1f GB", need / 1e9)
    s = _scaling(system, A, scaling)
    if s is not None:
        op_s = _scaled_operator(op, s) if A is None else sp.csr_matrix(sp.diags(s) @ A @ sp.diags(s))
        bb = s * b
    else:
        op_s, bb = (A if A is not None else op), b
    count = [0]

    def cb(_):
        count[0] += 1

    y, info = spla.gmres(op_s, bb, x0=np.zeros(n), rtol=tol, atol=0.0, restart=max_iter,
                         maxiter=1, callback=cb, callback_type="pr_norm")
    x = y if s is None else s * y
    res = _rel_residual(op_s, y, bb)
    ok = info == 0
    msg = "" if ok else f"no convergence within {max_iter} iterations"
    return SolveReport(x, Method.GMRES, count[0], float(res), ok, message=msg)


def solve_cg(system, rhs=None, tol=1e-10, max_iter=20000, scaling="jacobi"):
    """Conjugate gradients, Jacobi preconditioned unless ``scaling="none"``."""
    A, op, b = _as_pair(system)
    b = np.asarray(rhs if rhs is not None else b, dtype=float)
    n = op.shape[0]
    M = None
    if scaling == "jacobi":
        d = A.diagonal() if A is not None else system.diagonal()
        inv = 1.0 / d
        M = spla.LinearOperator((n, n), matvec=lambda v: inv * np.ravel(v), dtype=np.float64)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.cg(A if A is not None else op, b, x0=np.zeros(n), rtol=tol, atol=0.0,
                      maxiter=max_iter, M=M, callback=cb)
    res = _rel_residual(op, x, b)
    ok = info == 0
    return SolveReport(x, Method.CG, count[0], float(res), ok,
                       message="" if ok else f"no convergence within {max_iter} iterations")


def solve(system, method="direct", tol=1e-8, max_iter=None, scaling="none"):
    """Dispatch on ``method``; matrix-free systems always go to CG."""
    method = Method(method)
    if getattr(system, "matrix", 0) is None and method is Method.DIRECT:
        method = Method.CG
    if method is Method.DIRECT:
        return solve_direct(system, scaling=scaling)
    if method is Method.GMRES:
        return solve_gmres(system, tol=tol, max_iter=max_iter, scaling=scaling)
    return solve_cg(system, tol=min(tol, 1e-10), max_iter=max_iter or 20000)


# --- condition numbers -------------------------------------------------------------

def condition_number(system, mode="dense", dense_max=DENSE_MAX, scaling="none", tol=1e-6):
    """``sigma_max / sigma_min`` of the (symmetric) system matrix.

    ``dense`` computes all eigenvalues; ``iterative`` uses Lanczos for the
    largest and shift-invert Lanczos at zero for the smallest.
    """
    A, op, _ = _as_pair(system)
    s = _scaling(system, A, scaling)
    if A is not None and s is not None:
        A = sp.csr_matrix(sp.diags(s) @ A @ sp.diags(s))
    n = op.shape[0]
    if mode == "dense":
        if A is None:
            raise ValueError("dense mode needs an explicit matrix")
        if n > dense_max:
            raise ValueError(f"N={n} exceeds the dense limit {dense_max}; use mode='iterative'")
        ev = np.abs(sla.eigvalsh(A.toarray(), check_finite=False))
        lo, hi = float(ev.min()), float(ev.max())
        return ConditionReport(hi / lo if lo > 0 else np.inf, lo, hi, True, "dense")
    if mode != "iterative":
        raise ValueError(f"unknown mode {mode!r}")
    conv = True
    target = A if A is not None else (op if s is None else _scaled_operator(op, s))
    try:
        hi = float(abs(spla.eigsh(target, k=1, which="LM", tol=tol, maxiter=10000,
                                  return_eigenvectors=False)[0]))
    except spla.ArpackNoConvergence as exc:
        conv = False
        hi = float(np.max(np.abs(exc.eigenvalues))) if len(exc.eigenvalues) else np.nan
    try:
        if A is not None:
            lo = float(abs(spla.eigsh(sp.csc_matrix(A), k=1, sigma=0, which="LM", tol=tol,
                                      maxiter=10000, return_eigenvectors=False)[0]))
        else:
            rng = np.random.default_rng(0)
            vals, _ = spla.lobpcg(target, rng.standard_normal((n, 1)), largest=False,
                                  tol=tol, maxiter=10000)
            lo = float(abs(vals[0]))
    except spla.ArpackNoConvergence as exc:
        conv = False
        lo = float(np.min(np.abs(exc.eigenvalues))) if len(exc.eigenvalues) else np.nan
    return ConditionReport(hi / lo if lo > 0 else np.inf, lo, hi, conv, "iterative")

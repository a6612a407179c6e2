"""Sparse complex matrices, direct and Krylov solvers, real 2N block systems.

Matrices are ``scipy.sparse.csr_matrix`` in canonical form (sorted indices,
no explicit zeros); symmetry tags are checked on demand by
:func:`hermitian_defect`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class LinearSolverError(RuntimeError):
    pass


class SingularMatrixError(LinearSolverError):
    def __init__(self, message: str, pivot=None):
        super().__init__(message if pivot is None else f"{message} (pivot {pivot})")
        self.pivot = pivot


class ConvergenceError(LinearSolverError):
    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message}: {iterations} iterations, relative residual {residual:.3e}")
        self.iterations = iterations
        self.residual = residual


def canonical(A, dtype=None) -> sp.csr_matrix:
    """CSR copy with sorted column indices and explicit zeros removed."""
    A = sp.csr_matrix(A, dtype=dtype)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def hermitian_defect(A) -> float:
    """max |A - A^H| over entries."""
    D = (A - A.conj().T).tocoo()
    return float(np.abs(D.data).max()) if D.nnz else 0.0


def symmetric_defect(A) -> float:
    D = (A - A.T).tocoo()
    return float(np.abs(D.data).max()) if D.nnz else 0.0


def matvec(A, x):
    x = np.asarray(x)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape} times vector {x.shape}")
    return A @ x


# ---------------------------------------------------------------------------
# real block formulation
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class RealBlockSystem:
    """[[rr, ri], [ir, ii]] acting on (Re x, Im x), with stacked real right-hand side."""

    rr: sp.csr_matrix
    ri: sp.csr_matrix
    ir: sp.csr_matrix
    ii: sp.csr_matrix
    rhs: np.ndarray

    def __post_init__(self):
        n = self.rr.shape[0]
        for blk in (self.rr, self.ri, self.ir, self.ii):
            if blk.shape != (n, n):
                raise ValueError("inconsistent block dimensions")
        if self.rhs is not None and np.shape(self.rhs) != (2 * n,):
            raise ValueError(f"right-hand side must have length {2 * n}")

    @property
    def n(self) -> int:
        return self.rr.shape[0]

    @property
    def shape(self):
        return (2 * self.n, 2 * self.n)

    def matrix(self) -> sp.csc_matrix:
        return sp.bmat([[self.rr, self.ri], [self.ir, self.ii]], format="csc")

    def is_complex_linear(self, tol: float = 0.0) -> bool:
        d1 = abs(self.rr - self.ii).max() if self.n else 0.0
        d2 = abs(self.ri + self.ir).max() if self.n else 0.0
        return max(d1, d2) <= tol

    @staticmethod
    def stack(z) -> np.ndarray:
        z = np.asarray(z)
        return np.concatenate([z.real, z.imag])

    @staticmethod
    def unstack(v) -> np.ndarray:
        n = v.shape[0] // 2
        return v[:n] + 1j * v[n:]

    @classmethod
    def from_complex(cls, C, rhs=None) -> "RealBlockSystem":
        C = sp.csr_matrix(C)
        Cr = canonical(C.real)
        Ci = canonical(C.imag)
        return cls(Cr, -Ci, Ci, Cr, None if rhs is None else cls.stack(rhs))


# ---------------------------------------------------------------------------
# direct solves
# ---------------------------------------------------------------------------

def _structural_check(A):
    A = sp.csr_matrix(A)
    rows = np.diff(A.indptr)
    if np.any(rows == 0):
        raise SingularMatrixError("structurally singular: empty row", int(np.flatnonzero(rows == 0)[0]))
    cols = np.bincount(A.indices, minlength=A.shape[1])
    if np.any(cols == 0):
        raise SingularMatrixError("structurally singular: empty column", int(np.flatnonzero(cols == 0)[0]))


def _locate_pivot(A, rtol):
    """Dense LU search for the first negligible pivot (small systems only)."""
    if A.shape[0] > 3000:
        return None
    _, _, U = scipy.linalg.lu(A.toarray())
    d = np.abs(np.diag(U))
    bad = np.flatnonzero(d <= rtol * max(d.max(), np.finfo(float).tiny))
    return int(bad[0]) if bad.size else None


class Factorization:
    """Sparse LU factorization, reusable for many right-hand sides."""

    def __init__(self, A, pivot_rtol: float = 1e-14):
        if isinstance(A, RealBlockSystem):
            A = A.matrix()
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.shape = A.shape
        self.dtype = A.dtype
        if A.shape[0] == 0:
            self._lu = None
            return
        _structural_check(A)
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularMatrixError(f"numerically singular matrix: {exc}", _locate_pivot(A, pivot_rtol)) from None
        d = np.abs(self._lu.U.diagonal())
        if d.min() <= pivot_rtol * d.max():
            k = int(np.argmin(d))
            raise SingularMatrixError("numerically singular matrix", int(self._lu.perm_c[k]))

    def solve(self, b):
        b = np.asarray(b)
        if b.shape[0] != self.shape[0]:
            raise ValueError(f"right-hand side length {b.shape[0]} does not match {self.shape[0]}")
        if self._lu is None:
            return b.copy()
        if np.iscomplexobj(b) and not np.iscomplexobj(np.empty(0, self.dtype)):
            return self._lu.solve(np.ascontiguousarray(b.real)) + 1j * self._lu.solve(np.ascontiguousarray(b.imag))
        return self._lu.solve(np.ascontiguousarray(b, dtype=np.result_type(b, self.dtype)))


def factorize(system) -> Factorization:
    return Factorization(system)


def solve_direct(system, rhs=None):
    """Direct sparse solve of a complex matrix or a RealBlockSystem.

    For a RealBlockSystem the stored right-hand side is used when ``rhs`` is
    None and the complex solution (Re x + i Im x) is returned.
    """
    if isinstance(system, RealBlockSystem):
        b = system.rhs if rhs is None else np.asarray(rhs)
        if np.iscomplexobj(b):
            b = RealBlockSystem.stack(b)
        return RealBlockSystem.unstack(Factorization(system.matrix()).solve(b))
    return Factorization(system).solve(rhs)


# ---------------------------------------------------------------------------
# Krylov solves
# ---------------------------------------------------------------------------

def jacobi_preconditioner(A) -> spla.LinearOperator:
    d = np.asarray(A.diagonal())
    if np.any(d == 0):
        raise SingularMatrixError("zero diagonal entry, Jacobi preconditioner undefined", int(np.flatnonzero(d == 0)[0]))
    inv = 1.0 / d
    return spla.LinearOperator(A.shape, matvec=lambda v: inv * v, dtype=np.result_type(inv.dtype, np.float64))


def solve_iterative(system, rhs=None, tol: float = 1e-10, max_iter: int = 1000, x0=None, preconditioner=None):
    """BiCGStab with Jacobi preconditioning (or a supplied preconditioner).

    Returns ``(solution, iterations)``; raises ConvergenceError when the
    relative residual does not reach ``tol`` within ``max_iter`` iterations.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    real_block = isinstance(system, RealBlockSystem)
    if real_block:
        A = system.matrix().tocsr()
        b = system.rhs if rhs is None else np.asarray(rhs)
        if np.iscomplexobj(b):
            b = RealBlockSystem.stack(b)
        if x0 is not None and np.iscomplexobj(x0):
            x0 = RealBlockSystem.stack(x0)
    else:
        A = sp.csr_matrix(system)
        b = np.asarray(rhs)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError("system must be square and match the right-hand side")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        x = np.zeros_like(b, dtype=np.result_type(A.dtype, b.dtype))
        return (RealBlockSystem.unstack(x) if real_block else x), 0

    P = preconditioner if preconditioner is not None else jacobi_preconditioner(A)
    if isinstance(P, Factorization):
        fac = P
        P = spla.LinearOperator(A.shape, matvec=fac.solve, dtype=np.result_type(A.dtype, b.dtype))
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.bicgstab(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=max_iter, M=P, callback=cb)
    res = np.linalg.norm(b - A @ x) / bnorm
    if info != 0 or not np.isfinite(res) or res > tol * 1.0001:
        raise ConvergenceError("BiCGStab did not converge", count[0], float(res))
    return (RealBlockSystem.unstack(x) if real_block else x), count[0]


def dump_coo(A, path) -> None:
    """Write ``row col re im`` per stored entry (0-based indices)."""
    C = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"# {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for i, j, v in zip(C.row, C.col, C.data):
            v = complex(v)
            fh.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")


def load_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        n, m, _ = (int(t) for t in fh.readline()[1:].split())
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix((n, m), dtype=np.complex128)
    return sp.csr_matrix(
        (data[:, 2] + 1j * data[:, 3], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, m)
    )

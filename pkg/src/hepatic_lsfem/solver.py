"""Solvers for the reduced symmetric positive definite system."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .assembly import LsSystem

DIRECT_LIMIT = 200_000


class NotSPDError(np.linalg.LinAlgError):
    """The reduced matrix is not positive definite; ``where`` locates the failure."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


@dataclass
class SolveReport:
    x: np.ndarray             # full coefficient vector (constraints applied)
    iterations: int
    residual: float           # relative residual of the reduced system
    method: str
    wall_time: float
    n_reduced: int
    converged: bool = True


def ldlt_pivots(A: sps.spmatrix):
    """Sparse LDL^T via SuperLU with symmetric ordering and no pivoting.

    Returns the factorization and the diagonal ``D``; ``A`` is positive
    definite exactly when every entry of ``D`` is positive.
    """
    A = sps.csc_matrix(A)
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options={"SymmetricMode": True})
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise NotSPDError("factorization needed off-diagonal pivoting")
    return lu, lu.U.diagonal()


def cholesky_certificate(A: sps.spmatrix) -> float:
    """Smallest pivot of the LDL^T factorization; raises :class:`NotSPDError` if not positive."""
    _, d = ldlt_pivots(A)
    k = int(np.argmin(d))
    if not d[k] > 0:
        raise NotSPDError(f"non-positive pivot {d[k]:.3e} at position {k}", where=k)
    return float(d[k])


def pcg(A, b, tol=1e-10, maxiter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Returns ``(x, iterations, relative residual)``.  Raises
    :class:`NotSPDError` when a search direction has non-positive curvature.
    """
    n = len(b)
    maxiter = maxiter or 10 * n + 100
    d = A.diagonal()
    if np.any(d <= 0):
        k = int(np.flatnonzero(d <= 0)[0])
        raise NotSPDError(f"non-positive diagonal entry at {k}", where=k)
    Minv = 1.0 / d
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - A @ x
    nb = np.linalg.norm(b)
    if nb == 0:
        return np.zeros(n), 0, 0.0
    z = Minv * r
    p = z.copy()
    rz = r @ z
    it = 0
    while np.linalg.norm(r) > tol * nb and it < maxiter:
        Ap = A @ p
        curv = p @ Ap
        if not curv > 0:
            raise NotSPDError(f"CG breakdown: p.Ap = {curv:.3e} at iteration {it}", where=p)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        z = Minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
    return x, it, float(np.linalg.norm(r) / nb)


def solve(system: LsSystem, tol: float = 1e-10, method: str = "auto", maxiter=None) -> SolveReport:
    """Minimize the functional over the constrained affine space.

    ``method`` is ``"direct"`` (sparse LDL^T, which also certifies positive
    definiteness), ``"cg"`` or ``"auto"`` (direct up to ``DIRECT_LIMIT`` dofs).
    """
    t0 = time.perf_counter()
    Ar, br = system.reduced()
    n = Ar.shape[0]
    if method == "auto":
        method = "direct" if n <= DIRECT_LIMIT else "cg"
    if n == 0:
        return SolveReport(system.expand(np.zeros(0)), 0, 0.0, method, time.perf_counter() - t0, 0)
    if method == "direct":
        lu, d = ldlt_pivots(Ar)
        k = int(np.argmin(d))
        if not d[k] > 0:
            raise NotSPDError(f"reduced matrix not positive definite: pivot {d[k]:.3e} at {k}", where=k)
        x = lu.solve(br)
        iters = 1
    elif method == "cg":
        x, iters, _ = pcg(Ar, br, tol=tol, maxiter=maxiter)
    else:
        raise ValueError(f"unknown solver method {method!r}")
    nb = np.linalg.norm(br)
    res = float(np.linalg.norm(br - Ar @ x) / nb) if nb > 0 else 0.0
    return SolveReport(system.expand(x), iters, res, method, time.perf_counter() - t0, n, res <= tol)

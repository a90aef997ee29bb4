"""Jacobi-preconditioned conjugate gradients for SPD Laplacian blocks."""

from __future__ import annotations

import numpy as np

from .errors import SolverDivergence


def conjugate_gradient(A, b, *, rtol=1e-12, maxiter=None, x0=None):
    """Solve ``A x = b`` for symmetric positive definite sparse ``A``.

    Stops when ``||b - A x|| <= rtol * ||b||``.  Raises
    :class:`SolverDivergence` if that is not reached within ``maxiter``
    iterations or the residual stops decreasing for a long stretch.
    """
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    if maxiter is None:
        maxiter = max(100, 10 * n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    diag = np.asarray(A.diagonal(), dtype=np.float64)
    if (diag <= 0).any():
        raise SolverDivergence("matrix has a non-positive diagonal entry")
    inv_diag = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A @ x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    target = rtol * bnorm
    best = np.inf
    stall = 0
    for _ in range(maxiter):
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x
        if rnorm < 0.999 * best:
            best = rnorm
            stall = 0
        else:
            stall += 1
            if stall > max(50, n):
                break
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SolverDivergence("matrix is not positive definite along a search direction")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(b - A @ x) <= target:
        return x
    raise SolverDivergence(
        f"CG stopped at relative residual {np.linalg.norm(r) / bnorm:.3e} (target {rtol:.1e})"
    )

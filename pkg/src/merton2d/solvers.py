"""Linear solve kernels used by the time steppers.

Three kinds of systems arise: tridiagonal systems (I - c*A_q) batched over
all grid lines of one direction, nine-point systems (I - c*A_D), possibly
with a nonnegative diagonal added by the penalty method, and small linear
complementarity problems for which projected SOR serves as the oracle.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .operators import DirectionalOperator

__all__ = ["LineFactorization", "StencilSolver", "solve_tridiag_lines",
           "solve_lcp_psor", "PsorConvergenceError"]


class LineFactorization:
    """LU factorization of (I - c*A_q), reused by every grid line in the
    direction because the coefficients do not vary across lines."""

    def __init__(self, op: DirectionalOperator, c: float):
        self.q = op.q
        self.c = c
        dl = -c * op.lower[1:]
        d = 1.0 - c * op.diag
        du = -c * op.upper[:-1]
        dl, d, du, du2, ipiv, info = lapack.dgttrf(dl, d, du)
        if info != 0:
            raise np.linalg.LinAlgError(
                f"zero pivot in tridiagonal factorization (direction {self.q}, info={info})")
        self._fact = (dl, d, du, du2, ipiv)

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve along axis q-1 of a 2-D right-hand side."""
        rhs = b if self.q == 1 else b.T
        x, info = lapack.dgttrs(*self._fact, np.asfortranarray(rhs))
        if info != 0:
            raise np.linalg.LinAlgError(f"tridiagonal solve failed (info={info})")
        return np.ascontiguousarray(x if self.q == 1 else x.T)


def solve_tridiag_lines(lower, diag, upper, b: np.ndarray, axis: int) -> np.ndarray:
    """Thomas algorithm vectorized across lines, with full 2-D coefficient
    arrays (needed when a per-node penalty diagonal breaks line sharing)."""
    if axis == 0:
        lower, diag, upper, b = lower.T, diag.T, upper.T, b.T
    lower = np.broadcast_to(lower, b.shape)
    upper = np.broadcast_to(upper, b.shape)
    diag = np.broadcast_to(diag, b.shape)
    n = b.shape[1]
    cp = np.empty_like(b)
    dp = np.empty_like(b)
    cp[:, 0] = upper[:, 0] / diag[:, 0]
    dp[:, 0] = b[:, 0] / diag[:, 0]
    for j in range(1, n):
        den = diag[:, j] - lower[:, j] * cp[:, j - 1]
        cp[:, j] = upper[:, j] / den
        dp[:, j] = (b[:, j] - lower[:, j] * dp[:, j - 1]) / den
    x = dp
    for j in range(n - 2, -1, -1):
        x[:, j] -= cp[:, j] * x[:, j + 1]
    return np.ascontiguousarray(x.T if axis == 0 else x)


class StencilSolver:
    """Direct solves with (I - c*A_D + diag(p)).

    The factorization for p = 0 is cached per distinct c and reused across
    time steps; penalty solves refactor whenever the active set changes and
    otherwise reuse the previous factorization.
    """

    RESIDUAL_RTOL = 1e-10

    def __init__(self, ad: sp.csr_matrix, shape: tuple[int, int]):
        self._ad = ad
        self._eye = sp.identity(ad.shape[0], format="csr")
        self.shape = shape
        self._plain: dict[float, spla.SuperLU] = {}
        self._penalized: tuple | None = None  # (key, lu) of the last penalty factorization

    def _factor(self, c: float, extra_diag=None) -> spla.SuperLU:
        m = self._eye - c * self._ad
        if extra_diag is not None:
            m = m + sp.diags(extra_diag.ravel())
        return spla.splu(m.tocsc(), permc_spec="MMD_AT_PLUS_A")

    def solve(self, c: float, rhs: np.ndarray, extra_diag: np.ndarray | None = None
              ) -> np.ndarray:
        if c < 0:
            raise ValueError("c must be nonnegative")
        if extra_diag is not None and not extra_diag.any():
            extra_diag = None
        if c == 0.0 and extra_diag is None:
            return rhs.copy()
        if extra_diag is None:
            lu = self._plain.get(c)
            if lu is None:
                lu = self._plain.setdefault(c, self._factor(c))
        else:
            key = (c, extra_diag.tobytes())
            if self._penalized is not None and self._penalized[0] == key:
                lu = self._penalized[1]
            else:
                lu = self._factor(c, extra_diag)
                self._penalized = (key, lu)
        x = lu.solve(rhs.ravel())
        self._check_residual(c, extra_diag, x, rhs.ravel())
        return x.reshape(self.shape)

    def _check_residual(self, c, extra_diag, x, b):
        r = x - c * (self._ad @ x) - b
        if extra_diag is not None:
            r += extra_diag.ravel() * x
        bnorm = np.abs(b).max()
        if bnorm > 0 and np.abs(r).max() > self.RESIDUAL_RTOL * bnorm:
            raise np.linalg.LinAlgError(
                f"stencil solve residual {np.abs(r).max():.3e} exceeds "
                f"{self.RESIDUAL_RTOL:.1e} * ||b||")


class PsorConvergenceError(RuntimeError):
    pass


def solve_lcp_psor(c_dt: float, ad: sp.csr_matrix, rhs: np.ndarray,
                   lower_bound: np.ndarray, omega: float = 1.3,
                   tol: float = 1e-10, max_iter: int = 50000
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Projected SOR for the complementarity system

        (I - c_dt*A_D) v = rhs + c_dt*mult,  v >= lower_bound,
        mult >= 0,  (v - lower_bound)' mult = 0.

    Meant as an oracle on small grids; the sweep is plain Python.
    Returns (v, mult).
    """
    shape = rhs.shape
    n = rhs.size
    m = (sp.identity(n, format="csr") - c_dt * ad).tocsr()
    indptr, indices, data = m.indptr, m.indices, m.data
    diag = m.diagonal()
    b = rhs.ravel().copy()
    lb = np.broadcast_to(np.asarray(lower_bound, dtype=float).ravel(), (n,))
    v = np.maximum(b, lb).astype(float)

    for _ in range(max_iter):
        delta = 0.0
        for l in range(n):
            row = slice(indptr[l], indptr[l + 1])
            sigma = data[row] @ v[indices[row]]
            vl = v[l] + omega * (b[l] - sigma) / diag[l]
            if vl < lb[l]:
                vl = lb[l]
            d = abs(vl - v[l])
            if d > delta:
                delta = d
            v[l] = vl
        if delta <= tol:
            break
    else:
        raise PsorConvergenceError(
            f"projected SOR did not reach {tol:.1e} in {max_iter} sweeps")

    mult = (m @ v - b) / c_dt if c_dt > 0 else np.zeros(n)
    mult = np.maximum(mult, 0.0)
    return v.reshape(shape), mult.reshape(shape)

"""Discrete convection-diffusion-reaction operators on the tensor grid.

The full differential operator splits into two one-directional parts
(tridiagonal along their grid lines, each carrying half of the reaction
term) and a nine-point mixed-derivative part.  Grid functions are stored
as 2-D arrays with axis 0 along the first asset price.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import AxisGrid, SpatialGrid
from .model import ModelParams, expected_relative_jump

__all__ = ["StencilCoeffs", "DirectionalOperator", "MixedOperator",
           "OperatorSet", "build_stencils", "assemble_directional",
           "assemble_mixed", "assemble_operators"]


@dataclass(frozen=True)
class StencilCoeffs:
    """First/second-derivative weights per node, as (m+1, 3) arrays of
    (left, center, right) coefficients.

    Interior rows use the second-order central formulas for a nonuniform
    mesh.  The last row uses the two-point backward formula for the first
    derivative and no second derivative (linear boundary behaviour); the
    first row is empty because the operator degenerates at s = 0.
    """

    alpha: np.ndarray
    beta: np.ndarray


def build_stencils(axis: AxisGrid) -> StencilCoeffs:
    m = axis.m
    h = axis.h
    alpha = np.zeros((m + 1, 3))
    beta = np.zeros((m + 1, 3))

    hj = h[1:m]        # h_j for j = 1..m-1
    hj1 = h[2:m + 1]   # h_{j+1}
    alpha[1:m, 0] = -hj1 / (hj * (hj + hj1))
    alpha[1:m, 1] = (hj1 - hj) / (hj * hj1)
    alpha[1:m, 2] = hj / (hj1 * (hj + hj1))
    beta[1:m, 0] = 2.0 / (hj * (hj + hj1))
    beta[1:m, 1] = -2.0 / (hj * hj1)
    beta[1:m, 2] = 2.0 / (hj1 * (hj + hj1))

    alpha[m, 0] = -1.0 / h[m]
    alpha[m, 1] = 1.0 / h[m]
    return StencilCoeffs(alpha=alpha, beta=beta)


class DirectionalOperator:
    """All derivative terms in one grid direction plus half the reaction,
    stored as tridiagonal bands shared by every grid line."""

    def __init__(self, q: int, lower, diag, upper):
        self.q = q
        self.lower = np.asarray(lower)   # couples node j to j-1; entry 0 unused
        self.diag = np.asarray(diag)
        self.upper = np.asarray(upper)   # couples node j to j+1; entry m unused

    @property
    def n(self) -> int:
        return len(self.diag)

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Apply along axis q-1 of a 2-D grid function."""
        if self.q == 1:
            out = self.diag[:, None] * u
            out[1:, :] += self.lower[1:, None] * u[:-1, :]
            out[:-1, :] += self.upper[:-1, None] * u[1:, :]
        else:
            out = self.diag[None, :] * u
            out[:, 1:] += self.lower[None, 1:] * u[:, :-1]
            out[:, :-1] += self.upper[None, :-1] * u[:, 1:]
        return out

    def as_sparse(self) -> sp.csr_matrix:
        return sp.diags([self.lower[1:], self.diag, self.upper[:-1]],
                        [-1, 0, 1], format="csr")


class MixedOperator:
    """Cross-derivative term, applied as the tensor product of the two
    first-derivative stencils scaled by rho*sigma1*sigma2*s1*s2."""

    def __init__(self, d1: DirectionalOperator, d2: DirectionalOperator,
                 scale: np.ndarray):
        self._d1 = d1      # first-derivative bands, direction 1
        self._d2 = d2
        self.scale = scale  # (m1+1, m2+1) prefactor

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.scale * self._d2.apply(self._d1.apply(u))

    def as_sparse(self) -> sp.csr_matrix:
        m = sp.kron(self._d1.as_sparse(), self._d2.as_sparse(), format="csr")
        return sp.diags(self.scale.ravel()) @ m


def _first_derivative_operator(q: int, st: StencilCoeffs) -> DirectionalOperator:
    return DirectionalOperator(q, st.alpha[:, 0], st.alpha[:, 1], st.alpha[:, 2])


def assemble_directional(params: ModelParams, axis: AxisGrid,
                         st: StencilCoeffs, q: int) -> DirectionalOperator:
    """0.5*sigma_q^2 s^2 d2/ds2 + (r - lam*zeta_q) s d/ds - (r+lam)/2."""
    s = axis.s
    conv = (params.r - params.lam * expected_relative_jump(params, q)) * s
    diff = 0.5 * params.sigma(q) ** 2 * s**2
    lower = diff * st.beta[:, 0] + conv * st.alpha[:, 0]
    diag = diff * st.beta[:, 1] + conv * st.alpha[:, 1] - 0.5 * (params.r + params.lam)
    upper = diff * st.beta[:, 2] + conv * st.alpha[:, 2]
    return DirectionalOperator(q, lower, diag, upper)


def assemble_mixed(params: ModelParams, grid: SpatialGrid,
                   st1: StencilCoeffs, st2: StencilCoeffs) -> MixedOperator:
    d1 = _first_derivative_operator(1, st1)
    d2 = _first_derivative_operator(2, st2)
    coeff = params.rho * params.sigma1 * params.sigma2
    scale = coeff * np.outer(grid.axis(1).s, grid.axis(2).s)
    return MixedOperator(d1, d2, scale)


@dataclass(frozen=True)
class OperatorSet:
    """The assembled differential operators and their composite.

    `ad` is the sparse composite (mixed + both directional parts) acting on
    grid functions flattened in C order; it backs the two-dimensional
    implicit solves and is the ground truth for apply_ad.
    """

    a1: DirectionalOperator
    a2: DirectionalOperator
    mixed: MixedOperator
    ad: sp.csr_matrix
    shape: tuple[int, int]

    def apply_a(self, q: int, u: np.ndarray) -> np.ndarray:
        return (self.a1 if q == 1 else self.a2).apply(u)

    def apply_mixed(self, u: np.ndarray) -> np.ndarray:
        return self.mixed.apply(u)

    def apply_ad(self, u: np.ndarray) -> np.ndarray:
        if u.shape != self.shape:
            raise ValueError(f"expected grid shape {self.shape}, got {u.shape}")
        return (self.ad @ u.ravel()).reshape(self.shape)


def assemble_operators(params: ModelParams, grid: SpatialGrid) -> OperatorSet:
    ax1, ax2 = grid.axes
    st1 = build_stencils(ax1)
    st2 = st1 if ax2 is ax1 else build_stencils(ax2)
    a1 = assemble_directional(params, ax1, st1, 1)
    a2 = assemble_directional(params, ax2, st2, 2)
    mixed = assemble_mixed(params, grid, st1, st2)

    i1 = sp.identity(ax1.m + 1, format="csr")
    i2 = sp.identity(ax2.m + 1, format="csr")
    ad = (sp.kron(a1.as_sparse(), i2)
          + sp.kron(i1, a2.as_sparse())
          + mixed.as_sparse()).tocsr()
    return OperatorSet(a1=a1, a2=a2, mixed=mixed, ad=ad, shape=grid.shape)

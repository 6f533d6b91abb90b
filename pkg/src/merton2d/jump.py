"""Discrete integral (jump) operator.

The integral term is evaluated in three stages: bilinear interpolation of
the grid function onto a uniform log-price grid, a two-dimensional
cross-correlation with the log-jump density carried out through a
circulant embedding and FFTs, and bilinear interpolation back onto the
price grid.  The composite is a fixed linear map, so the kernel spectrum
and both interpolation operators are built once per discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp

from .grid import AxisGrid, SpatialGrid
from .model import ModelParams, normal_density_log

__all__ = ["LogGrid", "ToeplitzKernel", "JumpOperator", "build_log_grid",
           "build_kernel", "build_jump_operator", "xcorr_fft"]

MAX_LOG_NODES = 2**15
_FFT_WORKERS = 2


@dataclass(frozen=True)
class LogGrid:
    """Uniform log-price grid x_k = k*dx for k = -M+1, ..., M."""

    m_pow2: int      # M, a power of two
    dx: float        # ln(s_max) / M

    @property
    def size(self) -> int:
        return 2 * self.m_pow2

    @property
    def nodes(self) -> np.ndarray:
        return self.dx * np.arange(-self.m_pow2 + 1, self.m_pow2 + 1)


def build_log_grid(axis: AxisGrid, safety: float = 1.0) -> LogGrid:
    """Smallest power-of-two M such that safety * ln(s_max)/M is below the
    smallest mesh width of the log-transformed price grid."""
    s = axis.s
    min_log_width = np.log(s[2:] / s[1:-1]).min()
    log_smax = math.log(axis.s_max)
    m_pow2 = 2
    while not (safety * log_smax / m_pow2 < min_log_width):
        m_pow2 *= 2
        if m_pow2 > MAX_LOG_NODES:
            raise ValueError(f"log grid would need M > {MAX_LOG_NODES}")
    return LogGrid(m_pow2=m_pow2, dx=log_smax / m_pow2)


@dataclass(frozen=True)
class ToeplitzKernel:
    """Sampled log-jump density on all offsets the cross-correlation can
    touch, held as the conjugate spectrum of its circulant embedding."""

    shape: tuple[int, int]            # (2*M1, 2*M2) data size
    spectrum_conj: np.ndarray         # conj(rfft2) of the (4*M1, 4*M2) embedding
    mass: float                       # quadrature mass of the density samples
    lam: float

    @property
    def tail_mass(self) -> float:
        """Deviation of the sampled-window density mass from one."""
        return abs(1.0 - self.mass)


def _density_samples(params: ModelParams, lg1: LogGrid, lg2: LogGrid,
                     p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """fbar(p1*dx1, p2*dx2) * dx1 * dx2 on the offset grid."""
    eta1 = p1 * lg1.dx
    eta2 = p2 * lg2.dx
    w = lg1.dx * lg2.dx
    return w * normal_density_log(params, eta1[:, None], eta2[None, :])


def build_kernel(params: ModelParams, lg1: LogGrid, lg2: LogGrid) -> ToeplitzKernel:
    n1, n2 = 2 * lg1.m_pow2, 2 * lg2.m_pow2
    p1 = np.arange(-(n1 - 1), n1)
    p2 = np.arange(-(n2 - 1), n2)
    r1 = p1 % (2 * n1)
    r2 = p2 % (2 * n2)

    circ = np.zeros((2 * n1, 2 * n2))
    mass = 0.0
    block = 1024
    for lo in range(0, len(p1), block):
        hi = min(lo + block, len(p1))
        g = _density_samples(params, lg1, lg2, p1[lo:hi], p2)
        mass += float(g.sum())
        circ[np.ix_(r1[lo:hi], r2)] = params.lam * g
    spectrum_conj = np.conj(sfft.rfft2(circ, workers=_FFT_WORKERS))
    return ToeplitzKernel(shape=(n1, n2), spectrum_conj=spectrum_conj,
                          mass=mass, lam=params.lam)


def xcorr_fft(kernel: ToeplitzKernel, vbar: np.ndarray) -> np.ndarray:
    """Cross-correlate log-grid values with the kernel.

    Returns J[k,l] = sum_{i,j} vbar[i,j] * G[i-k, j-l] where G holds the
    weighted density samples.  The circulant embedding doubles each axis,
    so no wrap-around terms pollute the result.
    """
    n1, n2 = kernel.shape
    if vbar.shape != (n1, n2):
        raise ValueError(f"expected log-grid shape {(n1, n2)}, got {vbar.shape}")
    vhat = sfft.rfft2(vbar, s=(2 * n1, 2 * n2), workers=_FFT_WORKERS)
    vhat *= kernel.spectrum_conj
    out = sfft.irfft2(vhat, s=(2 * n1, 2 * n2), workers=_FFT_WORKERS)
    return out[:n1, :n2].copy()


def _linear_interp_matrix(queries: np.ndarray, nodes: np.ndarray) -> sp.csr_matrix:
    """Rows carry the two linear-interpolation weights of each query point;
    queries outside the node range are clamped (constant extrapolation)."""
    idx = np.searchsorted(nodes, queries, side="right") - 1
    idx = np.clip(idx, 0, len(nodes) - 2)
    t = (queries - nodes[idx]) / (nodes[idx + 1] - nodes[idx])
    t = np.clip(t, 0.0, 1.0)
    nq = len(queries)
    rows = np.repeat(np.arange(nq), 2)
    cols = np.stack([idx, idx + 1], axis=1).ravel()
    data = np.stack([1.0 - t, t], axis=1).ravel()
    return sp.csr_matrix((data, (rows, cols)), shape=(nq, len(nodes)))


class JumpOperator:
    """The composite discrete integral operator on price-grid functions."""

    def __init__(self, params: ModelParams, grid: SpatialGrid,
                 safety: float = 1.0):
        ax1, ax2 = grid.axes
        self.log1 = build_log_grid(ax1, safety)
        self.log2 = self.log1 if ax2 is ax1 else build_log_grid(ax2, safety)
        self.kernel = build_kernel(params, self.log1, self.log2)

        # price values -> log grid: linear in s at e^x
        self.fwd1 = _linear_interp_matrix(np.exp(self.log1.nodes), ax1.s)
        self.fwd2 = self.fwd1 if ax2 is ax1 else \
            _linear_interp_matrix(np.exp(self.log2.nodes), ax2.s)

        # log-grid values -> price grid: linear in x at ln s, clamped at s=0
        def _log_queries(s, lg):
            with np.errstate(divide="ignore"):
                x = np.log(s)
            return np.maximum(x, lg.nodes[0])

        self.back1 = _linear_interp_matrix(_log_queries(ax1.s, self.log1),
                                           self.log1.nodes)
        self.back2 = self.back1 if ax2 is ax1 else \
            _linear_interp_matrix(_log_queries(ax2.s, self.log2), self.log2.nodes)
        self.shape = grid.shape

    def forward(self, u: np.ndarray) -> np.ndarray:
        return self.fwd1 @ (self.fwd2 @ u.T).T

    def backward(self, jbar: np.ndarray) -> np.ndarray:
        return self.back1 @ (self.back2 @ jbar.T).T

    def apply(self, u: np.ndarray) -> np.ndarray:
        if u.shape != self.shape:
            raise ValueError(f"expected grid shape {self.shape}, got {u.shape}")
        if self.kernel.lam == 0.0:
            return np.zeros_like(u)
        return self.backward(xcorr_fft(self.kernel, self.forward(u)))

    def norm_bound(self) -> float:
        """Maximum absolute row sum of the composite operator; exact because
        every factor is nonnegative, so it is the image of the ones vector."""
        ones = np.ones(self.shape)
        return float(np.abs(self.apply(ones)).max())

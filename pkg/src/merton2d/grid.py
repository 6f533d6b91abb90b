"""Smooth nonuniform spatial grids in the asset-price directions.

The grid is uniform on a window around the strike and sinh-stretched
outside of it.  With an odd cell count across the uniform window the
strike lands exactly midway between two nodes, which is what the
difference stencils want.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["GridSpec", "AxisGrid", "SpatialGrid", "build_axis", "build_grid",
           "strike_midway_check", "nu_for_target_m", "nu_for_interior_width",
           "default_spec"]

MAX_NODES = 5000  # refuse degenerate specs that would blow past this


@dataclass(frozen=True)
class GridSpec:
    """Parameters of the one-directional grid construction.

    nu         number of cells across the uniform window
    d          stretching parameter (currency); uniform mesh width is d*dxi
    s_left     lower edge of the uniform window
    s_right    upper edge of the uniform window
    s_max      initial truncation bound (reset slightly upward on build)
    """

    nu: int
    d: float
    s_left: float
    s_right: float
    s_max: float

    def __post_init__(self):
        if self.nu < 1:
            raise ValueError("nu must be >= 1")
        if not (0 < self.s_left < self.s_right < self.s_max):
            raise ValueError("need 0 < s_left < s_right < s_max")
        if self.d <= 0:
            raise ValueError("stretching parameter d must be positive")

    @property
    def strike(self) -> float:
        return 0.5 * (self.s_left + self.s_right)


def default_spec(strike: float, nu: int, s_max_mult: float = 8.0) -> GridSpec:
    """Standard spec: d = K/3, window [0.8K, 1.2K], truncation at 8K."""
    return GridSpec(nu=nu, d=strike / 3.0, s_left=0.8 * strike,
                    s_right=1.2 * strike, s_max=s_max_mult * strike)


@dataclass(frozen=True)
class AxisGrid:
    """Grid along one price direction: nodes s_0 = 0 < ... < s_m."""

    spec: GridSpec
    s: np.ndarray          # node coordinates, length m+1
    h: np.ndarray          # mesh widths h_j = s_j - s_{j-1}, length m+1; h[0] unused (nan)
    xi_min: float
    xi_int: float
    xi_max: float
    dxi: float

    @property
    def m(self) -> int:
        return len(self.s) - 1

    @property
    def s_max(self) -> float:
        return float(self.s[-1])


@dataclass(frozen=True)
class SpatialGrid:
    """Tensor grid: one AxisGrid per price direction."""

    axes: tuple[AxisGrid, AxisGrid]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.axes[0].m + 1, self.axes[1].m + 1)

    def axis(self, q: int) -> AxisGrid:
        return self.axes[q - 1]

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """(S1, S2) arrays of shape (m1+1, m2+1) with S1 varying along axis 0."""
        return np.meshgrid(self.axes[0].s, self.axes[1].s, indexing="ij")


def _psi(xi, spec: GridSpec):
    """Price coordinate as a function of the stretched coordinate."""
    xi = np.asarray(xi, dtype=float)
    out = np.empty_like(xi)
    lo = xi <= 0
    hi = xi > (spec.s_right - spec.s_left) / spec.d
    mid = ~(lo | hi)
    xi_int = (spec.s_right - spec.s_left) / spec.d
    out[lo] = spec.s_left + spec.d * np.sinh(xi[lo])
    out[mid] = spec.s_left + spec.d * xi[mid]
    out[hi] = spec.s_right + spec.d * np.sinh(xi[hi] - xi_int)
    return out


def build_axis(spec: GridSpec) -> AxisGrid:
    """Construct the one-directional grid from its spec."""
    xi_min = math.asinh(-spec.s_left / spec.d)
    xi_int = (spec.s_right - spec.s_left) / spec.d
    xi_max = xi_int + math.asinh((spec.s_max - spec.s_right) / spec.d)

    dxi = (xi_int - 2.0 * xi_min) / spec.nu
    m = max(spec.nu + 1, math.ceil((xi_max - xi_min) / dxi))
    if m > MAX_NODES:
        raise ValueError(f"grid would need m={m} > {MAX_NODES} nodes; "
                         "spec is degenerate")
    xi_max = xi_min + m * dxi

    xi = xi_min + dxi * np.arange(m + 1)
    s = _psi(xi, spec)
    s[0] = 0.0  # psi(xi_min) is exactly -s_left + s_left; pin the rounding
    h = np.empty(m + 1)
    h[0] = np.nan
    h[1:] = np.diff(s)
    return AxisGrid(spec=spec, s=s, h=h, xi_min=xi_min, xi_int=xi_int,
                    xi_max=xi_max, dxi=dxi)


def build_grid(spec1: GridSpec, spec2: GridSpec | None = None) -> SpatialGrid:
    """Tensor grid; both directions share spec1 unless spec2 is given."""
    ax1 = build_axis(spec1)
    ax2 = ax1 if spec2 is None or spec2 == spec1 else build_axis(spec2)
    return SpatialGrid(axes=(ax1, ax2))


def strike_midway_check(axis: AxisGrid, strike: float, rtol: float = 1e-10) -> bool:
    """True iff the strike lies strictly between two nodes, exactly midway."""
    s = axis.s
    j = int(np.searchsorted(s, strike))
    if j <= 0 or j > axis.m:
        return False
    if not (s[j - 1] < strike < s[j]):
        return False
    return bool(abs(0.5 * (s[j - 1] + s[j]) - strike) <= rtol * strike)


def _m_for_nu(spec: GridSpec, nu: int) -> int:
    xi_min = math.asinh(-spec.s_left / spec.d)
    xi_int = (spec.s_right - spec.s_left) / spec.d
    xi_max = xi_int + math.asinh((spec.s_max - spec.s_right) / spec.d)
    dxi = (xi_int - 2.0 * xi_min) / nu
    return max(nu + 1, math.ceil((xi_max - xi_min) / dxi))


def nu_for_target_m(spec: GridSpec, target_m: int, odd: bool = True) -> int:
    """Cell count whose built grid has m closest to target_m.

    Not every m is attainable; ties prefer the smaller nu.  With odd=True
    only odd nu are considered so the strike stays midway between nodes.
    """
    step = 2 if odd else 1
    start = 1
    best_nu, best_err = start, abs(_m_for_nu(spec, start) - target_m)
    nu = start
    while True:
        nu += step
        m = _m_for_nu(spec, nu)
        err = abs(m - target_m)
        if err < best_err:
            best_nu, best_err = nu, err
        if m >= target_m + step or m > MAX_NODES:
            break
    return best_nu


def nu_for_interior_width(spec: GridSpec, width: float, odd: bool = True) -> int:
    """Cell count giving uniform-zone mesh width d*dxi closest to `width`."""
    xi_min = math.asinh(-spec.s_left / spec.d)
    xi_int = (spec.s_right - spec.s_left) / spec.d
    nu = spec.d * (xi_int - 2.0 * xi_min) / width
    if odd:
        k = max(0, round((nu - 1) / 2))
        lo, hi = 2 * k - 1, 2 * k + 1
        if lo < 1:
            return 1
        w = spec.d * (xi_int - 2.0 * xi_min)
        return lo if abs(w / lo - width) <= abs(w / hi - width) else hi
    return max(1, round(nu))


def dump_nodes_csv(grid: SpatialGrid) -> str:
    """Node listing `q,j,s` for inspection."""
    lines = ["q,j,s"]
    for q in (1, 2):
        for j, s in enumerate(grid.axis(q).s):
            lines.append(f"{q},{j},{s:.9g}")
    return "\n".join(lines) + "\n"

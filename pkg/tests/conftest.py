import numpy as np
import pytest

from merton2d.grid import AxisGrid, GridSpec
from merton2d.model import parameter_set
from merton2d.problem import discretize_preset_grid


@pytest.fixture(scope="session")
def set1():
    return parameter_set("set1")


@pytest.fixture(scope="session")
def problem_m8(set1):
    """Coarse Set 1 problem (m = 8) for transcription oracles."""
    params, option = set1
    return discretize_preset_grid(params, option, nu=5)


@pytest.fixture(scope="session")
def problem_m12(set1):
    params, option = set1
    return discretize_preset_grid(params, option, nu=8)


def fabricate_axis(s_nodes) -> AxisGrid:
    """AxisGrid wrapper around explicit node coordinates, for unit tests
    that need full control over mesh widths."""
    s = np.asarray(s_nodes, dtype=float)
    if s[0] != 0.0 or np.any(np.diff(s) <= 0):
        raise ValueError("nodes must start at 0 and increase")
    h = np.concatenate([[np.nan], np.diff(s)])
    spec = GridSpec(nu=1, d=1.0, s_left=0.4 * s[-1], s_right=0.6 * s[-1],
                    s_max=s[-1] + 1.0)
    return AxisGrid(spec=spec, s=s, h=h, xi_min=0.0, xi_int=1.0, xi_max=2.0,
                    dxi=1.0)

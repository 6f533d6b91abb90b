"""Model parameters, payoffs and jump-size densities for the two-asset
Merton jump-diffusion model.

Everything here is plain pointwise evaluation; the discretization modules
consume these objects but never mutate them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

__all__ = [
    "PayoffKind",
    "ModelParams",
    "OptionSpec",
    "PARAMETER_SETS",
    "parameter_set",
    "expected_relative_jump",
    "payoff",
    "lognormal_density",
    "normal_density_log",
]


class PayoffKind(str, Enum):
    PUT_ON_MIN = "put_on_min"
    PUT_ON_AVERAGE = "put_on_average"


@dataclass(frozen=True)
class ModelParams:
    """Two-asset Merton jump-diffusion parameters.

    r         risk-free rate (1/year)
    sigma1/2  diffusive volatilities (1/sqrt(year))
    rho       Brownian correlation
    lam       jump intensity of the Poisson arrival process (1/year)
    gamma1/2  means of the bivariate normal log-jump sizes
    delta1/2  standard deviations of the log-jump sizes
    rho_hat   correlation of the log-jump sizes
    """

    r: float
    sigma1: float
    sigma2: float
    rho: float
    lam: float
    gamma1: float
    gamma2: float
    rho_hat: float
    delta1: float
    delta2: float

    def __post_init__(self):
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("volatilities must be positive")
        if self.delta1 <= 0 or self.delta2 <= 0:
            raise ValueError("log-jump standard deviations must be positive")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")
        if not abs(self.rho_hat) < 1:
            raise ValueError("|rho_hat| must be < 1")
        if self.lam < 0:
            raise ValueError("jump intensity must be nonnegative")

    def sigma(self, q: int) -> float:
        return self.sigma1 if q == 1 else self.sigma2

    def gamma(self, q: int) -> float:
        return self.gamma1 if q == 1 else self.gamma2

    def delta(self, q: int) -> float:
        return self.delta1 if q == 1 else self.delta2


@dataclass(frozen=True)
class OptionSpec:
    """American option contract: strike, maturity and payoff type."""

    strike: float
    maturity: float
    payoff_kind: PayoffKind = PayoffKind.PUT_ON_MIN

    def __post_init__(self):
        if self.strike <= 0:
            raise ValueError("strike must be positive")
        if self.maturity <= 0:
            raise ValueError("maturity must be positive")

    def with_payoff(self, kind: PayoffKind) -> "OptionSpec":
        return replace(self, payoff_kind=kind)


# Named presets, embedded as constants so table-reproduction tests are
# hermetic.  Set 1 has a low expected number of jumps, Set 3 a large one.
PARAMETER_SETS: dict[str, tuple[ModelParams, OptionSpec]] = {
    "set1": (
        ModelParams(r=0.05, sigma1=0.12, sigma2=0.15, rho=0.30, lam=0.60,
                    gamma1=-0.10, gamma2=0.10, rho_hat=-0.20,
                    delta1=0.17, delta2=0.13),
        OptionSpec(strike=100.0, maturity=1.0),
    ),
    "set2": (
        ModelParams(r=0.05, sigma1=0.30, sigma2=0.30, rho=0.50, lam=2.0,
                    gamma1=-0.50, gamma2=0.30, rho_hat=-0.60,
                    delta1=0.40, delta2=0.10),
        OptionSpec(strike=40.0, maturity=0.5),
    ),
    "set3": (
        ModelParams(r=0.05, sigma1=0.20, sigma2=0.30, rho=0.70, lam=8.0,
                    gamma1=-0.05, gamma2=-0.20, rho_hat=0.50,
                    delta1=0.45, delta2=0.06),
        OptionSpec(strike=40.0, maturity=1.0),
    ),
}


def parameter_set(name: str,
                  payoff_kind: PayoffKind = PayoffKind.PUT_ON_MIN
                  ) -> tuple[ModelParams, OptionSpec]:
    """Look up a named preset, choosing the payoff variant to price."""
    key = name.strip().lower().replace(" ", "")
    if key not in PARAMETER_SETS:
        raise KeyError(f"unknown parameter set {name!r}; "
                       f"choose from {sorted(PARAMETER_SETS)}")
    params, option = PARAMETER_SETS[key]
    return params, option.with_payoff(payoff_kind)


def expected_relative_jump(params: ModelParams, q: int) -> float:
    """Expected relative jump size exp(gamma_q + delta_q^2 / 2) - 1."""
    if q not in (1, 2):
        raise ValueError("asset index must be 1 or 2")
    return math.exp(params.gamma(q) + 0.5 * params.delta(q) ** 2) - 1.0


def payoff(spec: OptionSpec, s1, s2):
    """Option payoff at spot prices (s1, s2); accepts scalars or arrays."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    if spec.payoff_kind is PayoffKind.PUT_ON_MIN:
        inner = np.minimum(s1, s2)
    else:
        inner = 0.5 * (s1 + s2)
    out = np.maximum(0.0, spec.strike - inner)
    return float(out) if out.ndim == 0 else out


def _gaussian_quadform(params: ModelParams, z1, z2):
    """Exponent of the bivariate normal: -(a^2 + b^2 - 2*rho_hat*a*b)/(2(1-rho_hat^2))."""
    a = (z1 - params.gamma1) / params.delta1
    b = (z2 - params.gamma2) / params.delta2
    return -(a * a + b * b - 2.0 * params.rho_hat * a * b) / (2.0 * (1.0 - params.rho_hat**2))


def lognormal_density(params: ModelParams, y1, y2):
    """Bivariate lognormal density of the jump amplitudes, f(y1, y2).

    Works in log space internally so extreme arguments only underflow to
    zero instead of overflowing.
    """
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.any(y1 <= 0) or np.any(y2 <= 0):
        raise ValueError("jump amplitudes must be positive")
    norm = 2.0 * math.pi * params.delta1 * params.delta2 * math.sqrt(1.0 - params.rho_hat**2)
    log_f = _gaussian_quadform(params, np.log(y1), np.log(y2)) \
        - np.log(y1) - np.log(y2) - math.log(norm)
    out = np.exp(log_f)
    return float(out) if out.ndim == 0 else out


def normal_density_log(params: ModelParams, eta1, eta2):
    """Density of the log-jump sizes: the bivariate normal with means
    gamma_q, standard deviations delta_q and correlation rho_hat.

    Equals lognormal_density(e^eta1, e^eta2) * e^(eta1 + eta2).
    """
    eta1 = np.asarray(eta1, dtype=float)
    eta2 = np.asarray(eta2, dtype=float)
    norm = 2.0 * math.pi * params.delta1 * params.delta2 * math.sqrt(1.0 - params.rho_hat**2)
    out = np.exp(_gaussian_quadform(params, eta1, eta2)) / norm
    return float(out) if out.ndim == 0 else out

"""
Finite-blocklength outage kernel.

Normal approximation of the block error probability of a b-bit packet sent
over m channel uses of an AWGN channel at linear SINR rho:

    eps = Q( (C(rho) - b/m) * ln 2 / sqrt(V(rho) / m) )

with C(rho) = log2(1 + rho) and V(rho) = (log2 e)^2 (1 - (1 + rho)^-2).

All functions are pure and work in float64.  ``log_outage_probability`` keeps
full relative precision far below the smallest representable double, which
matters when comparing outage values around 1e-5 and smaller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import erfc, log_ndtr

LOG2E = 1.0 / math.log(2.0)
DISPERSION_LIMIT = LOG2E**2


class DomainError(ValueError):
    """Argument outside the mathematical domain of a kernel."""


@dataclass(frozen=True)
class LinkBudget:
    """SINR, payload and blocklength of a single short-packet transmission."""

    sinr_linear: float
    info_bits: int
    blocklength: int

    def __post_init__(self):
        if not (math.isfinite(self.sinr_linear) and self.sinr_linear > 0):
            raise DomainError(f"sinr_linear must be finite and > 0, got {self.sinr_linear}")
        if int(self.info_bits) != self.info_bits or self.info_bits < 1:
            raise DomainError(f"info_bits must be a positive integer, got {self.info_bits}")
        if int(self.blocklength) != self.blocklength or self.blocklength < 1:
            raise DomainError(f"blocklength must be a positive integer, got {self.blocklength}")

    @property
    def rate(self) -> float:
        return self.info_bits / self.blocklength

    @property
    def capacity(self) -> float:
        return capacity(self.sinr_linear)

    @property
    def dispersion(self) -> float:
        return dispersion(self.sinr_linear)


def _check_finite(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"expected a finite argument, got {x}")
    return x


def _check_sinr(sinr_linear: float) -> float:
    rho = float(sinr_linear)
    if not math.isfinite(rho) or rho <= 0:
        raise DomainError(f"SINR must be finite and > 0, got {rho}")
    return rho


def gaussian_q(x: float) -> float:
    """Tail probability of the standard normal, Q(x) = P(Z > x)."""
    x = _check_finite(x)
    return float(0.5 * erfc(x / math.sqrt(2.0)))


def log_gaussian_q(x: float) -> float:
    """Natural log of Q(x); finite for every finite x."""
    x = _check_finite(x)
    return float(log_ndtr(-x))


def capacity(sinr_linear: float) -> float:
    """Shannon capacity log2(1 + rho) in bits per channel use."""
    rho = _check_sinr(sinr_linear)
    return math.log1p(rho) * LOG2E


def dispersion(sinr_linear: float) -> float:
    """AWGN channel dispersion in squared bits per channel use."""
    rho = _check_sinr(sinr_linear)
    # 1 - (1+rho)^-2 without cancellation at small rho
    return DISPERSION_LIMIT * -math.expm1(-2.0 * math.log1p(rho))


def q_argument(budget: LinkBudget) -> float:
    """Argument of the Q-function for ``budget``; +/-inf when V underflows to 0."""
    c = budget.capacity
    v = budget.dispersion
    gap = c - budget.rate
    if v == 0.0:
        if gap == 0.0:
            return 0.0
        return math.copysign(math.inf, gap)
    return gap * math.log(2.0) / math.sqrt(v / budget.blocklength)


def outage_probability(budget: LinkBudget) -> float:
    """Block outage probability of ``budget`` under the normal approximation.

    When the SINR is so small that the dispersion rounds to zero the limit is
    used: 1 if the rate exceeds capacity, 0 if it is below, 0.5 at equality.
    """
    arg = q_argument(budget)
    if math.isinf(arg):
        return 0.0 if arg > 0 else 1.0
    return gaussian_q(arg)


def log_outage_probability(budget: LinkBudget) -> float:
    """Natural log of :func:`outage_probability` without underflow."""
    arg = q_argument(budget)
    if math.isinf(arg):
        return -math.inf if arg > 0 else 0.0
    return log_gaussian_q(arg)


def outage_probability_values(sinr_linear, info_bits, blocklength):
    """Vectorised :func:`outage_probability` over numpy arrays.

    Inputs broadcast together; every SINR must be > 0.  Used by the
    environment and by bulk property checks.
    """
    import numpy as np

    rho = np.asarray(sinr_linear, dtype=np.float64)
    b = np.asarray(info_bits, dtype=np.float64)
    m = np.asarray(blocklength, dtype=np.float64)
    if np.any(~np.isfinite(rho)) or np.any(rho <= 0):
        raise DomainError("SINR must be finite and > 0")
    c = np.log1p(rho) * LOG2E
    v = DISPERSION_LIMIT * -np.expm1(-2.0 * np.log1p(rho))
    gap = c - b / m
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = gap * math.log(2.0) / np.sqrt(v / m)
    arg = np.where(v == 0.0, np.where(gap > 0, np.inf, np.where(gap < 0, -np.inf, 0.0)), arg)
    return 0.5 * erfc(arg / math.sqrt(2.0))

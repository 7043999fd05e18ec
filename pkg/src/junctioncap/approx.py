"""Closed-form queueing approximations and quality thresholds.

The chain model lives in an exponential (M/M) world; the functions here supply
the M/M/1/inf reference queue length, the variation-coefficient correction
towards GI/GI behaviour, and the waiting-train thresholds used to judge
whether a junction layout offers acceptable quality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ApproxError(ValueError):
    pass


@dataclass(frozen=True)
class CorrectionParams:
    """Inputs of the GI/GI correction factor.

    One service channel per route queue, so ``s`` defaults to 1.
    """

    rho: float
    v_a: float = 0.8
    v_b: float = 0.3
    s: int = 1

    def __post_init__(self):
        if self.rho <= 0:
            raise ApproxError("occupancy must be positive")
        if self.s < 1:
            raise ApproxError("need at least one service channel")
        if self.v_a < 0 or self.v_b < 0:
            raise ApproxError("variation coefficients must be non-negative")


def mm1_inf_queue_length(rho: float) -> float:
    """Expected queue length of an M/M/1/inf system, rho^2 / (1 - rho)."""
    if not 0 <= rho < 1:
        raise ApproxError(f"queue is unstable for occupancy {rho}")
    return rho * rho / (1.0 - rho)


def gi_correction_factor(params: CorrectionParams) -> float:
    """Correction gamma = 2 / (c * v_b^2 + v_a^2).

    With c = (rho/s)^(1 - v_a^2) * (1 + v_a^2) - v_a^2.  The factor is 1 in
    the exponential case v_a = v_b = 1 and undefined for fully deterministic
    processes (zero denominator).
    """
    va2 = params.v_a ** 2
    vb2 = params.v_b ** 2
    c = (params.rho / params.s) ** (1.0 - va2) * (1.0 + va2) - va2
    denom = c * vb2 + va2
    if denom <= 0:
        raise ApproxError(
            f"correction undefined: c*v_b^2 + v_a^2 = {denom:.3g} <= 0")
    return 2.0 / denom


def corrected_queue_length(e_mm: float, gamma: float) -> float:
    """Scale an M/M queue length to the GI/GI approximation: e_mm / gamma."""
    if gamma <= 0:
        raise ApproxError("gamma must be positive")
    return e_mm / gamma


def waiting_threshold(p_pt: float) -> float:
    """Maximum tolerable expected number of waiting trains.

    Decreases with the share of passenger trains ``p_pt``.
    """
    if not 0 <= p_pt <= 1:
        raise ApproxError("passenger ratio must lie in [0, 1]")
    return 0.479 * math.exp(-1.3 * p_pt)


def model_threshold(l_star: float, gamma: float) -> float:
    """Threshold in the chain's M/M world: gamma * l_star.

    Comparing the chain's queue length against this equals comparing the
    GI/GI-corrected queue length against ``l_star``.
    """
    if gamma <= 0:
        raise ApproxError("gamma must be positive")
    return gamma * l_star

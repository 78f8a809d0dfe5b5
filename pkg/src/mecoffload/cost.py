"""Delay-dependent cost families, weighted total cost, and agent rewards."""
from __future__ import annotations

import math
from dataclasses import dataclass

FAMILIES = ("strict", "exponential", "power", "quadratic", "tolerant_power", "logarithmic", "linear")


@dataclass(frozen=True)
class DelayCostSpec:
    """C(tau), always clipped to [0, c_max].

    ``power`` (alias ``quadratic``) is the delay-sensitive tau**c2 with
    c2 > 1; ``tolerant_power`` is tau**c3 with c3 <= 1.  The logarithm is
    natural.
    """

    family: str = "linear"
    tau_th: float = 1.0
    c1: float = 1.0
    c2: float = 2.0
    c3: float = 0.5
    c4: float = 1.0
    c_max: float = 100.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown cost family {self.family!r}; expected one of {FAMILIES}")
        if not self.c_max > 0:
            raise ValueError("c_max must be positive")
        if self.family == "strict" and not self.tau_th > 0:
            raise ValueError("strict family needs tau_th > 0")
        if self.family == "exponential" and not self.c1 > 0:
            raise ValueError("exponential family needs c1 > 0")
        if self.family in ("power", "quadratic") and not self.c2 > 1:
            raise ValueError("power family needs c2 > 1")
        if self.family == "tolerant_power" and not 0 < self.c3 <= 1:
            raise ValueError("tolerant_power family needs 0 < c3 <= 1")
        if self.family == "logarithmic" and not self.c4 > 0:
            raise ValueError("logarithmic family needs c4 > 0")


def delay_cost(spec: DelayCostSpec, tau) -> float:
    if tau < 0:
        raise ValueError(f"delay must be non-negative, got {tau}")
    f = spec.family
    if f == "strict":
        return 0.0 if tau <= spec.tau_th else spec.c_max
    if f == "exponential":
        # exp overflows long before the cap matters
        x = spec.c1 * tau
        raw = math.expm1(x) if x < 700 else math.inf
    elif f in ("power", "quadratic"):
        raw = tau ** spec.c2
    elif f == "tolerant_power":
        raw = tau ** spec.c3
    elif f == "logarithmic":
        raw = math.log1p(spec.c4 * tau)
    else:
        raw = tau
    return min(raw, spec.c_max)


@dataclass(frozen=True)
class CostWeights:
    w_delay: float = 1.0
    w_energy: float = 0.0

    def __post_init__(self):
        if self.w_delay < 0 or self.w_energy < 0:
            raise ValueError("cost weights must be non-negative")
        if not (math.isfinite(self.w_delay) and math.isfinite(self.w_energy)):
            raise ValueError("cost weights must be finite")
        if self.w_delay == 0 and self.w_energy == 0:
            raise ValueError("cost weights cannot both be zero")


def total_cost(weights: CostWeights, c_delay, c_energy) -> float:
    return weights.w_delay * c_delay + weights.w_energy * c_energy


def reward(outcome, mode) -> float:
    """Negative delay, negative cost, or negative max of the two halves."""
    if mode == "delay":
        return -outcome.delay
    if mode == "cost":
        return -outcome.cost
    if mode == "partial":
        return -max(outcome.tau_local, outcome.tau_edge)
    raise ValueError(f"unknown reward mode {mode!r}")

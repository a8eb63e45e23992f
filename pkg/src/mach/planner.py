"""Capacity planning: distinguishability bounds and the memory/compute cost model."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class CostReport:
    parameters: int
    inference_multiplications: int
    model_bytes: int

    def as_dict(self) -> dict:
        return asdict(self)


def _check(b, r=1, k=2):
    if b < 2:
        raise ConfigError(f"B must be >= 2, got {b}")
    if r < 1:
        raise ConfigError(f"R must be >= 1, got {r}")
    if k < 2:
        raise ConfigError(f"K must be >= 2, got {k}")


def pair_indistinguishable_prob(b: int, r: int) -> float:
    """Upper bound (1/B)^R on two fixed classes sharing a bucket in every repetition."""
    _check(b, r)
    return 1.0 / b**r


def any_pair_bound(k: int, b: int, r: int) -> float:
    """Union bound min(1, K^2 / B^R) on some pair being indistinguishable."""
    _check(b, r, k)
    # exact integer ratio, so bounds like 10^4 / 10^6 come out as exactly 0.01
    return min(1.0, k * k / b**r)


def required_r(k: int, b: int, delta: float) -> int:
    """Smallest integer R >= 2 ln(K/sqrt(delta)) / ln B; any_pair_bound(k, b, R) <= delta."""
    _check(b, 1, k)
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    r = max(1, math.ceil(2.0 * math.log(k / math.sqrt(delta)) / math.log(b)))
    # the log ratio can land a hair above an exact integer
    while r > 1 and k * k / b ** (r - 1) <= delta:
        r -= 1
    while k * k / b**r > delta:
        r += 1
    return r


def cost_model(k: int, b: int, r: int, d: int, hidden_units: int = 0) -> CostReport:
    """Parameter count and inference multiplications (R*B*d + K*R for linear models)."""
    if min(k, b, r, d) < 1 or hidden_units < 0:
        raise ConfigError("k, b, r, d must be positive and hidden_units non-negative")
    if hidden_units == 0:
        per_rep = d * b + b
        mults = r * b * d
    else:
        h = hidden_units
        per_rep = d * h + h + h * b + b
        mults = r * (d * h + h * b)
    params = r * per_rep
    return CostReport(params, mults + k * r, 4 * params)


def vanilla_cost(k: int, d: int, hidden_units: int = 0) -> CostReport:
    """Cost of the plain K-way classifier with the same architecture."""
    report = cost_model(k, k, 1, d, hidden_units)
    # a direct classifier needs no hash lookups
    return CostReport(report.parameters, report.inference_multiplications - k, report.model_bytes)


def reduction_ratio(k: int, b: int, r: int) -> float:
    """Last-layer size reduction K / (B*R)."""
    _check(b, r, k)
    return k / (b * r)


def plan(k: int, b: int, delta: float, d: int = 1, hidden_units: int = 0) -> dict:
    """One planning record for a given K, B and failure probability."""
    r = required_r(k, b, delta)
    cost = cost_model(k, b, r, d, hidden_units)
    vanilla = vanilla_cost(k, d, hidden_units)
    return {
        "K": k,
        "B": b,
        "delta": delta,
        "R": r,
        "any_pair_bound": any_pair_bound(k, b, r),
        "pair_bound": pair_indistinguishable_prob(b, r),
        "d": d,
        "hidden_units": hidden_units,
        **cost.as_dict(),
        "vanilla_parameters": vanilla.parameters,
        "last_layer_reduction": reduction_ratio(k, b, r),
        "parameter_reduction": vanilla.parameters / cost.parameters,
    }

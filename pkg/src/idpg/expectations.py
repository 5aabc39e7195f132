"""Closed-form expected edge counts and regime formulas.

These are the analytic oracles the samplers are checked against. All edge
formulas assume a product intensity, where the cross-pair edge probability
is q = mu~_G . mu~_R and (because an individual's two coordinates are
independent) the self-pair probability is the same q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .latent import MomentSummary

__all__ = [
    "PerennialDistinct",
    "PerennialWithLoops",
    "Ephemeral",
    "Lifetime",
    "AsymmetricEphemeral",
    "EdgeRule",
    "expected_edges",
    "overlap_probability",
    "edge_ratio",
]


@dataclass(frozen=True)
class PerennialDistinct:
    pass


@dataclass(frozen=True)
class PerennialWithLoops:
    pass


@dataclass(frozen=True)
class Ephemeral:
    pass


@dataclass(frozen=True)
class Lifetime:
    eta: float
    window: float
    include_self_pairs: bool = True

    def __post_init__(self):
        if self.eta <= 0 or self.window <= 0:
            raise ValueError("eta and window must be positive")


@dataclass(frozen=True)
class AsymmetricEphemeral:
    pass


EdgeRule = Union[PerennialDistinct, PerennialWithLoops, Ephemeral, Lifetime,
                 AsymmetricEphemeral]

_SERIES_CUTOFF = 1e-4


def _overlap_closed(u: float) -> float:
    # u + expm1(-u) subtracts two nearby numbers exactly (Sterbenz range),
    # so the only rounding left is expm1's own half-ulp
    return 2.0 * (u + math.expm1(-u)) / (u * u)


def _overlap_series(u: float) -> float:
    # p = 2 * sum_{k>=2} (-u)^{k-2} / k!, alternating and fast-converging
    total = 0.0
    k = 2
    fact = 2.0
    power = 1.0
    while True:
        contrib = 2.0 * power / fact
        total += contrib if k % 2 == 0 else -contrib
        if contrib < 1e-18:
            return total
        k += 1
        fact *= k
        power *= u


def overlap_probability(eta: float, window: float) -> float:
    """Probability that two independent lifetimes overlap in the window.

    Births are uniform on [0, W], lifetimes exponential with mean eta;
    with u = W / eta the probability is (2/u^2)(u - 1 + e^{-u}).
    """
    if eta <= 0 or window <= 0:
        raise ValueError("eta and window must be positive")
    u = window / eta
    if u < _SERIES_CUTOFF:
        return _overlap_series(u)
    return _overlap_closed(u)


def expected_edges(summary: MomentSummary, rule: EdgeRule) -> float:
    """Expected edge count under a realization rule, from a product-model summary."""
    if summary.kind != "product":
        raise ValueError(
            "closed-form edge counts need a product model; use the guild-level "
            "expectations for mixtures"
        )
    lam = summary.lam
    q = summary.mean_affinity
    if isinstance(rule, PerennialDistinct):
        return lam * lam * q
    if isinstance(rule, PerennialWithLoops):
        return (lam * lam + lam) * q
    if isinstance(rule, Ephemeral):
        return 2.0 * lam * q
    if isinstance(rule, AsymmetricEphemeral):
        return 0.5 * lam * q
    if isinstance(rule, Lifetime):
        p = overlap_probability(rule.eta, rule.window)
        # cross pairs overlap with probability p; a self-pair overlaps always
        if rule.include_self_pairs:
            return (lam * lam * p + lam) * q
        return lam * lam * p * q
    raise TypeError(f"not an edge rule: {rule!r}")


def edge_ratio(lam: float, convention: str = "distinct") -> float:
    """Perennial-to-ephemeral expected edge ratio: lam/2, or (lam+1)/2 with self-loops."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    if convention == "distinct":
        return lam / 2.0
    if convention == "with_loops":
        return (lam + 1.0) / 2.0
    raise ValueError("convention must be 'distinct' or 'with_loops'")

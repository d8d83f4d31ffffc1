"""Minimax lower-bound rates for sparse factor matrix completion.

The general bound is

    C_D * min{ A_max^2 (Delta(k, n2) + 1),  gamma_D^2 mu_D^2 (n1 r + k) / m }

with ``Delta(k, n2) = min(1, k / n2)``. All values are rates: the absolute
constants are never pinned down, so every report carries ``up_to_constants``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from .channels import (GaussianChannel, LaplaceChannel, NoiseChannel, OneBitChannel,
                       PoissonChannel, compute_c_f, compute_c_f_prime)
from .core import ModelClassParams

BOUNDEDNESS = "boundedness"
PARAMETRIC = "parametric"

# fraction of the feasibility limit used for default gamma constants
GAMMA_SAFETY = 0.9


def gamma_limit(alpha: float) -> float:
    """Largest admissible gamma_a / gamma_d for KL budget ``alpha``."""
    return math.sqrt(alpha * math.log(2.0)) / 2.0


def poisson_gamma_limit(alpha: float) -> float:
    return gamma_limit(alpha) / math.sqrt(2.0)


@dataclass(frozen=True)
class BoundConstants:
    """Absolute constants of the lower bound.

    ``gamma_a`` and ``gamma_d`` scale the sparse-factor and dictionary packing
    amplitudes; ``gamma_p`` is the Poisson counterpart, whose admissible range
    is smaller by ``sqrt(2)``. Unset gammas default to 0.9 of their limit.
    """

    c_d: float = 1.0
    alpha: float = 1.0 / 16.0
    gamma_a: Optional[float] = None
    gamma_d: Optional[float] = None
    gamma_p: Optional[float] = None

    def __post_init__(self):
        if not self.c_d > 0:
            raise ValueError("c_d must be positive")
        if not 0 < self.alpha < 1.0 / 8.0:
            raise ValueError("alpha must lie in (0, 1/8)")
        lim = GAMMA_SAFETY * gamma_limit(self.alpha)
        plim = GAMMA_SAFETY * poisson_gamma_limit(self.alpha)
        for name, default in (("gamma_a", lim), ("gamma_d", lim), ("gamma_p", plim)):
            value = getattr(self, name)
            if value is None:
                object.__setattr__(self, name, default)
            elif not value > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def unit(cls, alpha: float = 1.0 / 16.0) -> "BoundConstants":
        """All constants equal to one (useful for rate comparisons)."""
        return cls(c_d=1.0, alpha=alpha, gamma_a=1.0, gamma_d=1.0, gamma_p=1.0)

    @property
    def gamma_D(self) -> float:
        return min(self.gamma_a, self.gamma_d)

    @property
    def feasible(self) -> bool:
        """Whether the gammas satisfy the strict KL-budget conditions."""
        lim = gamma_limit(self.alpha)
        return (self.gamma_a < lim and self.gamma_d < lim
                and self.gamma_p < poisson_gamma_limit(self.alpha))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BoundReport:
    value: float
    boundedness_term: float
    parametric_term: float
    active_regime: str
    delta: float
    channel_tag: str
    c_d: float = 1.0
    up_to_constants: bool = True
    notes: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["notes"] = list(self.notes)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def delta_factor(k: int, n2: int) -> float:
    if k < 1 or n2 < 1:
        raise ValueError("k and n2 must be positive")
    return min(1.0, k / n2)


def _check_m(params: ModelClassParams, m: int) -> None:
    if int(m) != m or not 1 <= m <= params.size:
        raise ValueError(f"m={m} must be an integer in [1, n1*n2={params.size}]")


def _report(boundedness: float, parametric: float, delta: float, tag: str,
            c_d: float, notes=()) -> BoundReport:
    # ties go to the parametric regime
    regime = PARAMETRIC if parametric <= boundedness else BOUNDEDNESS
    return BoundReport(value=c_d * min(boundedness, parametric),
                       boundedness_term=boundedness, parametric_term=parametric,
                       active_regime=regime, delta=delta, channel_tag=tag,
                       c_d=c_d, notes=tuple(notes))


def general_lower_bound(params: ModelClassParams, mu_d: float, m: int,
                        consts: BoundConstants = BoundConstants(),
                        channel_tag: str = "general") -> BoundReport:
    _check_m(params, m)
    if not mu_d > 0:
        raise ValueError("mu_d must be positive")
    delta = delta_factor(params.k, params.n2)
    boundedness = params.a_max ** 2 * (delta + 1.0)
    parametric = consts.gamma_D ** 2 * mu_d ** 2 * (params.n1 * params.r + params.k) / m
    return _report(boundedness, parametric, delta, channel_tag, consts.c_d)


def large_sample_rate(params: ModelClassParams, mu_d: float, m: int) -> float:
    if m < 1:
        raise ValueError("m must be positive")
    delta = delta_factor(params.k, params.n2)
    lead = min(mu_d, params.a_max) ** 2
    return lead * (params.n1 * params.r * delta + params.k) / m


def small_sample_rate(params: ModelClassParams) -> float:
    return delta_factor(params.k, params.n2) * params.a_max ** 2


def poisson_lower_bound(params: ModelClassParams, x_min: float, m: int,
                        consts: BoundConstants = BoundConstants()) -> BoundReport:
    """Poisson bound: no ``Delta + 1`` factor and ``k - n2`` sparse degrees of freedom."""
    _check_m(params, m)
    if params.k < params.n2:
        raise ValueError(
            f"Poisson class is infeasible for k={params.k} < n2={params.n2}: "
            "every column of A needs a nonzero")
    boundedness = params.a_max ** 2
    dof = params.n1 * params.r + params.k - params.n2
    parametric = consts.gamma_p ** 2 * x_min * dof / m
    return _report(boundedness, parametric, delta_factor(params.k, params.n2),
                   PoissonChannel.tag, consts.c_d)


def corollary_bound(channel: NoiseChannel, params: ModelClassParams, m: int,
                    consts: BoundConstants = BoundConstants()) -> BoundReport:
    """Lower bound specialised to the channel's noise model."""
    if isinstance(channel, PoissonChannel):
        return poisson_lower_bound(params, channel.x_min, m, consts)
    return general_lower_bound(params, channel.mu_d(params), m, consts, channel.tag)


def upper_bound_rate(channel: NoiseChannel, params: ModelClassParams, m: int) -> float:
    """Known achievable rate for a penalized MLE, leading constant set to one.

    Advisory overlay only; the true constants are unspecified. ``X_max`` is
    taken as the hard cap ``r * a_max``.
    """
    if m < 1:
        raise ValueError("m must be positive")
    base = (params.n1 * params.r + params.k) / m * math.log(max(params.n1, params.n2))
    x_max = params.x_max
    if isinstance(channel, GaussianChannel):
        return min(channel.sigma, params.a_max) ** 2 * base
    if isinstance(channel, LaplaceChannel):
        # lower-bound rate tau^-2 inflated by the tau * X_max gap factor
        return x_max / channel.tau * base
    if isinstance(channel, PoissonChannel):
        return (x_max + x_max / channel.x_min * x_max ** 2) * base
    if isinstance(channel, OneBitChannel):
        c = compute_c_f(channel.link, x_max)
        c_prime = compute_c_f_prime(channel.link, x_max)
        return (c ** 2 / c_prime) * (1.0 / c ** 2 + x_max ** 2) * base
    raise TypeError(f"unsupported channel {type(channel).__name__}")


def channel_rates(channel: NoiseChannel, params: ModelClassParams, m: int) -> tuple[float, float]:
    """``(large_sample_rate, small_sample_rate)`` for a channel, constants set to one.

    The Poisson channel uses ``x_min`` in place of ``mu_d**2`` and ``k - n2``
    sparse degrees of freedom, matching :func:`poisson_lower_bound`.
    """
    if isinstance(channel, PoissonChannel):
        if m < 1:
            raise ValueError("m must be positive")
        dof = params.n1 * params.r + params.k - params.n2
        return min(channel.x_min, params.a_max ** 2) * dof / m, params.a_max ** 2
    return large_sample_rate(params, channel.mu_d(params), m), small_sample_rate(params)

"""Observation channels: sampling, likelihoods and closed-form KL divergences.

KL argument order is fixed throughout: ``kl(x, y) = E_x[log p_x(Y) / p_y(Y)]``,
i.e. the divergence of ``P_y`` from ``P_x``. KL is asymmetric, so swapping the
arguments changes the value for the Poisson and one-bit channels.

Each channel except Poisson satisfies the quadratic condition
``kl(x, y) <= (x - y)**2 / (2 * mu_d**2)`` on its domain, and ``mu_d`` is the
coefficient that enters the lower bound. The Poisson bound works with
``x_min`` directly instead, so its ``mu_d`` raises :class:`NoQuadraticCoefficient`.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .core import ModelClassParams

DEFAULT_GRID = 10001


class DomainError(ValueError):
    """A parameter lies outside the channel's valid domain."""


class InvalidLinkError(ValueError):
    """The link CDF reaches 0 or 1 on the requested interval."""


class NoQuadraticCoefficient(Exception):
    """Raised by the Poisson channel: use the x_min bound path instead of mu_d."""


# -- links -------------------------------------------------------------------

@dataclass(frozen=True)
class Link:
    """CDF/pdf pair of the noise in the one-bit model ``Y = 1{X - W >= 0}``."""

    name: str
    scale: float = 1.0

    def __post_init__(self):
        if self.name not in ("logistic", "probit"):
            raise ValueError(f"unknown link {self.name!r}")
        if not self.scale > 0:
            raise ValueError("link scale must be positive")

    def cdf(self, t):
        z = np.asarray(t, dtype=float) / self.scale
        if self.name == "logistic":
            return special.expit(z)
        return special.ndtr(z)

    def logcdf(self, t):
        z = np.asarray(t, dtype=float) / self.scale
        if self.name == "logistic":
            return special.log_expit(z)
        return special.log_ndtr(z)

    def logsf(self, t):
        """``log(1 - F(t))``."""
        z = np.asarray(t, dtype=float) / self.scale
        if self.name == "logistic":
            return special.log_expit(-z)
        return special.log_ndtr(-z)

    def pdf(self, t):
        z = np.asarray(t, dtype=float) / self.scale
        if self.name == "logistic":
            p = special.expit(z)
            return p * (1.0 - p) / self.scale
        return np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * self.scale)

    def to_spec(self) -> dict:
        return {"link": self.name, "scale": self.scale}


def logistic(scale: float = 1.0) -> Link:
    return Link("logistic", scale)


def probit(scale: float = 1.0) -> Link:
    return Link("probit", scale)


# -- scalar KL divergences ---------------------------------------------------

def kl_gaussian(x, y, sigma: float):
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (x - y) ** 2 / (2.0 * sigma ** 2)


def kl_laplace(x, y, tau: float):
    """KL between Laplace laws with rate ``tau`` centred at ``x`` and ``y``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    t = tau * np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    # t - (1 - e^-t) == t + expm1(-t), stable near 0
    return t + np.expm1(-t)


def kl_poisson(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("Poisson rates must be positive")
    return special.xlogy(x, x / y) - x + y


def kl_onebit(x, y, link: Link):
    """Bernoulli KL between success probabilities ``F(x)`` and ``F(y)``."""
    lp, lq = link.logcdf(x), link.logcdf(y)
    lp1, lq1 = link.logsf(x), link.logsf(y)
    for arr in (lp, lq, lp1, lq1):
        if np.any(~np.isfinite(arr)) or np.any(arr >= 0.0):
            raise DomainError("link CDF reaches 0 or 1; KL is undefined")
    p, p1 = np.exp(lp), np.exp(lp1)
    out = p * (lp - lq) + p1 * (lp1 - lq1)
    # rounding can leave tiny negatives when F(x) == F(y)
    return np.maximum(out, 0.0)


# -- link steepness constants ------------------------------------------------

def _link_grid(link: Link, half_width: float, grid: int):
    if half_width < 0:
        raise ValueError("half_width must be nonnegative")
    if grid < 2:
        raise ValueError("grid needs at least two points")
    t = np.array([0.0]) if half_width == 0 else np.linspace(-half_width, half_width, grid)
    lc, ls = link.logcdf(t), link.logsf(t)
    log_var = lc + ls  # log F(1-F)
    # F or 1 - F rounding to 1 means the other side is lost to underflow
    if np.any(~np.isfinite(log_var)) or np.any(lc >= 0.0) or np.any(ls >= 0.0):
        raise InvalidLinkError(
            f"{link.name} link saturates on [-{half_width}, {half_width}]")
    return t, log_var


def compute_c_f(link: Link, half_width: float, grid: int = DEFAULT_GRID) -> float:
    """``sqrt(sup 1/(F(1-F))) * sqrt(sup f^2)`` over ``|t| <= half_width``.

    Both suprema are taken over a uniform grid that includes the endpoints.
    """
    t, log_var = _link_grid(link, half_width, grid)
    inv_var_sup = float(np.exp(np.max(-log_var)))
    f_sup = float(np.max(link.pdf(t)))
    return math.sqrt(inv_var_sup) * f_sup


def compute_c_f_prime(link: Link, half_width: float, grid: int = DEFAULT_GRID) -> float:
    """``inf f^2 / (F(1-F))`` over ``|t| <= half_width`` on a uniform grid."""
    t, log_var = _link_grid(link, half_width, grid)
    f = link.pdf(t)
    return float(np.min(f * f * np.exp(-log_var)))


# -- channels ----------------------------------------------------------------

class NoiseChannel(ABC):
    """Scalar observation law ``p_x`` parametrized by a matrix entry ``x``."""

    tag: str = ""

    @property
    @abstractmethod
    def domain(self) -> tuple[float, float]:
        """Closed interval of valid ``x`` (infinite ends allowed)."""

    @abstractmethod
    def sample(self, x, rng: np.random.Generator):
        ...

    @abstractmethod
    def log_likelihood(self, y, x):
        ...

    @abstractmethod
    def kl(self, x, y):
        ...

    @abstractmethod
    def nll_grad(self, y, x):
        """Derivative in ``x`` of ``-log_likelihood(y, x)``."""

    @abstractmethod
    def mu_d(self, params: Optional[ModelClassParams] = None) -> float:
        ...

    @abstractmethod
    def to_spec(self) -> dict:
        ...

    def nll(self, y, x):
        return -self.log_likelihood(y, x)

    def check_domain(self, x) -> None:
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if x.size and (np.min(x) < lo or np.max(x) > hi):
            raise DomainError(
                f"{self.tag} channel needs x in [{lo}, {hi}], "
                f"got range [{np.min(x):g}, {np.max(x):g}]")


@dataclass(frozen=True)
class GaussianChannel(NoiseChannel):
    """``Y = x + sigma * Z``.

    ``sigma_min`` only affects bound reporting: with heteroscedastic noise whose
    variances are all at least ``sigma_min**2`` the bound holds with ``sigma_min``.
    """

    sigma: float
    sigma_min: Optional[float] = None
    tag = "gaussian"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.sigma_min is not None and not 0 < self.sigma_min <= self.sigma:
            raise ValueError("sigma_min must satisfy 0 < sigma_min <= sigma")

    @property
    def domain(self):
        return (-math.inf, math.inf)

    def sample(self, x, rng):
        x = np.asarray(x, dtype=float)
        return x + self.sigma * rng.standard_normal(x.shape)

    def log_likelihood(self, y, x):
        r = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
        return -0.5 * (r / self.sigma) ** 2 - math.log(self.sigma * math.sqrt(2 * math.pi))

    def kl(self, x, y):
        return kl_gaussian(x, y, self.sigma)

    def nll_grad(self, y, x):
        return (np.asarray(x, dtype=float) - np.asarray(y, dtype=float)) / self.sigma ** 2

    def mu_d(self, params=None):
        return self.sigma if self.sigma_min is None else self.sigma_min

    def to_spec(self):
        spec = {"type": self.tag, "sigma": self.sigma}
        if self.sigma_min is not None:
            spec["sigma_min"] = self.sigma_min
        return spec


@dataclass(frozen=True)
class LaplaceChannel(NoiseChannel):
    """``Y = x + W`` with density ``(tau/2) exp(-tau |w|)`` (variance ``2/tau**2``)."""

    tau: float
    tag = "laplace"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def domain(self):
        return (-math.inf, math.inf)

    def sample(self, x, rng):
        x = np.asarray(x, dtype=float)
        return x + rng.laplace(0.0, 1.0 / self.tau, size=x.shape)

    def log_likelihood(self, y, x):
        r = np.abs(np.asarray(y, dtype=float) - np.asarray(x, dtype=float))
        return math.log(self.tau / 2.0) - self.tau * r

    def kl(self, x, y):
        return kl_laplace(x, y, self.tau)

    def nll_grad(self, y, x):
        # subgradient, 0 at ties
        return self.tau * np.sign(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))

    def mu_d(self, params=None):
        return 1.0 / self.tau

    def to_spec(self):
        return {"type": self.tag, "tau": self.tau}


@dataclass(frozen=True)
class PoissonChannel(NoiseChannel):
    """Counts ``Y ~ Poisson(x)``.

    With ``strict=True`` rates below ``x_min`` are rejected; otherwise any
    positive rate is accepted.
    """

    x_min: float
    strict: bool = False
    tag = "poisson"

    def __post_init__(self):
        if not self.x_min > 0:
            raise ValueError("x_min must be positive")

    @property
    def domain(self):
        return (self.x_min if self.strict else math.ulp(0.0), math.inf)

    def sample(self, x, rng):
        x = np.asarray(x, dtype=float)
        self.check_domain(x)
        return rng.poisson(x).astype(float)

    def log_likelihood(self, y, x):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        return special.xlogy(y, x) - x - special.gammaln(y + 1.0)

    def kl(self, x, y):
        return kl_poisson(x, y)

    def nll_grad(self, y, x):
        x = np.asarray(x, dtype=float)
        return 1.0 - np.asarray(y, dtype=float) / x

    def mu_d(self, params=None):
        raise NoQuadraticCoefficient(
            "Poisson channel has no mu_d; its bound uses x_min and k - n2 directly")

    def to_spec(self):
        return {"type": self.tag, "x_min": self.x_min, "strict": self.strict}


@dataclass(frozen=True)
class OneBitChannel(NoiseChannel):
    """Bits ``Y = 1{x - W >= 0}``, so ``P(Y = 1) = F(x)``."""

    link: Link
    domain_half_width: float

    tag = "onebit"

    def __post_init__(self):
        if not self.domain_half_width > 0:
            raise ValueError("domain_half_width must be positive")
        _link_grid(self.link, self.domain_half_width, 3)

    @property
    def domain(self):
        return (-self.domain_half_width, self.domain_half_width)

    def sample(self, x, rng):
        x = np.asarray(x, dtype=float)
        return (rng.random(x.shape) < self.link.cdf(x)).astype(float)

    def log_likelihood(self, y, x):
        y = np.asarray(y, dtype=float)
        return y * self.link.logcdf(x) + (1.0 - y) * self.link.logsf(x)

    def kl(self, x, y):
        return kl_onebit(x, y, self.link)

    def nll_grad(self, y, x):
        y = np.asarray(y, dtype=float)
        p = self.link.cdf(x)
        return -(y - p) * self.link.pdf(x) / (p * (1.0 - p))

    def mu_d(self, params=None):
        hw = self.domain_half_width if params is None else params.x_max
        return 1.0 / compute_c_f(self.link, hw)

    def to_spec(self):
        return {"type": self.tag, **self.link.to_spec(),
                "domain_half_width": self.domain_half_width}


def mu_d(channel: NoiseChannel, context: Optional[ModelClassParams] = None) -> float:
    return channel.mu_d(context)


def sample(channel: NoiseChannel, x, rng: np.random.Generator):
    channel.check_domain(x)
    return channel.sample(x, rng)


def channel_from_spec(spec: dict, params: Optional[ModelClassParams] = None) -> NoiseChannel:
    """Build a channel from a ``{type, ...parameters}`` record.

    For one-bit channels the domain half width defaults to ``r * a_max``; for
    Poisson channels ``x_min`` defaults to the model class value.
    """
    spec = dict(spec)
    kind = spec.pop("type", None)
    if kind == "gaussian":
        return GaussianChannel(float(spec["sigma"]),
                               None if spec.get("sigma_min") is None else float(spec["sigma_min"]))
    if kind == "laplace":
        return LaplaceChannel(float(spec["tau"]))
    if kind == "poisson":
        x_min = spec.get("x_min", params.x_min if params is not None else None)
        if x_min is None:
            raise ValueError("Poisson channel needs x_min")
        return PoissonChannel(float(x_min), bool(spec.get("strict", False)))
    if kind == "onebit":
        link = Link(spec.get("link", "logistic"), float(spec.get("scale", 1.0)))
        hw = spec.get("domain_half_width", params.x_max if params is not None else None)
        if hw is None:
            raise ValueError("one-bit channel needs domain_half_width")
        return OneBitChannel(link, float(hw))
    raise ValueError(f"unknown channel type {kind!r}")


def kl_grid_check(channel: NoiseChannel, lo: float, hi: float, points: int = 51,
                  params: Optional[ModelClassParams] = None, atol: float = 1e-12) -> dict:
    """Check the quadratic KL bound on a ``points x points`` grid over ``[lo, hi]``.

    The bound is ``(x - y)**2 / (2 mu_d**2)``, or ``(x - y)**2 / x_min`` for the
    Poisson channel. Returns the worst off-diagonal slack ``bound - kl`` and the number of
    grid points where ``kl`` is negative, nonzero on the diagonal or above the
    bound by more than ``atol``.
    """
    g = np.linspace(lo, hi, points)
    x, y = np.meshgrid(g, g, indexing="ij")
    kl = np.asarray(channel.kl(x, y), dtype=float)
    if isinstance(channel, PoissonChannel):
        bound = (x - y) ** 2 / channel.x_min
    else:
        bound = (x - y) ** 2 / (2.0 * channel.mu_d(params) ** 2)
    slack = bound - kl
    diag = np.eye(points, dtype=bool)
    bad = (kl < 0) | (slack < -atol) | (diag & (kl != 0))
    return {"channel": channel.tag, "spec": channel.to_spec(), "lo": float(lo),
            "hi": float(hi), "points": points, "worst_slack": float(slack[~diag].min()),
            "violations": int(bad.sum())}

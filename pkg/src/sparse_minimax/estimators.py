"""Baseline estimators for empirical risk curves.

``estimate_sparse_mle`` is a projected alternating-descent surrogate for a
sparsity-penalized maximum likelihood estimator. It makes no optimality claim;
it only has to produce sensible curves to set against the lower bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channels import NoiseChannel, OneBitChannel
from .core import ModelClassParams
from .sim import ObservationSet

INIT_SCHEMES = ("random_uniform", "spectral_like")
MAX_HALVINGS = 60


@dataclass(frozen=True)
class EstimatorConfig:
    max_iters: int = 200
    tol: float = 1e-6
    step_size: float = 0.1
    init_scheme: str = "random_uniform"
    k_budget: Optional[int] = None
    r_budget: Optional[int] = None
    restarts: int = 5

    def __post_init__(self):
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be positive")
        if not self.tol > 0 or not self.step_size > 0:
            raise ValueError("tol and step_size must be positive")
        if self.init_scheme not in INIT_SCHEMES:
            raise ValueError(f"init_scheme must be one of {INIT_SCHEMES}")

    def budgets(self, params: ModelClassParams) -> tuple[int, int]:
        k = params.k if self.k_budget is None else self.k_budget
        r = params.r if self.r_budget is None else self.r_budget
        if not 1 <= k <= params.k or not 1 <= r <= params.r:
            raise ValueError("budgets must lie within the class parameters")
        return k, r


def _floor_value(params: ModelClassParams) -> float:
    return 0.0 if params.x_min is None else params.x_min


def estimate_zero(obs: ObservationSet, params: ModelClassParams) -> np.ndarray:
    """All zeros, or the constant ``x_min`` matrix for the Poisson class."""
    return np.full((params.n1, params.n2), _floor_value(params))


def estimate_plugin(obs: ObservationSet, params: ModelClassParams) -> np.ndarray:
    """Observed cells carry the clipped observation, the rest the floor value.

    One-bit observations map to ``+x_max`` / ``-x_max`` by bit.
    """
    out = estimate_zero(obs, params)
    y = np.asarray(obs.values, dtype=float)
    lo = -params.x_max if params.x_min is None else params.x_min
    if obs.channel_tag == OneBitChannel.tag:
        vals = np.where(y > 0.5, params.x_max, -params.x_max)
    else:
        vals = np.clip(y, lo, params.x_max)
    out[obs.mask.rows, obs.mask.cols] = vals
    return out


# -- sparse MLE surrogate ------------------------------------------------------------

def nll_objective(channel: NoiseChannel, obs: ObservationSet, d: np.ndarray,
                  a: np.ndarray) -> float:
    """Mean negative log-likelihood of the observed cells under ``X = D A``."""
    x = (d @ a)[obs.mask.rows, obs.mask.cols]
    return float(np.mean(channel.nll(obs.values, x)))


def factor_gradients(channel: NoiseChannel, obs: ObservationSet, d: np.ndarray,
                     a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of :func:`nll_objective` with respect to ``D`` and ``A``."""
    rows, cols = obs.mask.rows, obs.mask.cols
    x = (d @ a)[rows, cols]
    g = np.zeros((d.shape[0], a.shape[1]))
    g[rows, cols] = channel.nll_grad(obs.values, x) / rows.size
    return g @ a.T, d.T @ g


class _Projector:
    """Entrywise box constraints on ``D`` and ``A`` plus hard thresholding of ``A``.

    For the Poisson class the factors are nonnegative, the first column of ``D``
    is pinned to one and the first row of ``A`` is floored at ``x_min``, which
    keeps every entry of ``D A`` at least ``x_min``.
    """

    def __init__(self, params: ModelClassParams, k_budget: int, r_budget: int):
        self.params = params
        self.k = k_budget
        self.r_active = r_budget
        self.poisson = params.x_min is not None
        if self.poisson and k_budget < params.n2:
            raise ValueError("Poisson class needs k_budget >= n2")

    def d(self, d: np.ndarray) -> np.ndarray:
        lo = 0.0 if self.poisson else -1.0
        d = np.clip(d, lo, 1.0)
        d[:, self.r_active:] = 0.0
        if self.poisson:
            d[:, 0] = 1.0
        return d

    def a(self, a: np.ndarray) -> np.ndarray:
        p = self.params
        a = a.copy()
        a[self.r_active:] = 0.0
        if not self.poisson:
            a = np.clip(a, -p.a_max, p.a_max)
            return _keep_largest(a, self.k)
        a = np.clip(a, 0.0, p.a_max)
        a[0] = np.clip(a[0], p.x_min, p.a_max)
        a[1:] = _keep_largest(a[1:], self.k - p.n2)
        return a


def _keep_largest(a: np.ndarray, count: int) -> np.ndarray:
    if count >= a.size:
        return a
    out = np.zeros_like(a)
    if count <= 0:
        return out
    flat = np.abs(a).ravel()
    # stable order: ties broken by lowest flat index
    keep = np.argsort(-flat, kind="stable")[:count]
    out.flat[keep] = a.flat[keep]
    return out


def _init_factors(scheme: str, obs: ObservationSet, params: ModelClassParams,
                  proj: _Projector, rng: np.random.Generator):
    n1, n2, r = params.n1, params.n2, params.r
    if scheme == "spectral_like" and not proj.poisson:
        z = np.zeros((n1, n2))
        z[obs.mask.rows, obs.mask.cols] = estimate_plugin(obs, params)[obs.mask.rows,
                                                                        obs.mask.cols]
        frac = max(obs.mask.size / (n1 * n2), 1.0 / (n1 * n2))
        u, s, vt = np.linalg.svd(z / frac, full_matrices=False)
        ra = proj.r_active
        root = np.sqrt(s[:ra])
        d = np.zeros((n1, r))
        a = np.zeros((r, n2))
        d[:, :ra] = u[:, :ra] * root
        a[:ra] = root[:, None] * vt[:ra]
        scale = max(float(np.max(np.abs(d))), 1e-12)
        return proj.d(d / scale), proj.a(a * scale)

    if proj.poisson:
        d = rng.uniform(0.0, 1.0, size=(n1, r))
        a = np.zeros((r, n2))
        a[0] = rng.uniform(params.x_min, params.a_max, size=n2)
        extra = proj.k - n2
        if extra > 0 and r > 1:
            cells = rng.choice((r - 1) * n2, size=min(extra, (r - 1) * n2), replace=False)
            a[1:].flat[cells] = rng.uniform(0.0, params.a_max, size=cells.size)
        return proj.d(d), proj.a(a)

    d = rng.uniform(-1.0, 1.0, size=(n1, r))
    a = np.zeros((r, n2))
    cells = rng.choice(r * n2, size=proj.k, replace=False)
    a.flat[cells] = rng.uniform(-params.a_max, params.a_max, size=proj.k)
    return proj.d(d), proj.a(a)


@dataclass
class SparseMLEResult:
    x: np.ndarray
    d: np.ndarray
    a: np.ndarray
    objective: float
    history: list = field(default_factory=list)
    iterations: int = 0
    restart: int = 0


def _block_step(f, grad, point, project, step, current):
    """Backtracking projected step; returns (point, value, step, accepted)."""
    for _ in range(MAX_HALVINGS):
        cand = project(point - step * grad)
        val = f(cand)
        if not np.isfinite(val):
            step *= 0.5
            continue
        if val <= current:
            return cand, val, step, True
        step *= 0.5
    return point, current, step, False


def _fit_once(obs, params, channel, cfg, proj, rng) -> SparseMLEResult:
    d, a = _init_factors(cfg.init_scheme, obs, params, proj, rng)
    obj = nll_objective(channel, obs, d, a)
    if not np.isfinite(obj):
        raise FloatingPointError(f"non-finite initial objective {obj}")
    history = [obj]
    step_d = step_a = cfg.step_size
    it = 0
    for it in range(1, cfg.max_iters + 1):
        start = obj
        gd, _ = factor_gradients(channel, obs, d, a)
        d, obj, step_d, moved = _block_step(
            lambda z: nll_objective(channel, obs, z, a), gd, d, proj.d, step_d, obj)
        if moved:
            history.append(obj)
            step_d *= 2.0
        _, ga = factor_gradients(channel, obs, d, a)
        a, obj, step_a, moved = _block_step(
            lambda z: nll_objective(channel, obs, d, z), ga, a, proj.a, step_a, obj)
        if moved:
            history.append(obj)
            step_a *= 2.0
        if not np.isfinite(obj):
            raise FloatingPointError("objective became non-finite")
        if abs(start - obj) <= cfg.tol * max(abs(start), 1e-12):
            break
    return SparseMLEResult(x=d @ a, d=d, a=a, objective=obj, history=history, iterations=it)


def fit_sparse_mle(obs: ObservationSet, params: ModelClassParams, channel: NoiseChannel,
                   cfg: EstimatorConfig = EstimatorConfig(),
                   rng: Optional[np.random.Generator] = None) -> SparseMLEResult:
    """Best of ``cfg.restarts`` projected alternating-descent runs.

    Each run alternates backtracking gradient steps on ``D`` (clipped to
    ``[-1, 1]``) and on ``A`` (hard-thresholded to ``k_budget`` entries and
    clipped to ``[-A_max, A_max]``). Steps are accepted only when the
    objective does not increase. Restart seeds derive from ``rng``; ties in the
    final objective go to the lowest restart index.
    """
    if obs.mask.size == 0:
        raise ValueError("sparse MLE needs at least one observation")
    rng = np.random.default_rng(0) if rng is None else rng
    k_budget, r_budget = cfg.budgets(params)
    proj = _Projector(params, k_budget, r_budget)
    seeds = rng.integers(0, 2 ** 63 - 1, size=cfg.restarts)
    best = None
    for i, seed in enumerate(seeds):
        run_cfg = cfg
        if i > 0 and cfg.init_scheme == "spectral_like":
            run_cfg = EstimatorConfig(**{**cfg.__dict__, "init_scheme": "random_uniform"})
        res = _fit_once(obs, params, channel, run_cfg, proj, np.random.default_rng(seed))
        res.restart = i
        if best is None or res.objective < best.objective:
            best = res
    return best


def estimate_sparse_mle(obs: ObservationSet, params: ModelClassParams, channel: NoiseChannel,
                        cfg: EstimatorConfig = EstimatorConfig(),
                        rng: Optional[np.random.Generator] = None) -> np.ndarray:
    return fit_sparse_mle(obs, params, channel, cfg, rng).x


ESTIMATORS = ("zero", "plugin", "sparse_mle")


def make_estimator(name: str, params: ModelClassParams, channel: NoiseChannel,
                   cfg: EstimatorConfig = EstimatorConfig()):
    """Wrap an estimator as ``f(obs, rng) -> matrix`` for :func:`monte_carlo_risk`."""
    if name == "zero":
        return lambda obs, rng: estimate_zero(obs, params)
    if name == "plugin":
        return lambda obs, rng: estimate_plugin(obs, params)
    if name == "sparse_mle":
        return lambda obs, rng: estimate_sparse_mle(obs, params, channel, cfg, rng)
    raise ValueError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")

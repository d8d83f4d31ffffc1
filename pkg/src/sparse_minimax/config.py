"""Experiment configuration files.

Configs are YAML documents::

    model:     {n1: 32, n2: 32, r: 2, k: 64, a_max: 1.0}   # x_min for Poisson
    channel:   {type: gaussian, sigma: 0.5}                # laplace: tau
                                                           # poisson: x_min
                                                           # onebit: link, scale
    constants: {c_d: 1.0, alpha: 0.0625}                   # gamma_a/d/p optional
    estimator: {names: [zero, plugin, sparse_mle], max_iters: 200, restarts: 5}
    m_sweep:   [256, 512, 1024]
    trials:    50
    master_seed: 0
    truth:     random          # or "fixed": one X* shared by every trial
    output_dir: out
    pack:      {kinds: [sparse_factor, dictionary], m: 256}

Only ``model``, ``channel`` and ``m_sweep`` are required.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .bounds import BoundConstants
from .channels import NoiseChannel, PoissonChannel, channel_from_spec
from .core import ModelClassParams
from .estimators import ESTIMATORS, EstimatorConfig
from .packing import DICTIONARY, KINDS, POISSON_DICTIONARY, POISSON_SPARSE, SPARSE


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelClassParams
    channel: NoiseChannel
    constants: BoundConstants
    estimator: EstimatorConfig
    estimators: tuple[str, ...]
    m_sweep: tuple[int, ...]
    trials: int = 50
    master_seed: int = 0
    output_dir: Path = Path("out")
    truth: str = "random"
    pack_kinds: tuple[str, ...] = ()
    pack_m: Optional[int] = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def echo(self) -> dict:
        """Config echo for sidecars; omits run-location and thread settings."""
        raw = {k: v for k, v in self.raw.items() if k != "output_dir"}
        raw["master_seed"] = self.master_seed
        return raw


_ESTIMATOR_KEYS = ("max_iters", "tol", "step_size", "init_scheme", "k_budget",
                   "r_budget", "restarts")


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        model = dict(raw["model"])
        params = ModelClassParams(
            n1=int(model["n1"]), n2=int(model["n2"]), r=int(model["r"]), k=int(model["k"]),
            a_max=float(model.get("a_max", 1.0)),
            x_min=None if model.get("x_min") is None else float(model["x_min"]))
        channel = channel_from_spec(raw["channel"], params)
        if isinstance(channel, PoissonChannel) and params.x_min is None:
            params = params.with_(x_min=channel.x_min)
        consts = BoundConstants(**(raw.get("constants") or {}))
        est = dict(raw.get("estimator") or {})
        names = tuple(est.pop("names", ESTIMATORS))
        unknown = set(est) - set(_ESTIMATOR_KEYS)
        if unknown:
            raise ConfigError(f"unknown estimator keys {sorted(unknown)}")
        est_cfg = EstimatorConfig(**est)
        for name in names:
            if name not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {name!r}")
        sweep = tuple(int(m) for m in raw["m_sweep"])
        pack = dict(raw.get("pack") or {})
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc

    if not sweep:
        raise ConfigError("m_sweep must be nonempty")
    for m in sweep:
        if not 1 <= m <= params.size:
            raise ConfigError(f"m={m} in m_sweep outside [1, n1*n2={params.size}]")
    trials = int(raw.get("trials", 50))
    if trials < 1:
        raise ConfigError("trials must be positive")
    seed = int(raw.get("master_seed", 0))
    if seed < 0:
        raise ConfigError("master_seed must be nonnegative")
    truth = raw.get("truth", "random")
    if truth not in ("random", "fixed"):
        raise ConfigError("truth must be 'random' or 'fixed'")

    poisson = isinstance(channel, PoissonChannel)
    kinds = tuple(pack.get("kinds") or ((POISSON_SPARSE, POISSON_DICTIONARY) if poisson
                                        else (SPARSE, DICTIONARY)))
    for kind in kinds:
        if kind not in KINDS:
            raise ConfigError(f"unknown packing kind {kind!r}")
    pack_m = int(pack.get("m", sweep[0]))
    if pack_m < 1:
        raise ConfigError("pack.m must be positive")

    return ExperimentConfig(
        params=params, channel=channel, constants=consts, estimator=est_cfg,
        estimators=names, m_sweep=sweep, trials=trials, master_seed=seed,
        output_dir=Path(raw.get("output_dir", "out")), truth=truth,
        pack_kinds=kinds, pack_m=pack_m, raw=raw)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return parse_config(raw)

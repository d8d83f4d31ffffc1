"""Bernoulli sampling masks, observation synthesis and Monte-Carlo risk."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .channels import NoiseChannel
from .core import ModelClassParams, RiskEstimate, per_element_sq_error

MAX_FAILURE_RATE = 0.1


class TooManyFailures(RuntimeError):
    pass


def trial_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for trial ``index``; depends only on (seed, index)."""
    if master_seed < 0 or index < 0:
        raise ValueError("seed and trial index must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


@dataclass(frozen=True)
class SampleMask:
    """Observed cell set; ``rows``/``cols`` are in row-major order."""

    n1: int
    n2: int
    rows: np.ndarray
    cols: np.ndarray
    m: int

    def __post_init__(self):
        self.rows.setflags(write=False)
        self.cols.setflags(write=False)
        if self.rows.shape != self.cols.shape:
            raise ValueError("rows and cols must align")
        if self.rows.size and (self.rows.min() < 0 or self.rows.max() >= self.n1
                               or self.cols.min() < 0 or self.cols.max() >= self.n2):
            raise ValueError("mask index out of range")

    @property
    def gamma(self) -> float:
        return self.m / (self.n1 * self.n2)

    @property
    def size(self) -> int:
        return int(self.rows.size)

    @property
    def included(self) -> set[tuple[int, int]]:
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    def as_bool(self) -> np.ndarray:
        out = np.zeros((self.n1, self.n2), dtype=bool)
        out[self.rows, self.cols] = True
        return out

    @classmethod
    def from_bool(cls, included: np.ndarray, m: Optional[int] = None) -> "SampleMask":
        rows, cols = np.nonzero(included)
        n1, n2 = included.shape
        return cls(n1, n2, rows, cols, int(rows.size) if m is None else m)


@dataclass(frozen=True)
class ObservationSet:
    mask: SampleMask
    values: np.ndarray
    channel_tag: str

    def __post_init__(self):
        self.values.setflags(write=False)
        if self.values.shape != (self.mask.size,):
            raise ValueError("one observation per masked cell is required")

    def to_csv(self, path) -> None:
        """Write ``i,j,y`` triples (zero-based indices) with a header row."""
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "y"])
            for i, j, y in zip(self.mask.rows, self.mask.cols, self.values):
                w.writerow([int(i), int(j), repr(float(y))])

    @classmethod
    def from_csv(cls, path, n1: int, n2: int, m: int, channel_tag: str) -> "ObservationSet":
        rows, cols, vals = [], [], []
        with open(Path(path), newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append(int(rec["i"]))
                cols.append(int(rec["j"]))
                vals.append(float(rec["y"]))
        mask = SampleMask(n1, n2, np.array(rows, dtype=np.intp),
                          np.array(cols, dtype=np.intp), m)
        return cls(mask, np.array(vals, dtype=float), channel_tag)


def draw_mask(n1: int, n2: int, m: int, rng: np.random.Generator) -> SampleMask:
    """Include each cell independently with probability ``m / (n1 n2)``."""
    if int(m) != m or not 1 <= m <= n1 * n2:
        raise ValueError(f"m={m} must be an integer in [1, n1*n2={n1 * n2}]")
    gamma = m / (n1 * n2)
    included = rng.random((n1, n2)) < gamma
    return SampleMask.from_bool(included, int(m))


def observe(xstar: np.ndarray, mask: SampleMask, channel: NoiseChannel,
            rng: np.random.Generator) -> ObservationSet:
    xstar = np.asarray(xstar, dtype=float)
    if xstar.shape != (mask.n1, mask.n2):
        raise ValueError(f"matrix shape {xstar.shape} does not match mask")
    entries = xstar[mask.rows, mask.cols]
    channel.check_domain(entries)
    values = np.asarray(channel.sample(entries, rng), dtype=float)
    return ObservationSet(mask, values, channel.tag)


Generator = Callable[[np.random.Generator], np.ndarray]
Estimator = Callable[[ObservationSet, np.random.Generator], np.ndarray]


def _run_trial(index, generator, estimator, channel, params, m, master_seed):
    rng = trial_rng(master_seed, index)
    xstar = np.asarray(generator(rng), dtype=float)
    mask = draw_mask(params.n1, params.n2, m, rng)
    obs = observe(xstar, mask, channel, rng)
    try:
        xhat = estimator(obs, rng)
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError):
        return None
    return per_element_sq_error(xhat, xstar)


def monte_carlo_risk(generator: Generator, estimator: Estimator, channel: NoiseChannel,
                     params: ModelClassParams, m: int, trials: int, master_seed: int,
                     threads: int = 1) -> RiskEstimate:
    """Mean and standard error of the per-element squared error over trials.

    Trial ``i`` draws ``X*``, the mask, the observations and any estimator
    randomness from ``trial_rng(master_seed, i)``, so results do not depend
    on ``threads``. An estimator raising a numerical error counts as a failed
    trial; more than 10% failures aborts with :class:`TooManyFailures`.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    args = (generator, estimator, channel, params, m, master_seed)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            errors = list(pool.map(lambda i: _run_trial(i, *args), range(trials)))
    else:
        errors = [_run_trial(i, *args) for i in range(trials)]

    ok = np.array([e for e in errors if e is not None], dtype=float)
    failures = trials - ok.size
    if failures > MAX_FAILURE_RATE * trials or ok.size == 0:
        raise TooManyFailures(f"{failures} of {trials} trials failed")
    stderr = float(np.std(ok, ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else 0.0
    return RiskEstimate(mean=float(np.mean(ok)), std_error=stderr, trials=trials,
                        failures=failures, samples=tuple(ok.tolist()))

"""Packing sets for the hypothesis-testing reduction.

Four constructions are provided, each a finite family of class members built
from a binary code whose pairwise Hamming distance is at least ``ceil(L/8)``:

``sparse_factor``
    ``X = D_I A`` with ``A`` supported on its first ``ceil(k/n2)`` rows and
    entries in ``{0, a0}``; ``D_I`` stacks identity blocks so each element
    repeats the nonzero block ``floor(n1 / r')`` times.
``dictionary``
    ``X = D A`` with ``A = A_max (I_r | ... | I_r | 0)`` fixed and ``D`` entries
    in ``{0, d0}``.
``poisson_sparse`` / ``poisson_dictionary``
    The same ideas on top of the offset ``X0 = x_min * ones``, so every entry
    stays at least ``x_min``. The first column of ``D`` is all ones and the
    first row of ``A`` is ``x_min``.

:func:`verify_tsybakov` checks the separation and the average-KL budget of a
packing numerically.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .bounds import BoundConstants, delta_factor
from .channels import NoiseChannel
from .core import FactorPair, ModelClassParams, check_membership, save_csv

SPARSE = "sparse_factor"
DICTIONARY = "dictionary"
POISSON_SPARSE = "poisson_sparse"
POISSON_DICTIONARY = "poisson_dictionary"
KINDS = (SPARSE, DICTIONARY, POISSON_SPARSE, POISSON_DICTIONARY)

MAX_CARDINALITY = 1024
GREEDY_MAX_LENGTH = 24


class ConstructionError(RuntimeError):
    """A code or packing with the requested properties could not be built."""


class InfeasibleGeometry(ValueError):
    """The model class dimensions do not admit the requested construction."""


# -- binary codes --------------------------------------------------------------

@dataclass(frozen=True)
class BinaryCode:
    length: int
    codewords: np.ndarray  # (M, L) array of 0/1
    min_distance: int
    requested: int
    capped: bool = False

    def __post_init__(self):
        self.codewords.setflags(write=False)

    @property
    def cardinality(self) -> int:
        return self.codewords.shape[0]

    def bitstrings(self) -> list[str]:
        return ["".join(str(int(b)) for b in w) for w in self.codewords]


def vg_cardinality(length: int, max_cardinality: int = MAX_CARDINALITY) -> int:
    """``min(2**floor(L/8) + 1, max_cardinality)``."""
    exp = length // 8
    if exp >= 20:
        return max_cardinality
    return min(2 ** exp + 1, max_cardinality)


def hamming_matrix(words: np.ndarray) -> np.ndarray:
    w = np.asarray(words, dtype=np.int64)
    return (w[:, None, :] != w[None, :, :]).sum(axis=2)


def min_hamming_distance(words: np.ndarray) -> int:
    h = hamming_matrix(words)
    if h.shape[0] < 2:
        return 0
    return int(h[np.triu_indices(h.shape[0], 1)].min())


def _greedy_fill(kept: list, length: int, distance: int, target: int) -> list:
    weights = 1 << np.arange(length - 1, -1, -1)
    for value in range(1, 2 ** length):
        if len(kept) >= target:
            break
        word = ((value & weights) > 0).astype(np.uint8)
        stack = np.asarray(kept)
        if np.min(np.sum(stack != word, axis=1)) >= distance:
            kept.append(word)
    return kept


def vg_code(length: int, target_cardinality: Optional[int] = None,
            rng: Optional[np.random.Generator] = None, *,
            max_cardinality: int = MAX_CARDINALITY, retry_factor: int = 200) -> BinaryCode:
    """Binary code containing the zero word with pairwise distance ``>= ceil(L/8)``.

    Random words are drawn and kept when far enough from every kept word.
    If the draw budget runs out a deterministic greedy scan takes over
    (only for ``L <= 24``). The target is capped at :func:`vg_cardinality`.
    """
    if length < 1:
        raise ValueError("code length must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    cap = vg_cardinality(length, max_cardinality)
    target = cap if target_cardinality is None else int(target_cardinality)
    if target < 1:
        raise ValueError("target cardinality must be positive")
    capped = target > cap
    target = min(target, cap)
    distance = math.ceil(length / 8)

    kept = [np.zeros(length, dtype=np.uint8)]
    draws = 0
    budget = retry_factor * target
    while len(kept) < target and draws < budget:
        word = rng.integers(0, 2, size=length, dtype=np.uint8)
        draws += 1
        if np.min(np.sum(np.asarray(kept) != word, axis=1)) >= distance:
            kept.append(word)
    if len(kept) < target and length <= GREEDY_MAX_LENGTH:
        kept = _greedy_fill(kept, length, distance, target)
    if len(kept) < target:
        raise ConstructionError(
            f"reached cardinality {len(kept)} of {target} for L={length}, d={distance}")

    words = np.asarray(kept, dtype=np.uint8)
    return BinaryCode(length=length, codewords=words, min_distance=distance,
                      requested=target_cardinality or target, capped=capped)


# -- packing sets ----------------------------------------------------------------

@dataclass(frozen=True)
class PackingSet:
    """Finite family of class members with certified separation.

    ``separation_floor`` is the guaranteed minimum squared Frobenius distance
    ``(L/8) * copies * amplitude**2`` (times ``A_max**2`` for dictionary kinds);
    ``branch_min`` and ``normalized_constant`` give the normalized form
    ``min_sq_separation / (n1 n2) >= normalized_constant * branch_min``.
    """

    kind: str
    elements: np.ndarray  # (M, n1, n2)
    factors: tuple[FactorPair, ...]
    reference_index: int
    code: BinaryCode
    amplitude: float
    params: ModelClassParams
    m: int
    min_sq_separation: float
    separation_floor: float
    branch_min: float
    normalized_constant: float

    @property
    def cardinality(self) -> int:
        return self.elements.shape[0]

    @property
    def code_length(self) -> int:
        return self.code.length

    @property
    def reference(self) -> np.ndarray:
        return self.elements[self.reference_index]

    @property
    def separation_ok(self) -> bool:
        return self.min_sq_separation >= self.separation_floor * (1 - 1e-12)

    @property
    def normalized_separation_ok(self) -> bool:
        lhs = self.min_sq_separation / self.params.size
        return lhs >= self.normalized_constant * self.branch_min * (1 - 1e-12)

    def membership(self):
        return [check_membership(fp, self.params) for fp in self.factors]

    def manifest(self) -> dict:
        return {
            "kind": self.kind,
            "amplitude": self.amplitude,
            "cardinality": self.cardinality,
            "reference_index": self.reference_index,
            "code_length": self.code.length,
            "code_min_distance": self.code.min_distance,
            "code_capped": self.code.capped,
            "code": self.code.bitstrings(),
            "min_sq_separation": self.min_sq_separation,
            "separation_floor": self.separation_floor,
            "branch_min": self.branch_min,
            "normalized_constant": self.normalized_constant,
            "params": asdict(self.params),
            "m": self.m,
        }


def pairwise_sq_distances(elements: np.ndarray) -> np.ndarray:
    """Exact pairwise squared Frobenius distances (upper triangle order)."""
    flat = elements.reshape(elements.shape[0], -1)
    out = []
    for i in range(flat.shape[0] - 1):
        diff = flat[i + 1:] - flat[i]
        out.append(np.sum(diff * diff, axis=1))
    return np.concatenate(out) if out else np.zeros(0)


def _check_m(params: ModelClassParams, m: int) -> None:
    # m only scales amplitudes and the KL sum here, so m > n1*n2 is allowed
    if int(m) != m or m < 1:
        raise ValueError(f"m={m} must be a positive integer")


def _assemble(kind, params, m, code, amplitude, factor_fn, floor, branch_min, const):
    factors = tuple(factor_fn(word) for word in code.codewords)
    elements = np.stack([fp.d @ fp.a for fp in factors])
    elements.setflags(write=False)
    seps = pairwise_sq_distances(elements)
    min_sep = float(seps.min()) if seps.size else 0.0
    return PackingSet(kind=kind, elements=elements, factors=factors, reference_index=0,
                      code=code, amplitude=float(amplitude), params=params, m=int(m),
                      min_sq_separation=min_sep, separation_floor=float(floor),
                      branch_min=float(branch_min), normalized_constant=const)


def build_sparse_packing(params: ModelClassParams, m: int, mu_d: float,
                         consts: BoundConstants = BoundConstants(),
                         rng: Optional[np.random.Generator] = None, *,
                         amplitude: Optional[float] = None,
                         max_cardinality: int = MAX_CARDINALITY) -> PackingSet:
    """Sparse-factor packing around the zero matrix."""
    _check_m(params, m)
    n1, n2, r, k = params.n1, params.n2, params.r, params.k
    r_nz = math.ceil(k / n2)
    if r_nz > r:
        raise InfeasibleGeometry(f"ceil(k/n2)={r_nz} exceeds r={r}")
    a0 = min(params.a_max, consts.gamma_a * mu_d * math.sqrt(k / m))
    if amplitude is not None:
        a0 = float(amplitude)
    copies = n1 // r_nz

    d = np.zeros((n1, r))
    for b in range(copies):
        d[b * r_nz:(b + 1) * r_nz, :r_nz] = np.eye(r_nz)
    # the k coded positions fill the top r_nz rows of A in row-major order
    positions = np.arange(k)

    def factor(word):
        a = np.zeros((r, n2))
        a[:r_nz].flat[positions] = a0 * word
        return FactorPair(d, a)

    code = vg_code(k, rng=rng, max_cardinality=max_cardinality)
    floor = (k / 8) * copies * a0 ** 2
    branch = min(params.a_max ** 2, consts.gamma_a ** 2 * mu_d ** 2 * k / m)
    return _assemble(SPARSE, params, m, code, a0, factor, floor, branch, 1 / 32)


def build_dictionary_packing(params: ModelClassParams, m: int, mu_d: float,
                             consts: BoundConstants = BoundConstants(),
                             rng: Optional[np.random.Generator] = None, *,
                             amplitude: Optional[float] = None,
                             max_cardinality: int = MAX_CARDINALITY) -> PackingSet:
    """Dictionary packing: ``A`` fixed to identity blocks, ``D`` coded."""
    _check_m(params, m)
    n1, n2, r, k = params.n1, params.n2, params.r, params.k
    cover = min(k, n2)
    if r > cover:
        raise InfeasibleGeometry(f"r={r} exceeds min(k, n2)={cover}")
    delta = delta_factor(k, n2)
    blocks = cover // r
    d0 = min(1.0, consts.gamma_d * mu_d / (params.a_max * math.sqrt(delta))
             * math.sqrt(n1 * r / m))
    if amplitude is not None:
        d0 = float(amplitude)

    a = np.zeros((r, n2))
    a[:, :blocks * r] = params.a_max * np.tile(np.eye(r), blocks)

    def factor(word):
        return FactorPair(d0 * word.reshape(n1, r).astype(float), a)

    code = vg_code(n1 * r, rng=rng, max_cardinality=max_cardinality)
    floor = (n1 * r / 8) * blocks * params.a_max ** 2 * d0 ** 2
    branch = min(delta * params.a_max ** 2, consts.gamma_d ** 2 * mu_d ** 2 * n1 * r / m)
    return _assemble(DICTIONARY, params, m, code, d0, factor, floor, branch, 1 / 16)


def _require_x_min(params: ModelClassParams) -> float:
    if params.x_min is None:
        raise ValueError("Poisson packings need params.x_min")
    return params.x_min


def build_poisson_sparse_packing(params: ModelClassParams, m: int,
                                 consts: BoundConstants = BoundConstants(),
                                 rng: Optional[np.random.Generator] = None, *,
                                 amplitude: Optional[float] = None,
                                 max_cardinality: int = MAX_CARDINALITY) -> PackingSet:
    """Sparse-factor packing around ``X0 = x_min * ones``; needs ``k > n2``."""
    _check_m(params, m)
    x_min = _require_x_min(params)
    n1, n2, r, k = params.n1, params.n2, params.r, params.k
    if k <= n2:
        raise InfeasibleGeometry(
            f"Poisson sparse packing needs k > n2, got k={k}, n2={n2}")
    free = k - n2
    r_nz = math.ceil(k / n2) - 1
    if r_nz + 1 > r:
        raise InfeasibleGeometry(f"ceil(k/n2)={r_nz + 1} exceeds r={r}")
    a0 = min(params.a_max, consts.gamma_p * math.sqrt(x_min) * math.sqrt(free / m))
    if amplitude is not None:
        a0 = float(amplitude)
    copies = n1 // r_nz

    d = np.zeros((n1, r))
    d[:, 0] = 1.0
    for b in range(copies):
        d[b * r_nz:(b + 1) * r_nz, 1:r_nz + 1] = np.eye(r_nz)
    positions = np.arange(free)

    def factor(word):
        a = np.zeros((r, n2))
        a[0] = x_min
        a[1:r_nz + 1].flat[positions] = a0 * word
        return FactorPair(d, a)

    code = vg_code(free, rng=rng, max_cardinality=max_cardinality)
    floor = (free / 8) * copies * a0 ** 2
    branch = min(params.a_max ** 2, consts.gamma_p ** 2 * x_min * free / m)
    return _assemble(POISSON_SPARSE, params, m, code, a0, factor, floor, branch, 1 / 32)


def build_poisson_dictionary_packing(params: ModelClassParams, m: int,
                                     consts: BoundConstants = BoundConstants(),
                                     rng: Optional[np.random.Generator] = None, *,
                                     amplitude: Optional[float] = None,
                                     max_cardinality: int = MAX_CARDINALITY) -> PackingSet:
    """Dictionary packing around ``X0 = x_min * ones``.

    The first factor column/row carries the offset, leaving ``r - 1`` coded
    dictionary columns and ``k - n2`` nonzeros for the identity blocks.
    """
    _check_m(params, m)
    x_min = _require_x_min(params)
    n1, n2, r, k = params.n1, params.n2, params.r, params.k
    if k <= n2:
        raise InfeasibleGeometry(
            f"Poisson dictionary packing needs k > n2, got k={k}, n2={n2}")
    if r < 2:
        raise InfeasibleGeometry("Poisson dictionary packing needs r >= 2")
    rc = r - 1
    cover = min(k - n2, n2)
    if rc > cover:
        raise InfeasibleGeometry(f"r-1={rc} exceeds min(k-n2, n2)={cover}")
    delta = cover / n2
    blocks = cover // rc
    d0 = min(1.0, consts.gamma_p * math.sqrt(x_min) / (params.a_max * math.sqrt(delta))
             * math.sqrt(n1 * rc / m))
    if amplitude is not None:
        d0 = float(amplitude)

    a = np.zeros((r, n2))
    a[0] = x_min
    a[1:, :blocks * rc] = params.a_max * np.tile(np.eye(rc), blocks)

    def factor(word):
        d = np.ones((n1, r))
        d[:, 1:] = d0 * word.reshape(n1, rc)
        return FactorPair(d, a)

    code = vg_code(n1 * rc, rng=rng, max_cardinality=max_cardinality)
    floor = (n1 * rc / 8) * blocks * params.a_max ** 2 * d0 ** 2
    branch = min(delta * params.a_max ** 2, consts.gamma_p ** 2 * x_min * n1 * rc / m)
    return _assemble(POISSON_DICTIONARY, params, m, code, d0, factor, floor, branch, 1 / 16)


def build_packing(kind: str, params: ModelClassParams, m: int, mu_d: Optional[float],
                  consts: BoundConstants = BoundConstants(),
                  rng: Optional[np.random.Generator] = None, **kw) -> PackingSet:
    if kind == SPARSE:
        return build_sparse_packing(params, m, mu_d, consts, rng, **kw)
    if kind == DICTIONARY:
        return build_dictionary_packing(params, m, mu_d, consts, rng, **kw)
    if kind == POISSON_SPARSE:
        return build_poisson_sparse_packing(params, m, consts, rng, **kw)
    if kind == POISSON_DICTIONARY:
        return build_poisson_dictionary_packing(params, m, consts, rng, **kw)
    raise ValueError(f"unknown packing kind {kind!r}")


# -- verification -----------------------------------------------------------------

@dataclass(frozen=True)
class TsybakovCertificate:
    separation_ok: bool
    required_separation: float
    achieved_separation: float
    kl_budget_ok: bool
    avg_kl: float
    budget: float
    alpha: float
    cardinality: int
    code_capped: bool = False

    @property
    def ok(self) -> bool:
        return self.separation_ok and self.kl_budget_ok

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def sampled_kl(channel: NoiseChannel, x: np.ndarray, x_ref: np.ndarray, m: int) -> float:
    """KL between observation laws under Bernoulli sampling with mean size ``m``."""
    return float(m / x.size * np.sum(channel.kl(x, x_ref)))


def verify_tsybakov(ps: PackingSet, channel: NoiseChannel, params: ModelClassParams,
                    m: int, alpha: float) -> TsybakovCertificate:
    """Check separation and the average KL budget ``alpha * log(M - 1)``.

    ``M`` counts all elements including the reference; at least two
    non-reference elements are required.
    """
    if not 0 < alpha < 1 / 8:
        raise ValueError("alpha must lie in (0, 1/8)")
    if ps.cardinality < 3:
        raise ValueError(
            f"packing has {ps.cardinality} elements; need at least two besides the reference")
    _check_m(params, m)
    channel.check_domain(ps.elements)

    ref = ps.reference
    kls = [sampled_kl(channel, x, ref, m)
           for i, x in enumerate(ps.elements) if i != ps.reference_index]
    avg_kl = float(np.mean(kls))
    budget = alpha * math.log(ps.cardinality - 1)
    achieved = float(pairwise_sq_distances(np.asarray(ps.elements)).min())
    return TsybakovCertificate(
        separation_ok=bool(achieved > 0 and achieved >= ps.separation_floor * (1 - 1e-12)),
        required_separation=ps.separation_floor,
        achieved_separation=achieved,
        kl_budget_ok=bool(avg_kl <= budget),
        avg_kl=avg_kl, budget=budget, alpha=alpha,
        cardinality=ps.cardinality, code_capped=ps.code.capped)


def export_packing(ps: PackingSet, directory, certificate: Optional[TsybakovCertificate] = None) -> Path:
    """Write elements and factors as CSV plus a ``manifest.json``."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(ps.cardinality - 1)))
    for i, (x, fp) in enumerate(zip(ps.elements, ps.factors)):
        save_csv(out / f"X_{i:0{width}d}.csv", x)
        save_csv(out / f"D_{i:0{width}d}.csv", fp.d)
        save_csv(out / f"A_{i:0{width}d}.csv", fp.a)
    manifest = ps.manifest()
    if certificate is not None:
        manifest["certificate"] = certificate.to_dict()
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out

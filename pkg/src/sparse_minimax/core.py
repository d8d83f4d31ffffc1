"""Matrix and factor data model for the sparse factor class.

Matrices are plain 2-D float ``numpy`` arrays. The model class
``X(r, k, A_max)`` holds every ``X = D @ A`` with ``|D|_inf <= 1``,
``|A|_inf <= A_max`` and at most ``k`` nonzeros in ``A``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np


class ShapeError(ValueError):
    """Raised when matrix dimensions do not line up."""


def as_matrix(values, copy: bool = True) -> np.ndarray:
    """Validate and return ``values`` as a finite 2-D float array."""
    arr = np.array(values, dtype=float, copy=copy)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"matrix must be non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix entries must be finite")
    return arr


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelClassParams:
    """Dimensions and amplitude constraints of the model class.

    ``x_min`` is only used by the Poisson class, where every entry of
    ``X`` must be at least ``x_min``.
    """

    n1: int
    n2: int
    r: int
    k: int
    a_max: float
    x_min: Optional[float] = None

    def __post_init__(self):
        for name in ("n1", "n2", "r", "k"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")
        if self.r > min(self.n1, self.n2):
            raise ValueError(f"r={self.r} exceeds min(n1, n2)={min(self.n1, self.n2)}")
        if self.k > self.r * self.n2:
            raise ValueError(f"k={self.k} exceeds r*n2={self.r * self.n2}")
        if not self.a_max > 0:
            raise ValueError("a_max must be positive")
        if self.x_min is not None and not 0 < self.x_min <= self.a_max:
            raise ValueError("x_min must satisfy 0 < x_min <= a_max")

    @property
    def x_max(self) -> float:
        """Hard entry cap ``r * a_max`` implied by the factor bounds."""
        return self.r * self.a_max

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    def with_(self, **changes) -> "ModelClassParams":
        kw = dict(n1=self.n1, n2=self.n2, r=self.r, k=self.k,
                  a_max=self.a_max, x_min=self.x_min)
        kw.update(changes)
        return ModelClassParams(**kw)


@dataclass(frozen=True)
class FactorPair:
    """A concrete ``(D, A)`` pair; ``D`` is ``n1 x r`` and ``A`` is ``r x n2``."""

    d: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "d", _frozen(as_matrix(self.d)))
        object.__setattr__(self, "a", _frozen(as_matrix(self.a)))
        if self.d.shape[1] != self.a.shape[0]:
            raise ShapeError(
                f"inner dimensions disagree: D is {self.d.shape}, A is {self.a.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.d.shape[0], self.a.shape[1]


@dataclass(frozen=True)
class Violation:
    constraint: str
    value: float
    limit: float

    def __str__(self):
        return f"{self.constraint} violated: {self.value:g} vs limit {self.limit:g}"


@dataclass(frozen=True)
class Membership:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class RiskEstimate:
    """Monte-Carlo estimate of the per-element squared error."""

    mean: float
    std_error: float
    trials: int
    failures: int = 0
    samples: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.mean < 0 or self.std_error < 0:
            raise ValueError("risk mean and standard error must be nonnegative")


def product(fp: FactorPair) -> np.ndarray:
    """Return ``D @ A``."""
    return fp.d @ fp.a


def nnz(matrix: np.ndarray) -> int:
    # exact zeros only; packing constructions produce exact zeros
    return int(np.count_nonzero(matrix))


def check_membership(fp: FactorPair, params: ModelClassParams) -> Membership:
    """Report every constraint of the model class that ``fp`` breaks.

    Shapes must already match ``params``; violations are returned, not raised.
    """
    if fp.d.shape != (params.n1, params.r) or fp.a.shape != (params.r, params.n2):
        raise ShapeError(
            f"factor shapes {fp.d.shape}, {fp.a.shape} do not match "
            f"({params.n1}, {params.r}), ({params.r}, {params.n2})")
    out = []
    d_inf = float(np.max(np.abs(fp.d)))
    if d_inf > 1.0:
        out.append(Violation("‖D‖∞ ≤ 1", d_inf, 1.0))
    a_inf = float(np.max(np.abs(fp.a)))
    if a_inf > params.a_max:
        out.append(Violation("‖A‖∞ ≤ A_max", a_inf, params.a_max))
    a_nnz = nnz(fp.a)
    if a_nnz > params.k:
        out.append(Violation("‖A‖₀ ≤ k", a_nnz, params.k))
    if params.x_min is not None:
        x_lo = float(np.min(product(fp)))
        if x_lo < params.x_min:
            out.append(Violation("min X ≥ X_min", x_lo, params.x_min))
    return Membership(tuple(out))


def per_element_sq_error(xhat, xstar) -> float:
    """Normalized squared Frobenius error ``‖xhat - xstar‖²_F / (n1 n2)``."""
    xhat = np.asarray(xhat, dtype=float)
    xstar = np.asarray(xstar, dtype=float)
    if xhat.shape != xstar.shape:
        raise ShapeError(f"shape mismatch: {xhat.shape} vs {xstar.shape}")
    diff = xhat - xstar
    return float(np.sum(diff * diff) / diff.size)


def random_factor_pair(params: ModelClassParams, rng: np.random.Generator) -> FactorPair:
    """Draw a member of the model class.

    ``D`` is uniform on ``[-1, 1]``. ``A`` has ``k`` nonzeros at uniformly
    random positions with magnitudes uniform on ``[A_max/2, A_max]`` and random
    signs. For the Poisson class the factors are made nonnegative, the first
    column of ``D`` is all ones and the first row of ``A`` is at least
    ``x_min``, so every entry of the product is at least ``x_min``.
    """
    n1, n2, r, k = params.n1, params.n2, params.r, params.k
    if params.x_min is None:
        d = rng.uniform(-1.0, 1.0, size=(n1, r))
        a = np.zeros((r, n2))
        flat = rng.choice(r * n2, size=k, replace=False)
        mags = rng.uniform(0.5 * params.a_max, params.a_max, size=k)
        signs = rng.choice([-1.0, 1.0], size=k)
        a.flat[flat] = mags * signs
        return FactorPair(d, a)

    if k < n2:
        raise ValueError("Poisson class needs k >= n2 (no zero columns in A)")
    d = rng.uniform(0.0, 1.0, size=(n1, r))
    d[:, 0] = 1.0
    a = np.zeros((r, n2))
    a[0] = rng.uniform(params.x_min, params.a_max, size=n2)
    extra = k - n2
    if extra and r > 1:
        flat = rng.choice((r - 1) * n2, size=min(extra, (r - 1) * n2), replace=False)
        a[1:].flat[flat] = rng.uniform(0.0, params.a_max, size=flat.size)
    return FactorPair(d, a)


def save_csv(path, matrix) -> None:
    """Write a matrix as plain comma-separated decimal rows."""
    np.savetxt(Path(path), as_matrix(matrix), delimiter=",", fmt="%.17g")


def load_csv(path) -> np.ndarray:
    return as_matrix(np.loadtxt(Path(path), delimiter=",", ndmin=2))


"""Synthetic data: covariance structures, sparse coefficients and link-function models.

The seven simulation models and the cubic counter-example share one
generator. Every draw is a pure function of the specs and the supplied
``numpy.random.Generator``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import NotPositiveDefinite

PD_FLOOR = 1e-10
NULL_BLOCK = 7


class CovKind(str, Enum):
    IDENTITY = "identity"
    TOEPLITZ = "toeplitz"  # type (i): rho ** |i - j|
    BLOCKED = "blocked"  # type (ii): rho inside S and S^c, ``cross`` between


class Link(str, Enum):
    NULL = "null"
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    V = "V"
    VI = "VI"
    VII = "VII"
    CUBIC = "cubic"


class Support(str, Enum):
    FIRST = "first"
    RANDOM = "random"


# support sizes used in the simulation study
DEFAULT_SUPPORT_SIZE = {
    Link.NULL: 0,
    Link.I: 7,
    Link.II: 10,
    Link.III: 5,
    Link.IV: 10,
    Link.V: 7,
    Link.VI: 7,
    Link.VII: 10,
    Link.CUBIC: 5,
}


@dataclass(frozen=True)
class CovarianceSpec:
    kind: CovKind = CovKind.IDENTITY
    p: int = 100
    rho: float = 0.0
    cross: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", CovKind(self.kind))
        if self.p < 1:
            raise ValueError("p must be positive")
        if self.kind is CovKind.TOEPLITZ and not 0.0 <= self.rho < 1.0:
            raise ValueError("Toeplitz rho must lie in [0, 1)")

    @property
    def cov_type(self) -> str:
        """Short label used in reports: ``i`` for Toeplitz/identity, ``ii`` for blocked."""
        return "ii" if self.kind is CovKind.BLOCKED else "i"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


@dataclass(frozen=True)
class ModelSpec:
    link: Link = Link.NULL
    s: Optional[int] = None
    support: Support = Support.FIRST
    kappa: float = 1.0
    sigma_eps: float = 1.0
    normalize_beta: bool = False

    def __post_init__(self):
        object.__setattr__(self, "link", Link(self.link))
        object.__setattr__(self, "support", Support(self.support))
        if self.s is None:
            object.__setattr__(self, "s", DEFAULT_SUPPORT_SIZE[self.link])
        if self.link is Link.NULL:
            object.__setattr__(self, "s", 0)
        elif self.s < 1:
            raise ValueError("non-null models need s >= 1")
        if self.sigma_eps <= 0:
            raise ValueError("sigma_eps must be positive")

    @property
    def k(self) -> int:
        """Number of summed coordinates in the cubic example (equals ``s``)."""
        return self.s

    def to_dict(self) -> dict:
        d = asdict(self)
        d["link"] = self.link.value
        d["support"] = self.support.value
        return d


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    truth: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=float)
        self.y = np.ascontiguousarray(self.y, dtype=float).ravel()
        if self.x.ndim != 2:
            raise ValueError("x must be a 2-d array")
        n = self.x.shape[0]
        if n < 2:
            raise ValueError("a dataset needs at least two observations")
        if self.y.shape[0] != n:
            raise ValueError(f"x has {n} rows but y has {self.y.shape[0]} entries")
        if not (np.isfinite(self.x).all() and np.isfinite(self.y).all()):
            raise ValueError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def with_response(self, y) -> "Dataset":
        return Dataset(self.x, y, truth=None)

    def to_csv(self, path, sidecar: Optional[dict] = None) -> Path:
        """Write ``y,x1,...,xp`` rows with 17 significant digits, plus a JSON sidecar."""
        path = Path(path)
        header = ",".join(["y"] + [f"x{j + 1}" for j in range(self.p)])
        table = np.column_stack([self.y, self.x])
        np.savetxt(path, table, fmt="%.17g", delimiter=",", header=header, comments="")
        meta = dict(self.truth or {})
        meta.update(sidecar or {})
        meta.setdefault("n", self.n)
        meta.setdefault("p", self.p)
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        if not header or header[0] != "y":
            raise ValueError(f"{path}: first column must be 'y'")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        truth = None
        side = sidecar_path(path)
        if side.exists():
            truth = json.loads(side.read_text())
        return cls(table[:, 1:], table[:, 0], truth=truth)


def sidecar_path(csv_path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_suffix(".json")


@lru_cache(maxsize=32)
def _covariance_cached(spec: CovarianceSpec, support: tuple) -> np.ndarray:
    p = spec.p
    if spec.kind is CovKind.IDENTITY:
        sigma = np.eye(p)
    elif spec.kind is CovKind.TOEPLITZ:
        idx = np.arange(p)
        # scalar pow per lag, so each entry is exactly rho ** |i - j|
        powers = np.array([spec.rho**k for k in range(p)])
        sigma = powers[np.abs(idx[:, None] - idx[None, :])]
    else:
        if not support:
            raise ValueError("blocked covariance needs a nonempty support")
        inside = np.zeros(p, dtype=bool)
        inside[list(support)] = True
        same = inside[:, None] == inside[None, :]
        sigma = np.where(same, spec.rho, spec.cross)
        np.fill_diagonal(sigma, 1.0)
    if p > 1 and spec.kind is not CovKind.IDENTITY:
        lo = np.linalg.eigvalsh(sigma)[0]
        if lo <= PD_FLOOR:
            raise NotPositiveDefinite(lo)
    sigma.setflags(write=False)
    return sigma


def build_covariance(spec: CovarianceSpec, support: Sequence[int] = ()) -> np.ndarray:
    """Realize the p x p covariance matrix (read-only, cached)."""
    key = tuple(sorted(int(i) for i in support)) if spec.kind is CovKind.BLOCKED else ()
    return _covariance_cached(spec, key)


@lru_cache(maxsize=32)
def _cholesky_cached(spec: CovarianceSpec, support: tuple) -> np.ndarray:
    sigma = _covariance_cached(spec, support)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(np.linalg.eigvalsh(sigma)[0]) from None
    chol.setflags(write=False)
    return chol


def choose_support(spec: ModelSpec, p: int, rng: np.random.Generator) -> np.ndarray:
    if spec.s >= p:
        raise ValueError(f"support size s={spec.s} must be smaller than p={p}")
    if spec.support is Support.FIRST:
        return np.arange(spec.s)
    return np.sort(rng.choice(p, size=spec.s, replace=False))


def sample_beta(spec: ModelSpec, p: int, rng: np.random.Generator, support=None) -> np.ndarray:
    """Coefficient vector with ``s`` nonzero entries.

    Entries are iid N(0, 1) on the support; the cubic example uses a vector of
    ones, since its index is the plain sum ``x_1 + ... + x_k``.
    """
    beta = np.zeros(p)
    if spec.link is Link.NULL:
        return beta
    if support is None:
        support = choose_support(spec, p, rng)
    if spec.link is Link.CUBIC:
        beta[support] = 1.0
    else:
        beta[support] = rng.standard_normal(len(support))
    if spec.normalize_beta:
        beta /= np.linalg.norm(beta)
    return beta


def apply_link(spec: ModelSpec, t: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Response from the index ``t = x @ beta`` and noise ``eps`` (already scaled)."""
    link, kappa = spec.link, spec.kappa
    if link is Link.NULL:
        return eps.copy()
    if link is Link.I:
        return 0.02 * (16.0 * t - np.exp(t)) + eps
    if link is Link.II:
        return 0.2 * np.sin(t / 2.0) * np.exp(t / 2.0) + eps
    if link is Link.III:
        return 0.8 * (t - t**3 / 15.0) + eps
    if link is Link.IV:
        return np.sin(t) * np.exp(t / 10.0) * eps
    if link is Link.V:
        return kappa * t - np.exp(t) + eps
    if link is Link.VI:
        return (15.0 * t - np.exp(t)) * kappa + 4.0 * eps
    if link is Link.VII:
        # written as exp(10 * t * kappa), unlike model IV's exp(t / 10)
        return np.sin(t) * np.exp(10.0 * t * kappa) * eps
    if link is Link.CUBIC:
        k = spec.k
        return t - t**3 / (3.0 * k) + eps
    raise ValueError(f"unknown link {link!r}")


def sample_covariates(cov: CovarianceSpec, n: int, rng: np.random.Generator, support=()) -> np.ndarray:
    z = rng.standard_normal((n, cov.p))
    if cov.kind is CovKind.IDENTITY:
        return z
    key = tuple(sorted(int(i) for i in support)) if cov.kind is CovKind.BLOCKED else ()
    chol = _cholesky_cached(cov, key)
    return z @ chol.T


def generate(
    spec: ModelSpec,
    cov: CovarianceSpec,
    n: int,
    rng: np.random.Generator,
    beta: Optional[np.ndarray] = None,
) -> Dataset:
    """Draw ``n`` observations from ``spec`` with covariates ~ N(0, Sigma).

    Draw order is support, beta, x, noise. Passing ``beta`` fixes the
    coefficients (its nonzero pattern is then the support).
    """
    p = cov.p
    if beta is None:
        support = choose_support(spec, p, rng) if spec.link is not Link.NULL else np.arange(0)
        beta = sample_beta(spec, p, rng, support=support)
    else:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (p,):
            raise ValueError(f"beta must have length {p}")
        support = np.flatnonzero(beta)
    if cov.kind is CovKind.BLOCKED and support.size == 0:
        # no support under the null: use the first NULL_BLOCK coordinates as S
        support = np.arange(min(NULL_BLOCK, p - 1))
    x = sample_covariates(cov, n, rng, support)
    eps = spec.sigma_eps * rng.standard_normal(n)
    y = apply_link(spec, x @ beta, eps)
    truth = {
        "model": spec.to_dict(),
        "covariance": cov.to_dict(),
        "beta": beta.tolist(),
        "support": [int(i) for i in support],
    }
    return Dataset(x, y, truth=truth)


def model_from_dict(d: dict) -> ModelSpec:
    return ModelSpec(**d)


def covariance_from_dict(d: dict) -> CovarianceSpec:
    return CovarianceSpec(**d)


def with_overrides(spec, **changes):
    return replace(spec, **changes)

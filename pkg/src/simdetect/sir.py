"""Sliced inverse regression: slice means, the SIR matrix and its top eigenvalue."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import TiesUnbrokenWarning, TooFewObservations, ZeroBeta

DEFAULT_SLICES = 10
MAX_SLICES = 64
TIE_FRACTION = 0.10


@dataclass(frozen=True, eq=False)
class SlicedSummary:
    """Slice means of the centered covariates, ordered by the response.

    ``means`` is the p x H factor X_H; the SIR matrix is ``X_H X_H^T / H``
    and is only built on request.
    """

    means: np.ndarray
    sizes: np.ndarray

    @property
    def H(self) -> int:
        return self.means.shape[1]

    @property
    def p(self) -> int:
        return self.means.shape[0]

    @property
    def slice_means(self) -> np.ndarray:
        """H x p array, one row per slice."""
        return self.means.T

    @cached_property
    def lambda_hat(self) -> np.ndarray:
        return (self.means @ self.means.T) / self.H

    @cached_property
    def gram(self) -> np.ndarray:
        return (self.means.T @ self.means) / self.H

    def to_csv(self, path) -> None:
        header = "slice,size," + ",".join(f"x{j + 1}" for j in range(self.p))
        table = np.column_stack([np.arange(1, self.H + 1), self.sizes, self.slice_means])
        fmt = ["%d", "%d"] + ["%.17g"] * self.p
        np.savetxt(path, table, fmt=fmt, delimiter=",", header=header, comments="")


def slice_sizes(n: int, H: int) -> np.ndarray:
    c, r = divmod(n, H)
    sizes = np.full(H, c, dtype=int)
    if r:
        sizes[H - r:] += 1
    return sizes


def slice_dataset(x, y, H: int = DEFAULT_SLICES, center: bool = True) -> SlicedSummary:
    """Sort by ``y`` and average the covariates within H slices.

    Slices hold ``n // H`` observations, with the remainder given one each to
    the last slices. Ties in ``y`` are broken by original row order. With
    ``center`` the sample column means are removed first.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n = x.shape[0]
    if H < 2 or H > MAX_SLICES:
        raise ValueError(f"H must lie in [2, {MAX_SLICES}], got {H}")
    if n < 2 * H:
        raise TooFewObservations(f"need at least {2 * H} observations for H={H}, got {n}")

    _, counts = np.unique(y, return_counts=True)
    tied = counts[counts > 1].sum()
    if tied > TIE_FRACTION * n:
        warnings.warn(
            f"{tied} of {n} responses are tied; ties are broken by row order",
            TiesUnbrokenWarning,
            stacklevel=2,
        )

    order = np.argsort(y, kind="stable")
    xs = x[order]
    # center after sorting so the result does not depend on the input row order
    if center:
        xs = xs - xs.mean(axis=0)
    sizes = slice_sizes(n, H)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    sums = np.add.reduceat(xs, starts, axis=0)
    means = (sums / sizes[:, None]).T
    return SlicedSummary(means=np.ascontiguousarray(means), sizes=sizes)


def top_eigenvalue(summary: SlicedSummary) -> float:
    """Largest eigenvalue of the SIR matrix, computed on the H x H Gram form."""
    if summary.p <= summary.H:
        value = np.linalg.eigvalsh(summary.lambda_hat)[-1]
    else:
        value = np.linalg.eigvalsh(summary.gram)[-1]
    return max(float(value), 0.0)


@dataclass(frozen=True)
class GsnrOracle:
    value: float


def gsnr_linear(beta, sigma, sigma_eps: float = 1.0) -> GsnrOracle:
    """Nonzero eigenvalue of var(E[x | y]) for ``y = x @ beta + eps``.

    ``sigma_eps`` is the noise standard deviation.
    """
    beta = np.asarray(beta, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    norm2 = float(beta @ beta)
    if norm2 == 0.0:
        raise ZeroBeta("beta must be nonzero")
    b0 = beta / np.sqrt(norm2)
    sb = sigma @ b0
    num = float(sb @ sb) * norm2
    den = float(b0 @ sb) * norm2 + sigma_eps**2
    return GsnrOracle(num / den)

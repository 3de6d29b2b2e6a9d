"""Spectral detection tests, their combinations and Monte-Carlo null calibration.

psi1 thresholds the top eigenvalue of the SIR matrix, psi2 its sparse top
eigenvalue (exact or relaxed), psi3 the ANOVA statistic ``mean(y**2 - 1)``.
SSS rejects when psi1 or psi2 does; SSSa adds psi3.

Calibration draws standard-normal responses ``z`` against the observed
covariates and takes empirical upper quantiles of each statistic. For the
relaxed sparse eigenvalue, null values are first bracketed by a loose solve
and only the brackets that straddle the quantile are solved tightly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np

from .baseline_hc import hc_statistic
from .errors import ThresholdMismatch
from .models import Dataset
from .sir import DEFAULT_SLICES, SlicedSummary, slice_dataset, top_eigenvalue
from .sparse_eig import MAX_SUBSETS, SdpSettings, exact_sparse_eigenvalue, sdp_sparse_eigenvalue

# loose solve for every statistic; decisions and quantiles are certified separately
DEFAULT_SDP = SdpSettings(gap_tolerance=1e-2, max_iterations=3000)
REFINE_SDP = SdpSettings(gap_tolerance=1e-3, max_iterations=20000)
MIN_NULL = 20


class SparseMode(str, Enum):
    EXACT = "exact"
    SDP = "sdp"
    AUTO = "auto"


class CalibrationMode(str, Enum):
    PER_DATASET = "per_dataset"
    POOLED = "pooled"


class Anova(str, Enum):
    RAW = "raw"
    STANDARDIZED = "standardized"


def resolve_mode(mode, p: int, ks: int) -> SparseMode:
    mode = SparseMode(mode)
    if mode is SparseMode.AUTO:
        return SparseMode.EXACT if math.comb(p, ks) <= MAX_SUBSETS else SparseMode.SDP
    return mode


@dataclass(frozen=True)
class SparseValue:
    """Sparse eigenvalue with a certified bracket ``[value, upper]``."""

    value: float
    upper: float
    converged: bool = True
    decided: Optional[bool] = None


def sparse_statistic(a, ks: int, mode, sdp: Optional[SdpSettings] = None, threshold=None) -> SparseValue:
    mode = resolve_mode(mode, a.shape[0], ks)
    if mode is SparseMode.EXACT:
        v, _ = exact_sparse_eigenvalue(a, ks)
        return SparseValue(v, v)
    r = sdp_sparse_eigenvalue(a, ks, sdp or DEFAULT_SDP, strict=False, threshold=threshold)
    return SparseValue(r.value, max(r.upper_bound, r.value), r.converged, r.decided)


def anova_statistic(y, kind=Anova.RAW) -> float:
    """``mean(y**2 - 1)``; the standardized variant rescales y to mean 0, variance 1 first."""
    y = np.asarray(y, dtype=float)
    if Anova(kind) is Anova.STANDARDIZED:
        sd = y.std()
        y = (y - y.mean()) / sd if sd > 0 else y - y.mean()
    return float(np.mean(y * y - 1.0))


def trace_term(x) -> float:
    """tr(sample covariance) / n."""
    x = np.asarray(x, dtype=float)
    return float(x.var(axis=0).sum() / x.shape[0])


@dataclass(frozen=True)
class TestStatistics:
    __test__ = False  # not a pytest class

    lambda_max: float
    sparse_eig: float
    sparse_mode: str
    anova_t: float
    trace_term: float
    sparse_upper: float = float("nan")
    sparse_converged: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def compute_statistics(
    dataset: Dataset,
    H: int = DEFAULT_SLICES,
    ks: int = 1,
    sdp: Optional[SdpSettings] = None,
    mode="auto",
    anova=Anova.RAW,
    summary: Optional[SlicedSummary] = None,
    sparse_threshold: Optional[float] = None,
) -> TestStatistics:
    if not 1 <= ks < dataset.p:
        raise ValueError(f"ks must lie in [1, p), got ks={ks}, p={dataset.p}")
    summary = summary or slice_dataset(dataset.x, dataset.y, H)
    mode = resolve_mode(mode, dataset.p, ks)
    sv = sparse_statistic(summary.lambda_hat, ks, mode, sdp, sparse_threshold)
    return TestStatistics(
        lambda_max=top_eigenvalue(summary),
        sparse_eig=sv.value,
        sparse_mode=mode.value,
        anova_t=anova_statistic(dataset.y, anova),
        trace_term=trace_term(dataset.x),
        sparse_upper=sv.upper,
        sparse_converged=sv.converged,
    )


@dataclass
class NullDraw:
    """Statistics of one null response ``z`` against covariates ``x``."""

    lambda_max: float
    trace_term: float
    anova_t: float
    hc_score: float
    sparse: SparseValue
    summary: Optional[SlicedSummary] = field(default=None, repr=False)


def null_draw(x, rng, H: int, ks: int, mode, sdp=None, anova=Anova.RAW, keep_summary=True) -> NullDraw:
    x = np.asarray(x, dtype=float)
    z = rng.standard_normal(x.shape[0])
    ds = Dataset(x, z)
    summary = slice_dataset(x, z, H)
    sv = sparse_statistic(summary.lambda_hat, ks, resolve_mode(mode, x.shape[1], ks), sdp)
    return NullDraw(
        lambda_max=top_eigenvalue(summary),
        trace_term=trace_term(x),
        anova_t=anova_statistic(z, anova),
        hc_score=hc_statistic(ds).hc_score,
        sparse=sv,
        # a fresh summary drops the cached p x p matrix before pickling
        summary=SlicedSummary(summary.means, summary.sizes) if keep_summary else None,
    )


def quantile_index(level: float, n: int) -> int:
    """1-based order statistic ``ceil((1 - level) * n)``."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    # round first so that e.g. 0.95 * 100 does not become 95.00000000000001
    k = math.ceil(round((1.0 - level) * n, 9))
    return min(max(k, 1), n)


def empirical_quantile(values, level: float) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    return float(v[quantile_index(level, v.size) - 1])


def _refine_one(args):
    summary, ks, settings = args
    r = sdp_sparse_eigenvalue(summary.lambda_hat, ks, settings, strict=False)
    return SparseValue(r.value, max(r.upper_bound, r.value), r.converged)


def sparse_quantile(
    values: Sequence[SparseValue],
    summaries: Sequence[Optional[SlicedSummary]],
    ks: int,
    level: float,
    refine: SdpSettings = REFINE_SDP,
    map_fn: Callable = map,
) -> float:
    """Order statistic of bracketed values, tightening only what can matter.

    A bracket is re-solved with ``refine`` when it overlaps the range in which
    the k-th order statistic can lie. The result is the k-th smallest primal
    value; it is within the refined gap of the exact order statistic.
    """
    vals = list(values)
    k = quantile_index(level, len(vals))
    done = [v.upper - v.value <= 0.0 or s is None for v, s in zip(vals, summaries)]
    while True:
        lo = np.sort([v.value for v in vals])[k - 1]
        hi = np.sort([v.upper for v in vals])[k - 1]
        todo = [i for i, v in enumerate(vals) if not done[i] and v.upper > lo and v.value <= hi]
        if not todo:
            return float(lo)
        for i, sv in zip(todo, map_fn(_refine_one, [(summaries[i], ks, refine) for i in todo])):
            # keep the tighter of the two brackets
            vals[i] = SparseValue(max(vals[i].value, sv.value), min(vals[i].upper, sv.upper), sv.converged)
            done[i] = True


@dataclass(frozen=True)
class CalibratedThresholds:
    tau_n: float
    tau_n_prime: float
    tau_n_dprime: float
    c_hc: float
    level: float = 0.05
    n_null: int = 100
    mode: CalibrationMode = CalibrationMode.PER_DATASET
    seed: Optional[int] = None
    n: int = 0
    p: int = 0
    H: int = DEFAULT_SLICES
    ks: int = 1
    sparse_mode: str = SparseMode.SDP.value
    anova: str = Anova.RAW.value
    bonferroni: bool = False
    theory: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", CalibrationMode(self.mode))
        if self.n_null < MIN_NULL:
            raise ValueError(f"n_null must be at least {MIN_NULL}")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if not all(np.isfinite([self.tau_n, self.tau_n_prime, self.tau_n_dprime])):
            raise ValueError("thresholds must be finite")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["c_hc"] = float(self.c_hc) if np.isfinite(self.c_hc) else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CalibratedThresholds":
        d = dict(d)
        if d.get("c_hc") is None:
            d["c_hc"] = -np.inf
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def thresholds_from_draws(
    draws: Sequence[NullDraw],
    *,
    level: float,
    n: int,
    p: int,
    H: int,
    ks: int,
    sparse_mode,
    mode=CalibrationMode.PER_DATASET,
    seed: Optional[int] = None,
    anova=Anova.RAW,
    bonferroni: bool = False,
    theory: bool = False,
    refine: SdpSettings = REFINE_SDP,
    map_fn: Callable = map,
) -> CalibratedThresholds:
    """Empirical (1 - level) quantiles of the null statistics.

    With ``bonferroni`` the two spectral tests each use ``level / 2`` so that
    SSS has level at most ``level``.
    """
    spectral = level / 2.0 if bonferroni else level
    lam = np.array([d.lambda_max for d in draws])
    if theory:
        lam = lam - np.array([d.trace_term for d in draws])
    sparse_mode = resolve_mode(sparse_mode, p, ks)
    values = [d.sparse for d in draws]
    if sparse_mode is SparseMode.SDP:
        tau_prime = sparse_quantile(values, [d.summary for d in draws], ks, spectral, refine, map_fn)
    else:
        tau_prime = empirical_quantile([v.value for v in values], spectral)
    return CalibratedThresholds(
        tau_n=empirical_quantile(lam, spectral),
        tau_n_prime=tau_prime,
        tau_n_dprime=empirical_quantile([d.anova_t for d in draws], level),
        c_hc=empirical_quantile([d.hc_score for d in draws], level),
        level=level,
        n_null=len(draws),
        mode=mode,
        seed=seed,
        n=n,
        p=p,
        H=H,
        ks=ks,
        sparse_mode=sparse_mode.value,
        anova=Anova(anova).value,
        bonferroni=bonferroni,
        theory=theory,
    )


def calibrate(
    x,
    H: int = DEFAULT_SLICES,
    ks: int = 1,
    sdp: Optional[SdpSettings] = None,
    level: float = 0.05,
    n_null: int = 100,
    mode=CalibrationMode.PER_DATASET,
    seed=0,
    sparse_mode="auto",
    anova=Anova.RAW,
    bonferroni: bool = False,
    theory: bool = False,
) -> CalibratedThresholds:
    """Null thresholds by simulation.

    ``per_dataset``: ``x`` is one n x p matrix and ``n_null`` responses are
    drawn against it. ``pooled``: ``x`` is a sequence of matrices (one per
    replication) and one response is drawn for each. ``seed`` is an integer
    or a ``numpy.random.SeedSequence``; draw i uses its i-th spawned child.
    """
    mode = CalibrationMode(mode)
    if mode is CalibrationMode.PER_DATASET:
        xs: List[np.ndarray] = [np.asarray(x, dtype=float)] * n_null
    else:
        xs = [np.asarray(xi, dtype=float) for xi in x]
    if len(xs) < MIN_NULL:
        raise ValueError(f"need at least {MIN_NULL} null draws, got {len(xs)}")
    n, p = xs[0].shape
    if any(xi.shape != (n, p) for xi in xs):
        raise ValueError("pooled covariate matrices must share one shape")
    sparse_mode = resolve_mode(sparse_mode, p, ks)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(len(xs))
    draws = [
        null_draw(xi, np.random.default_rng(ss), H, ks, sparse_mode, sdp, anova)
        for xi, ss in zip(xs, streams)
    ]
    return thresholds_from_draws(
        draws, level=level, n=n, p=p, H=H, ks=ks, sparse_mode=sparse_mode, mode=mode,
        seed=seed if isinstance(seed, int) else None, anova=anova, bonferroni=bonferroni, theory=theory,
    )


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    statistics: TestStatistics
    thresholds: CalibratedThresholds
    reject_psi1: bool
    reject_psi2: bool
    reject_psi3: bool
    reject_sss: bool = False
    reject_sssa: bool = False
    hc_score: Optional[float] = None
    reject_hc: Optional[bool] = None

    def __post_init__(self):
        object.__setattr__(self, "reject_sss", bool(self.reject_psi1 or self.reject_psi2))
        object.__setattr__(self, "reject_sssa", bool(self.reject_sss or self.reject_psi3))

    def to_dict(self) -> dict:
        return {
            "statistics": self.statistics.to_dict(),
            "thresholds": self.thresholds.to_dict(),
            "reject_psi1": self.reject_psi1,
            "reject_psi2": self.reject_psi2,
            "reject_psi3": self.reject_psi3,
            "reject_sss": self.reject_sss,
            "reject_sssa": self.reject_sssa,
            "hc_score": None if self.hc_score is None or not np.isfinite(self.hc_score) else self.hc_score,
            "reject_hc": self.reject_hc,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def decide(stats: TestStatistics, th: CalibratedThresholds, decided: Optional[bool] = None):
    """Reject flags (psi1, psi2, psi3) for statistics against thresholds."""
    lam = stats.lambda_max - stats.trace_term if th.theory else stats.lambda_max
    psi2 = decided if decided is not None else stats.sparse_eig > th.tau_n_prime
    return bool(lam > th.tau_n), bool(psi2), bool(stats.anova_t > th.tau_n_dprime)


def check_thresholds(th: CalibratedThresholds, n: int, p: int, H: int, ks: int) -> None:
    got = {"n": n, "p": p, "H": H, "ks": ks}
    want = {"n": th.n, "p": th.p, "H": th.H, "ks": th.ks}
    bad = {k: (want[k], got[k]) for k in got if want[k] != got[k]}
    if bad:
        detail = ", ".join(f"{k}: calibrated {a}, data {b}" for k, (a, b) in bad.items())
        raise ThresholdMismatch(f"thresholds do not match the dataset ({detail})")


def run_test(
    dataset: Dataset,
    thresholds: CalibratedThresholds,
    H: Optional[int] = None,
    ks: Optional[int] = None,
    sdp: Optional[SdpSettings] = None,
    mode=None,
    with_hc: bool = True,
    early_stop: bool = True,
) -> TestOutcome:
    """Compute the statistics and compare them with calibrated thresholds.

    The relaxed sparse eigenvalue is solved only until its certified bracket
    clears ``tau_n_prime``, so ``statistics.sparse_eig`` may be loose while
    the psi2 decision is exact. ``early_stop=False`` solves it fully.
    """
    th = thresholds
    H = th.H if H is None else H
    ks = th.ks if ks is None else ks
    check_thresholds(th, dataset.n, dataset.p, H, ks)
    mode = th.sparse_mode if mode is None else resolve_mode(mode, dataset.p, ks).value
    if mode != th.sparse_mode:
        raise ThresholdMismatch(f"thresholds were calibrated with mode {th.sparse_mode}, not {mode}")
    summary = slice_dataset(dataset.x, dataset.y, H)
    decided = None
    if mode == SparseMode.SDP.value:
        cut = th.tau_n_prime if early_stop else None
        sv = sparse_statistic(summary.lambda_hat, ks, mode, sdp, threshold=cut)
        decided = sv.decided
        stats = TestStatistics(
            lambda_max=top_eigenvalue(summary),
            sparse_eig=sv.value,
            sparse_mode=mode,
            anova_t=anova_statistic(dataset.y, th.anova),
            trace_term=trace_term(dataset.x),
            sparse_upper=sv.upper,
            sparse_converged=sv.converged,
        )
    else:
        stats = compute_statistics(dataset, H, ks, sdp, mode, th.anova, summary=summary)
    p1, p2, p3 = decide(stats, th, decided)
    hc_score = reject_hc = None
    if with_hc:
        hc_score = hc_statistic(dataset).hc_score
        reject_hc = bool(hc_score > th.c_hc)
    return TestOutcome(stats, th, p1, p2, p3, hc_score=hc_score, reject_hc=reject_hc)

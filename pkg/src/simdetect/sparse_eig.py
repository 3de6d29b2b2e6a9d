"""Sparsity-restricted top eigenvalue and its semidefinite relaxation.

``exact_sparse_eigenvalue`` enumerates principal submatrices.
``sdp_sparse_eigenvalue`` solves

    max tr(A M)  s.t.  M PSD, tr(M) = 1, sum |M_ij| <= ks

by ADMM, splitting the spectahedron and the l1 ball. For large ``p`` the
splitting runs on a working set of coordinates; the result is accepted once
the dual bound ``lambda_max(A - Y) + ks * max|Y|`` for the full problem is
within ``gap_tolerance`` of the primal value, otherwise the working set grows.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from math import comb
from typing import Optional, Tuple

import numpy as np
import scipy.sparse.linalg

from .errors import DidNotConverge, EnumerationTooLarge
from .projections import project_l1_ball, project_spectahedron

log = logging.getLogger(__name__)

MAX_SUBSETS = 10**6
_DENSE_EIG = 400


@dataclass(frozen=True)
class SdpSettings:
    max_iterations: int = 2000
    primal_tolerance: float = 1e-6
    dual_tolerance: float = 1e-6
    penalty: float = 1.0
    adaptive: bool = True
    # duality gap, relative to max |a_ij|
    gap_tolerance: float = 1e-6
    relaxation: float = 1.6
    working_set: Optional[int] = None
    check_every: int = 10

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if min(self.primal_tolerance, self.dual_tolerance, self.gap_tolerance) <= 0:
            raise ValueError("tolerances must be positive")
        if self.penalty <= 0:
            raise ValueError("penalty must be positive")


@dataclass
class SdpResult:
    value: float
    m_matrix: np.ndarray
    iterations: int
    converged: bool
    residuals: Tuple[float, float]
    upper_bound: float = float("nan")
    working_set: int = 0
    # set when the solve stopped because [value, upper_bound] cleared a threshold
    decided: Optional[bool] = None

    @property
    def gap(self) -> float:
        return self.upper_bound - self.value


def _lambda_max(a) -> float:
    return float(np.linalg.eigvalsh(a)[-1])


def exact_sparse_eigenvalue(a, ks: int, max_subsets: int = MAX_SUBSETS):
    """Max of lambda_max(A_S) over |S| = ks, with the lexicographically first maximizer.

    Returns ``(value, support)`` with a 0-based support tuple.
    """
    a = np.asarray(a, dtype=float)
    p = a.shape[0]
    ks = int(ks)
    if not 1 <= ks:
        raise ValueError("ks must be >= 1")
    if ks >= p:
        return _lambda_max(a), tuple(range(p))
    total = comb(p, ks)
    if total > max_subsets:
        raise EnumerationTooLarge(f"C({p}, {ks}) = {total} subsets exceeds {max_subsets}")

    best, best_support = -np.inf, None
    combos = itertools.combinations(range(p), ks)
    chunk = max(1, 200_000 // (ks * ks))
    while True:
        idx = np.fromiter(
            itertools.chain.from_iterable(itertools.islice(combos, chunk)), dtype=np.intp
        ).reshape(-1, ks)
        if idx.size == 0:
            break
        sub = a[idx[:, :, None], idx[:, None, :]]
        tops = np.linalg.eigvalsh(sub)[:, -1]
        i = int(np.argmax(tops))
        # strict comparison keeps the earliest (lexicographically smallest) support
        if tops[i] > best:
            best, best_support = float(tops[i]), tuple(int(j) for j in idx[i])
    return best, best_support


def soft_threshold(a, z: float):
    a = np.asarray(a, dtype=float)
    return np.sign(a) * np.maximum(np.abs(a) - z, 0.0)


def soft_threshold_bound(a, z: float, ks: int) -> float:
    """``lambda_max(st_z(A)) + ks * z``, an upper bound on the relaxed value."""
    if z < 0:
        raise ValueError("z must be nonnegative")
    return _lambda_max(soft_threshold(a, z)) + ks * z


def truncated_power(a, k: int, iterations: int = 100):
    """Unit vector with ``k`` nonzeros from the truncated power method."""
    p = a.shape[0]
    k = min(int(k), p)
    _, v = _top_pair(a)
    support = None
    for _ in range(iterations):
        w = a @ v
        new = np.sort(np.argsort(-np.abs(w), kind="stable")[:k])
        u = np.zeros(p)
        u[new] = w[new]
        nrm = np.linalg.norm(u)
        if nrm == 0.0:
            u[new] = 1.0
            nrm = np.sqrt(k)
        v = u / nrm
        if support is not None and np.array_equal(new, support):
            break
        support = new
    return v


def _top_pair(b):
    """Largest eigenpair of a symmetric matrix (Lanczos with a fixed start)."""
    p = b.shape[0]
    if p <= _DENSE_EIG:
        vals, vecs = np.linalg.eigh(b)
        return vals[-1], vecs[:, -1]
    vals, vecs = scipy.sparse.linalg.eigsh(b, k=1, which="LA", v0=np.ones(p), tol=1e-12)
    return vals[0], vecs[:, 0]


def _make_feasible(m, a_diag, ks):
    """Mix with e_i e_i^T until the l1 constraint holds; keeps PSD and unit trace."""
    l1 = np.abs(m).sum()
    if l1 <= ks:
        return m
    i = int(np.argmax(a_diag))
    t = (l1 - ks) / (l1 - 1.0)
    out = (1.0 - t) * m
    out[i, i] += t
    return out


class _Admm:
    """ADMM state for the relaxation restricted to one working set."""

    def __init__(self, a, ks, settings, z, u, rho):
        self.a, self.ks, self.settings = a, ks, settings
        self.z, self.u, self.rho = z, u, rho
        self.m = z
        self.rank = 1
        self.residuals = (np.inf, np.inf)

    def run(self, budget, gap_target, cut=None):
        st = self.settings
        a, ks, alpha = self.a, self.ks, st.relaxation
        done = 0
        converged = False
        while done < budget:
            m, self.rank = project_spectahedron(self.z - self.u + a / self.rho, self.rank)
            mh = alpha * m + (1.0 - alpha) * self.z
            z_old = self.z
            self.z = project_l1_ball(mh + self.u, ks, hint=4 * max(np.count_nonzero(z_old), 16))
            self.u = self.u + mh - self.z
            self.m = m
            done += 1
            r = float(np.linalg.norm(m - self.z))
            s = float(self.rho * np.linalg.norm(self.z - z_old))
            self.residuals = (r, s)
            if r <= st.primal_tolerance and s <= st.dual_tolerance:
                converged = True
                break
            if done % st.check_every == 0:
                lower, upper = self.bounds()
                if upper - lower <= gap_target:
                    converged = True
                    break
                # block bound clears the cut from below: the full problem can still exceed it
                if cut is not None and lower > cut:
                    converged = True
                    break
            if st.adaptive:
                if r > 10.0 * s:
                    self.rho *= 2.0
                    self.u /= 2.0
                elif s > 10.0 * r:
                    self.rho /= 2.0
                    self.u *= 2.0
        return done, converged

    def feasible(self):
        return _make_feasible(self.m, np.diag(self.a), self.ks)

    def dual(self):
        return self.rho * self.u

    def bounds(self):
        y = self.dual()
        upper = _lambda_max(self.a - y) + self.ks * np.abs(y).max()
        return float(np.sum(self.a * self.feasible())), upper

    def gap(self):
        lower, upper = self.bounds()
        return upper - lower


def sdp_sparse_eigenvalue(
    a,
    ks,
    settings: Optional[SdpSettings] = None,
    strict: bool = True,
    threshold: Optional[float] = None,
) -> SdpResult:
    """Relaxed sparse eigenvalue of a symmetric matrix.

    Raises :class:`DidNotConverge` (carrying the feasible best iterate) when
    the iteration budget runs out, unless ``strict`` is false, in which case
    the result is returned with ``converged=False``.

    With ``threshold`` the solve stops as soon as the certified interval
    ``[value, upper_bound]`` lies entirely above or at/below it; ``decided``
    then records ``value > threshold`` and the value itself may be loose.
    """
    st = settings or SdpSettings()
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("a must be a square matrix")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise ValueError("a must be symmetric")
    if ks < 1:
        raise ValueError("ks must be >= 1")
    a = 0.5 * (a + a.T)
    p = a.shape[0]

    scale = float(np.abs(a).max())
    if scale == 0.0:
        m = np.zeros((p, p))
        m[0, 0] = 1.0
        return SdpResult(0.0, m, 0, True, (0.0, 0.0), upper_bound=0.0, working_set=p)

    lam, vec = _top_pair(a)
    # the unrestricted optimum vv^T is feasible when ||v||_1^2 <= ks (always if ks >= p)
    if np.abs(vec).sum() ** 2 <= ks:
        m = np.outer(vec, vec)
        return SdpResult(float(np.sum(a * m)), m, 0, True, (0.0, 0.0), upper_bound=float(lam), working_set=p)

    an = a / scale
    gap_tol = st.gap_tolerance

    v0 = truncated_power(an, int(ks))
    m0 = st.working_set or max(8 * int(ks), 64)
    if p <= m0:
        work = np.arange(p)
    else:
        by_diag = np.argsort(-np.diag(an), kind="stable")[:m0]
        work = np.union1d(by_diag, np.flatnonzero(v0))

    cut = None if threshold is None else float(threshold) / scale
    decided = None
    vt = v0[work]
    solver = _Admm(an[np.ix_(work, work)], ks, st, np.outer(vt, vt), np.zeros((work.size,) * 2), st.penalty)
    used = 0
    converged = False
    upper = np.inf
    full_gap = np.inf
    while True:
        # no point solving the block far beyond what the full certificate shows
        target = max(gap_tol / 2.0, 0.2 * full_gap) if np.isfinite(full_gap) else gap_tol / 2.0
        done, inner_ok = solver.run(st.max_iterations - used, target, cut)
        used += done
        lower = float(np.sum(solver.a * solver.feasible()))
        y = solver.dual()
        zmax = float(np.abs(y).max())
        if work.size == p:
            upper = _lambda_max(an - y) + ks * zmax
            converged = inner_ok or upper - lower <= gap_tol
            if cut is not None and (lower > cut or upper <= cut):
                decided, converged = lower > cut, True
            break
        y_full = np.clip(an, -zmax, zmax)
        y_full[np.ix_(work, work)] = y
        b = an - y_full
        ritz, u = _top_pair(b)
        upper = ritz + ks * zmax
        if cut is not None and lower > cut:
            decided, converged = True, True
            break
        if upper - lower <= gap_tol or (cut is not None and upper <= cut):
            # Lanczos values sit below lambda_max; confirm with a dense solve
            upper = _lambda_max(b) + ks * zmax
            if cut is not None and upper <= cut:
                decided, converged = False, True
                break
            if upper - lower <= gap_tol:
                converged = True
                break
        full_gap = upper - lower
        if used >= st.max_iterations:
            upper = _lambda_max(b) + ks * zmax
            break
        outside = np.setdiff1d(np.arange(p), work)
        grow = max(10, work.size // 4)
        add = outside[np.argsort(-np.abs(u[outside]), kind="stable")[:grow]]
        new_work = np.union1d(work, add)
        pos = np.searchsorted(new_work, work)
        size = new_work.size
        z = np.zeros((size, size))
        uu = np.zeros((size, size))
        z[np.ix_(pos, pos)] = solver.z
        uu[np.ix_(pos, pos)] = solver.u
        solver = _Admm(an[np.ix_(new_work, new_work)], ks, st, z, uu, solver.rho)
        log.debug("working set %d -> %d (gap %.3e)", work.size, size, upper - lower)
        work = new_work

    m_work = solver.feasible()
    m = np.zeros((p, p))
    m[np.ix_(work, work)] = m_work
    value = float(np.sum(a[np.ix_(work, work)] * m_work))
    result = SdpResult(
        value=value,
        m_matrix=m,
        iterations=used,
        converged=converged,
        residuals=solver.residuals,
        upper_bound=upper * scale,
        working_set=int(work.size),
        decided=decided,
    )
    log.debug(
        "sdp p=%d ks=%s value=%.6g gap=%.2e iterations=%d working_set=%d",
        p, ks, value, result.gap, used, work.size,
    )
    if not converged and strict:
        raise DidNotConverge(result)
    return result

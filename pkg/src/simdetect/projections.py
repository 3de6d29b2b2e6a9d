"""Euclidean projections onto the simplex, the l1 ball and the spectahedron."""

import numpy as np
import scipy.linalg


def _shift(u_desc, radius):
    """Sort-and-shift threshold for a descending array ``u_desc``."""
    css = np.cumsum(u_desc) - radius
    ind = np.arange(1, u_desc.size + 1)
    rho = np.flatnonzero(u_desc * ind > css)[-1]
    return css[rho] / (rho + 1.0)


def project_simplex(v, radius=1.0):
    """Project ``v`` onto {w >= 0, sum(w) = radius}."""
    v = np.asarray(v, dtype=float)
    theta = _shift(np.sort(v)[::-1], radius)
    return np.maximum(v - theta, 0.0)


def simplex_threshold(values, radius=1.0):
    return _shift(np.sort(np.asarray(values, dtype=float))[::-1], radius)


def l1_threshold(a, radius, hint=None):
    """Threshold ``theta`` with sum(max(a - theta, 0)) = radius, for a >= 0.

    Only the largest entries can survive the shift, so the sort runs on a
    candidate block that is enlarged until every excluded entry sits below
    the threshold.
    """
    size = a.size
    k = size if hint is None else min(size, max(int(hint), 64))
    while True:
        if k >= size:
            return _shift(np.sort(a)[::-1], radius)
        part = np.partition(a, size - k)
        theta = _shift(np.sort(part[size - k:])[::-1], radius)
        if part[: size - k].max() <= theta:
            return theta
        k *= 4


def project_l1_ball(v, radius, hint=None):
    """Project ``v`` (any shape) onto {w : sum|w| <= radius}."""
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    theta = l1_threshold(a.ravel(), radius, hint)
    return np.sign(v) * np.maximum(a - theta, 0.0)


def project_spectahedron(w, rank_hint=None):
    """Project a symmetric matrix onto {M PSD, tr(M) = 1}.

    Returns ``(M, rank)``. For larger matrices only the top eigenpairs are
    computed; the result is exact once the smallest computed eigenvalue is at
    or below the simplex threshold.
    """
    m = w.shape[0]
    b = m if (rank_hint is None or m <= 64) else min(m, rank_hint + 8)
    while True:
        if b >= m:
            vals, vecs = np.linalg.eigh(w)
        else:
            vals, vecs = scipy.linalg.eigh(w, subset_by_index=[m - b, m - 1], driver="evr")
        theta = simplex_threshold(vals)
        if b >= m or vals[0] <= theta:
            break
        b = min(m, 2 * b + 8)
    lam = np.maximum(vals - theta, 0.0)
    keep = lam > 0
    vecs = vecs[:, keep]
    return (vecs * lam[keep]) @ vecs.T, int(keep.sum())

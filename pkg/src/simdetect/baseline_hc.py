"""Correlation-based Higher Criticism, the comparison method in the power studies."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import DegenerateResponse

# p-values below this are clamped so the HC denominator stays positive
P_FLOOR = 1e-300


@dataclass(frozen=True)
class HcResult:
    t_stats: np.ndarray
    p_values: np.ndarray
    hc_score: float
    threshold_index: int  # 1-based order statistic attaining the max, 0 if none is eligible

    def to_dict(self) -> dict:
        return {
            "hc_score": None if not np.isfinite(self.hc_score) else float(self.hc_score),
            "threshold_index": int(self.threshold_index),
            "t_stats": self.t_stats.tolist(),
            "p_values": self.p_values.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def two_sided_p(t):
    """2 * Phi(-|t|), via the complementary error function."""
    return erfc(np.abs(np.asarray(t, dtype=float)) / np.sqrt(2.0))


def marginal_t(x, y):
    y = np.asarray(y, dtype=float).ravel()
    ss = float(y @ y)
    if ss == 0.0:
        raise DegenerateResponse("response is identically zero")
    return (np.asarray(x, dtype=float).T @ y) / np.sqrt(ss)


def hc_from_pvalues(p_values):
    """Return ``(score, index)``; the max runs over sorted p-values at most 1/2."""
    m = np.sort(np.clip(np.asarray(p_values, dtype=float), P_FLOOR, 1.0))
    p = m.size
    eligible = m <= 0.5
    if not eligible.any():
        return -np.inf, 0
    # sorted, so the eligible entries are a prefix
    me = m[eligible]
    i = np.arange(1, me.size + 1)
    score = np.sqrt(p) * (i / p - me) / np.sqrt(me * (1.0 - me))
    j = int(np.argmax(score))
    return float(score[j]), j + 1


def hc_statistic(dataset) -> HcResult:
    t = marginal_t(dataset.x, dataset.y)
    pv = two_sided_p(t)
    score, idx = hc_from_pvalues(pv)
    return HcResult(t_stats=t, p_values=pv, hc_score=score, threshold_index=idx)


def hc_test(dataset, c_hc: float) -> bool:
    return bool(hc_statistic(dataset).hc_score > c_hc)

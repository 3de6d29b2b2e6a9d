"""Seeded, parallel power simulation.

The run has three phases:

1. null draws for every calibration group (pooled mode only);
2. thresholds per group, tightening the sparse-eigenvalue quantile;
3. one task per (cell, replication): generate data, test, record.

Every task seeds its own generator from ``(master_seed, stream, ...)`` via
``numpy.random.SeedSequence`` spawn keys, and results are merged by key, so
the report does not depend on the number of workers or on task order.

Pooled calibration draws fresh covariates for each null replication instead
of reusing an alternative's ``x``. Cells whose null distribution is the same
(same n, covariance, H and ks) then share one pool of null draws.
"""

from __future__ import annotations

import json
import logging
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..detect import (
    CalibratedThresholds,
    CalibrationMode,
    NullDraw,
    calibrate,
    null_draw,
    run_test,
    thresholds_from_draws,
)
from ..errors import SimDetectError
from ..models import NULL_BLOCK, CovKind, Dataset, choose_support, generate, sample_beta, sample_covariates
from . import reference
from .config import Cell, ExperimentConfig

log = logging.getLogger(__name__)

CELL_STREAM = 0
NULL_STREAM = 1
BETA_STREAM = 2
CALIBRATION_STREAM = 3


def cell_seed(master: int, cell: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(CELL_STREAM, cell, rep))


def null_seed(master: int, group: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(NULL_STREAM, group, rep))


def group_key(config: ExperimentConfig, cell: Cell) -> dict:
    """Everything the null distribution of the statistics depends on."""
    key = {
        "n": config.n,
        "covariance": cell.cov.to_dict(),
        "H": config.H,
        "ks": config.ks_for(cell.model),
        "sparse_mode": config.sparse_mode.value,
        "anova": config.anova.value,
    }
    if cell.cov.kind is CovKind.BLOCKED:
        key["support"] = [cell.model.s, cell.model.support.value]
    return key


def group_id(key: dict) -> int:
    return zlib.crc32(json.dumps(key, sort_keys=True).encode())


# ---- tasks (module level so they pickle) ----


def _null_task(args) -> Tuple[Optional[NullDraw], Optional[str]]:
    config, cell, gid, rep = args
    try:
        rng = np.random.default_rng(null_seed(config.master_seed, gid, rep))
        support = choose_support(cell.model, cell.cov.p, rng) if cell.model.s else np.arange(0)
        if cell.cov.kind is CovKind.BLOCKED and support.size == 0:
            support = np.arange(min(NULL_BLOCK, cell.cov.p - 1))
        x = sample_covariates(cell.cov, config.n, rng, support)
        ks = config.ks_for(cell.model)
        return null_draw(x, rng, config.H, ks, config.sparse_mode, config.sdp, config.anova), None
    except SimDetectError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _cell_beta(config: ExperimentConfig, cell: Cell) -> Optional[np.ndarray]:
    if not config.fix_beta or cell.model.s == 0:
        return None
    rng = np.random.default_rng(np.random.SeedSequence(config.master_seed, spawn_key=(BETA_STREAM, cell.index)))
    return sample_beta(cell.model, cell.cov.p, rng)


def replicate_dataset(config: ExperimentConfig, cell: Cell, rep: int) -> Dataset:
    """The data of replication ``rep`` in ``cell``, reproducible on its own."""
    rng = np.random.default_rng(cell_seed(config.master_seed, cell.index, rep))
    return generate(cell.model, cell.cov, config.n, rng, beta=_cell_beta(config, cell))


def _rep_task(args) -> dict:
    config, cell, rep, thresholds = args
    record = {"cell": cell.index, "rep": rep}
    try:
        ds = replicate_dataset(config, cell, rep)
        ks = config.ks_for(cell.model)
        if thresholds is None:
            seed = np.random.SeedSequence(config.master_seed, spawn_key=(CALIBRATION_STREAM, cell.index, rep))
            thresholds = calibrate(
                ds.x, config.H, ks, config.sdp, config.level, config.null_replications or 100,
                CalibrationMode.PER_DATASET, seed, config.sparse_mode, config.anova, config.bonferroni,
            )
        out = run_test(
            ds, thresholds, config.H, ks, config.sdp, config.sparse_mode,
            with_hc="HC" in config.methods, early_stop=not config.record_values,
        )
    except SimDetectError as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
        return record
    st = out.statistics
    record.update(
        lambda_max=st.lambda_max,
        sparse_eig=st.sparse_eig,
        sparse_upper=st.sparse_upper,
        sparse_converged=st.sparse_converged,
        anova_t=st.anova_t,
        hc_score=out.hc_score if out.hc_score is None or np.isfinite(out.hc_score) else None,
        reject={
            "psi1": out.reject_psi1,
            "psi2": out.reject_psi2,
            "psi3": out.reject_psi3,
            "SSS": out.reject_sss,
            "SSSa": out.reject_sssa,
            "HC": out.reject_hc,
        },
    )
    return record


# ---- execution ----


def _limit_threads():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return
    threadpool_limits(1)


class _Pool:
    """``map`` over a process pool, or in-process for one worker."""

    def __init__(self, workers: int):
        self.workers = max(1, int(workers))
        self.executor = None
        if self.workers > 1:
            self.executor = ProcessPoolExecutor(self.workers, initializer=_limit_threads)

    def map(self, fn: Callable, items: Sequence) -> List:
        items = list(items)
        if self.executor is None or len(items) <= 1:
            return [fn(x) for x in items]
        return list(self.executor.map(fn, items, chunksize=1))

    def close(self):
        if self.executor is not None:
            self.executor.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class PowerReport:
    config: ExperimentConfig
    cells: List[Cell]
    rows: List[dict] = field(default_factory=list)
    records: Dict[int, List[dict]] = field(default_factory=dict)
    null_records: Dict[int, List[dict]] = field(default_factory=dict)
    thresholds: Dict[int, dict] = field(default_factory=dict)
    groups: Dict[int, dict] = field(default_factory=dict)
    failures: List[dict] = field(default_factory=list)
    flags: List[reference.Flag] = field(default_factory=list)
    elapsed: float = 0.0

    def power(self, method: str, **label) -> float:
        """Power of ``method`` in the single row matching ``label``."""
        hits = [r for r in self.rows if r["method"] == method and all(r[k] == v for k, v in label.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {method} {label}")
        return hits[0]["power"]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "rows": self.rows,
            "thresholds": {str(k): v for k, v in sorted(self.thresholds.items())},
            "groups": {str(k): v for k, v in sorted(self.groups.items())},
            "failures": self.failures,
            "flags": [f.to_dict() for f in self.flags],
        }


def _null_record(d: NullDraw) -> dict:
    return {
        "lambda_max": d.lambda_max,
        "sparse_eig": d.sparse.value,
        "sparse_upper": d.sparse.upper,
        "anova_t": d.anova_t,
        "hc_score": d.hc_score if np.isfinite(d.hc_score) else None,
        "trace_term": d.trace_term,
    }


def run_experiment(
    config: ExperimentConfig,
    workers: int = 1,
    select: Optional[Callable[[Cell], bool]] = None,
) -> PowerReport:
    """Run every cell (or those accepted by ``select``) of ``config``.

    Cell indices, and therefore seeds, always refer to the full sweep, so a
    selected subset reproduces the corresponding cells of a full run.
    """
    t0 = time.perf_counter()
    cells = [c for c in config.cells() if select is None or select(c)]
    report = PowerReport(config, cells)
    pooled = config.calibration_mode is CalibrationMode.POOLED
    cell_error: Dict[int, str] = {}

    # calibration groups, in order of first appearance
    gid_of: Dict[int, int] = {}
    first_cell: Dict[int, Cell] = {}
    null_count: Dict[int, int] = {}
    for cell in cells:
        try:
            key = group_key(config, cell)
        except (SimDetectError, ValueError) as exc:
            cell_error[cell.index] = f"{type(exc).__name__}: {exc}"
            continue
        gid = group_id(key)
        gid_of[cell.index] = gid
        report.groups.setdefault(gid, key)
        first_cell.setdefault(gid, cell)
        null_count[gid] = max(null_count.get(gid, 0), config.null_replications or cell.replications)

    with _Pool(workers) as pool:
        thresholds: Dict[int, CalibratedThresholds] = {}
        group_error: Dict[int, str] = {}
        if pooled:
            tasks = [(config, first_cell[g], g, r) for g in first_cell for r in range(null_count[g])]
            results = pool.map(_null_task, tasks)
            by_group: Dict[int, List[Tuple[Optional[NullDraw], Optional[str]]]] = {}
            for (_, _, g, _), res in zip(tasks, results):
                by_group.setdefault(g, []).append(res)
            for g, res in by_group.items():
                errors = [e for _, e in res if e]
                if errors:
                    group_error[g] = errors[0]
                    continue
                draws = [d for d, _ in res]
                report.null_records[g] = [_null_record(d) for d in draws]
                cell = first_cell[g]
                try:
                    thresholds[g] = thresholds_from_draws(
                        draws,
                        level=config.level,
                        n=config.n,
                        p=cell.cov.p,
                        H=config.H,
                        ks=config.ks_for(cell.model),
                        sparse_mode=config.sparse_mode,
                        mode=CalibrationMode.POOLED,
                        seed=config.master_seed,
                        anova=config.anova,
                        bonferroni=config.bonferroni,
                        map_fn=pool.map,
                    )
                except (SimDetectError, ValueError) as exc:
                    group_error[g] = f"{type(exc).__name__}: {exc}"
                    continue
                report.thresholds[g] = thresholds[g].to_dict()
            for cell in cells:
                g = gid_of.get(cell.index)
                if g in group_error:
                    cell_error.setdefault(cell.index, "calibration failed: " + group_error[g])

        tasks = [
            (config, cell, r, thresholds.get(gid_of[cell.index]) if pooled else None)
            for cell in cells
            if cell.index not in cell_error
            for r in range(cell.replications)
        ]
        records = pool.map(_rep_task, tasks)

    for rec in records:
        report.records.setdefault(rec["cell"], []).append(rec)
    for cell in cells:
        recs = report.records.get(cell.index, [])
        errs = [r["error"] for r in recs if "error" in r]
        if errs and cell.index not in cell_error:
            cell_error[cell.index] = f"{len(errs)} of {len(recs)} replications failed; first: {errs[0]}"
        label = cell.label()
        if cell.index in cell_error:
            report.failures.append({"cell": cell.index, **label, "error": cell_error[cell.index]})
            continue
        for method in config.methods:
            hits = sum(bool(r["reject"][method]) for r in recs)
            report.rows.append(
                {
                    **label,
                    "method": method,
                    "power": hits / len(recs),
                    "rejections": hits,
                    "replications": len(recs),
                    "master_seed": config.master_seed,
                    "cell": cell.index,
                }
            )
    if config.reference == "table1":
        report.flags = reference.check_rows(r for r in report.rows if r["replications"] > 0)
    report.elapsed = time.perf_counter() - t0
    log.info("%s: %d cells, %d failures, %d flags, %.1fs", config.name, len(cells), len(report.failures), len(report.flags), report.elapsed)
    return report

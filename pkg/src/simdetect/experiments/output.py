"""Write a PowerReport to disk: power table, raw statistics and plot data."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Dict, List, Tuple

from .runner import PowerReport

COLUMNS = ["model", "p", "rho", "cov_type", "kappa", "method", "power", "replications", "master_seed"]
LABEL_KEYS = ("model", "p", "rho", "cov_type", "kappa")


def _num(v) -> str:
    return f"{v:g}" if isinstance(v, float) else str(v)


def power_table_csv(report: PowerReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in report.rows:
        w.writerow([f"{row['power']:.4f}" if k == "power" else _num(row[k]) for k in COLUMNS])
    return buf.getvalue()


def _x_axis(report: PowerReport) -> str:
    """The swept label that plots go along: the last numeric sweep axis, else ``p``."""
    for sweep in reversed(report.config.sweep):
        if sweep.parameter in ("kappa", "rho", "p") and len(sweep.values) > 1:
            return sweep.parameter
    return "p"


def curves(report: PowerReport) -> Dict[Tuple, List[Tuple[float, float]]]:
    """Power curves keyed by (method, other label values), points sorted by x."""
    x = _x_axis(report)
    out: Dict[Tuple, List[Tuple[float, float]]] = {}
    for row in report.rows:
        key = (row["method"],) + tuple((k, row[k]) for k in LABEL_KEYS if k != x)
        out.setdefault(key, []).append((row[x], row["power"]))
    return {k: sorted(v) for k, v in out.items()}


def _curve_name(key: Tuple, x: str) -> str:
    method, *rest = key
    parts = [method, "vs", x] + [f"{k}{_num(v)}" for k, v in rest]
    return "_".join(parts).replace(".", "p") + ".tsv"


def _jsonl(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def emit_outputs(report: PowerReport, directory) -> List[Path]:
    """Write outputs below ``directory`` and return the paths written.

    ``power_table.csv`` and ``report.json`` are byte-identical across reruns
    with the same config; ``run_info.json`` holds the wall time.
    """
    out = Path(directory)
    (out / "raw").mkdir(parents=True, exist_ok=True)
    (out / "plots").mkdir(parents=True, exist_ok=True)
    written = []

    def put(rel: str, text: str):
        path = out / rel
        path.write_text(text)
        written.append(path)

    put("power_table.csv", power_table_csv(report))
    put("report.json", json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    put("run_info.json", json.dumps({"elapsed_seconds": round(report.elapsed, 3)}) + "\n")

    for cell in report.cells:
        recs = sorted(report.records.get(cell.index, []), key=lambda r: r["rep"])
        put(f"raw/cell_{cell.index:04d}.jsonl", _jsonl({**cell.label(), **r} for r in recs))
    for gid, recs in sorted(report.null_records.items()):
        put(f"raw/null_{gid:010d}.jsonl", _jsonl(recs))

    x = _x_axis(report)
    for key, points in sorted(curves(report).items(), key=lambda kv: repr(kv[0])):
        put("plots/" + _curve_name(key, x), f"{x}\tpower\n" + "".join(f"{_num(a)}\t{b:.4f}\n" for a, b in points))

    # per-replication statistic values, for histograms of null against alternative
    for stat in ("sparse_eig", "lambda_max", "hc_score"):
        for cell in report.cells:
            recs = sorted(report.records.get(cell.index, []), key=lambda r: r["rep"])
            vals = [r.get(stat) for r in recs if r.get(stat) is not None]
            if vals:
                put(f"plots/values_{stat}_cell{cell.index:04d}.tsv", "rep\tvalue\n" + "".join(f"{i}\t{v!r}\n" for i, v in enumerate(vals)))
        for gid, recs in sorted(report.null_records.items()):
            vals = [r.get(stat) for r in recs if r.get(stat) is not None]
            if vals:
                put(f"plots/values_{stat}_null{gid:010d}.tsv", "rep\tvalue\n" + "".join(f"{i}\t{v!r}\n" for i, v in enumerate(vals)))
    return written

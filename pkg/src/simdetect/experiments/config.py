"""Experiment configuration: TOML files, sweeps, profiles and cell expansion.

A config file has these tables::

    [experiment]   name, n, replications, level, H, k, ks, calibration_mode,
                   methods, master_seed, sparse_mode, null_replications,
                   fix_beta, record_values, reference
    [sdp]          any SdpSettings field
    [model]        any ModelSpec field (link, s, support, kappa, sigma_eps, normalize_beta)
    [covariance]   any CovarianceSpec field (kind, p, rho, cross)
    [[sweep]]      either ``parameter`` + ``values`` (one axis of a cartesian
                   product) or ``cases`` (a list of tables applied together)
    [profiles.<name>]
                   experiment keys to override, plus ``sweep_values`` (a table
                   of parameter -> values replacing an axis) and
                   ``[[profiles.<name>.override]]`` entries with a ``match``
                   table and per-cell ``replications``

Sweeps expand in file order, the last axis varying fastest.
"""

from __future__ import annotations

import itertools
import json
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..detect import Anova, CalibrationMode, SparseMode
from ..models import CovarianceSpec, ModelSpec
from ..sir import DEFAULT_SLICES
from ..sparse_eig import SdpSettings

CONFIG_DIR = Path(__file__).parent / "configs"
METHODS = ("SSS", "SSSa", "HC", "psi1", "psi2", "psi3")
MODEL_KEYS = {f.name for f in fields(ModelSpec)}
COV_KEYS = {f.name for f in fields(CovarianceSpec)}


@dataclass(frozen=True)
class Sweep:
    parameter: Optional[str] = None
    values: Tuple = ()
    cases: Tuple[Tuple[Tuple[str, Any], ...], ...] = ()

    def __post_init__(self):
        if (self.parameter is None) == (not self.cases):
            raise ValueError("a sweep needs either parameter/values or cases")
        for key in self.keys():
            if key not in MODEL_KEYS | COV_KEYS:
                raise ValueError(f"sweep parameter {key!r} is not a model or covariance field")

    def keys(self):
        if self.parameter is not None:
            return [self.parameter]
        return sorted({k for case in self.cases for k, _ in case})

    def points(self) -> List[Dict[str, Any]]:
        if self.parameter is not None:
            return [{self.parameter: v} for v in self.values]
        return [dict(case) for case in self.cases]

    @classmethod
    def from_dict(cls, d: dict) -> "Sweep":
        if "cases" in d:
            return cls(cases=tuple(tuple(sorted(c.items())) for c in d["cases"]))
        return cls(parameter=d["parameter"], values=tuple(d["values"]))


@dataclass(frozen=True)
class CellOverride:
    match: Tuple[Tuple[str, Any], ...]
    replications: int

    def applies(self, point: Dict[str, Any]) -> bool:
        return all(point.get(k) == v for k, v in self.match)


@dataclass(frozen=True)
class Cell:
    """One point of the sweep. ``index`` is its position in the full expansion."""

    index: int
    model: ModelSpec
    cov: CovarianceSpec
    replications: int

    def label(self) -> dict:
        return {
            "model": self.model.link.value,
            "p": self.cov.p,
            "rho": self.cov.rho,
            "cov_type": self.cov.cov_type,
            "kappa": self.model.kappa,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    model: ModelSpec = field(default_factory=ModelSpec)
    cov: CovarianceSpec = field(default_factory=CovarianceSpec)
    n: int = 1000
    replications: int = 100
    level: float = 0.05
    H: int = DEFAULT_SLICES
    k: int = 1
    ks: Optional[int] = None  # overrides k * s, needed for null-only experiments
    calibration_mode: CalibrationMode = CalibrationMode.POOLED
    methods: Tuple[str, ...] = ("SSS", "SSSa", "HC")
    sweep: Tuple[Sweep, ...] = ()
    master_seed: int = 0
    sparse_mode: SparseMode = SparseMode.SDP
    sdp: SdpSettings = field(default_factory=lambda: SdpSettings(gap_tolerance=1e-2, max_iterations=3000))
    null_replications: Optional[int] = None
    fix_beta: bool = False
    record_values: bool = False
    anova: Anova = Anova.RAW
    bonferroni: bool = False
    reference: Optional[str] = None
    overrides: Tuple[CellOverride, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "calibration_mode", CalibrationMode(self.calibration_mode))
        object.__setattr__(self, "sparse_mode", SparseMode(self.sparse_mode))
        object.__setattr__(self, "anova", Anova(self.anova))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}; choose from {METHODS}")

    @property
    def p(self) -> int:
        return self.cov.p

    def ks_for(self, model: ModelSpec) -> int:
        if self.ks is not None:
            return int(self.ks)
        ks = self.k * model.s
        if ks < 1:
            raise ValueError("ks is zero for a null model; set experiment.ks")
        return ks

    def cells(self) -> List[Cell]:
        axes = [s.points() for s in self.sweep] or [[{}]]
        out = []
        for i, combo in enumerate(itertools.product(*axes)):
            point: Dict[str, Any] = {}
            for part in combo:
                point.update(part)
            mkeys = {k: v for k, v in point.items() if k in MODEL_KEYS}
            ckeys = {k: v for k, v in point.items() if k in COV_KEYS}
            model = replace(self.model, **mkeys)
            if "link" in mkeys and "s" not in mkeys:
                # a new link brings its own default support size
                model = ModelSpec(**{**model.to_dict(), "link": mkeys["link"], "s": None})
            cov = replace(self.cov, **ckeys)
            reps = self.replications
            full = {**model.to_dict(), **cov.to_dict()}
            for ov in self.overrides:
                if ov.applies(full):
                    reps = ov.replications
            out.append(Cell(i, model, cov, reps))
        return out

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": self.model.to_dict(),
            "covariance": self.cov.to_dict(),
            "n": self.n,
            "replications": self.replications,
            "level": self.level,
            "H": self.H,
            "k": self.k,
            "ks": self.ks,
            "calibration_mode": self.calibration_mode.value,
            "methods": list(self.methods),
            "sweep": [
                {"parameter": s.parameter, "values": list(s.values)} if s.parameter else {"cases": [dict(c) for c in s.cases]}
                for s in self.sweep
            ],
            "master_seed": self.master_seed,
            "sparse_mode": self.sparse_mode.value,
            "sdp": {f.name: getattr(self.sdp, f.name) for f in fields(SdpSettings)},
            "null_replications": self.null_replications,
            "fix_beta": self.fix_beta,
            "record_values": self.record_values,
            "anova": self.anova.value,
            "bonferroni": self.bonferroni,
            "reference": self.reference,
            "overrides": [{"match": dict(o.match), "replications": o.replications} for o in self.overrides],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_EXPERIMENT_KEYS = {
    "name", "n", "replications", "level", "H", "k", "ks", "calibration_mode", "methods",
    "master_seed", "sparse_mode", "null_replications", "fix_beta", "record_values",
    "anova", "bonferroni", "reference",
}


def config_from_dict(doc: dict, profile: Optional[str] = None, **overrides) -> ExperimentConfig:
    exp = dict(doc.get("experiment", {}))
    unknown = set(exp) - _EXPERIMENT_KEYS
    if unknown:
        raise ValueError(f"unknown [experiment] keys: {sorted(unknown)}")
    sweeps = [Sweep.from_dict(s) for s in doc.get("sweep", [])]
    cell_overrides: List[CellOverride] = []
    if profile is not None:
        profiles = doc.get("profiles", {})
        if profile not in profiles:
            raise ValueError(f"profile {profile!r} not defined; have {sorted(profiles)}")
        prof = dict(profiles[profile])
        for param, values in prof.pop("sweep_values", {}).items():
            hit = [i for i, s in enumerate(sweeps) if s.parameter == param]
            if not hit:
                raise ValueError(f"profile {profile!r} sets values for {param!r}, which is not swept")
            sweeps[hit[0]] = Sweep(parameter=param, values=tuple(values))
        for ov in prof.pop("override", []):
            cell_overrides.append(CellOverride(tuple(sorted(ov["match"].items())), int(ov["replications"])))
        unknown = set(prof) - _EXPERIMENT_KEYS
        if unknown:
            raise ValueError(f"unknown keys in profile {profile!r}: {sorted(unknown)}")
        exp.update(prof)
    exp.update({k: v for k, v in overrides.items() if v is not None})
    if "methods" in exp:
        exp["methods"] = tuple(exp["methods"])
    return ExperimentConfig(
        model=ModelSpec(**doc.get("model", {})),
        cov=CovarianceSpec(**doc.get("covariance", {})),
        sdp=SdpSettings(**{"gap_tolerance": 1e-2, "max_iterations": 3000, **doc.get("sdp", {})}),
        sweep=tuple(sweeps),
        overrides=tuple(cell_overrides),
        **exp,
    )


def builtin_configs() -> List[str]:
    return sorted(p.stem for p in CONFIG_DIR.glob("*.toml"))


def resolve_path(name_or_path) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    cand = CONFIG_DIR / f"{name_or_path}.toml"
    if cand.exists():
        return cand
    raise FileNotFoundError(f"no config file {name_or_path!r}; built-in configs: {', '.join(builtin_configs())}")


def load_config(name_or_path, profile: Optional[str] = None, **overrides) -> ExperimentConfig:
    """Read a TOML config (a path or a built-in name) and apply a profile and overrides."""
    with open(resolve_path(name_or_path), "rb") as fh:
        doc = tomllib.load(fh)
    return config_from_dict(doc, profile, **overrides)

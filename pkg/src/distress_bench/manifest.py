"""Run manifest: one YAML file describing a whole pipeline run.

Every key is validated before any computation starts; unknown keys are
errors.  Paths are resolved relative to the manifest's directory.

Example::

    version: 1
    seed: 7
    output_dir: out
    data:
      synthetic: {seed: 7, n_firms: 150, years: [1990, 2001], base_hazard: 0.05}
    algorithms: [lasso, xgb_like]
    stages:
      - {name: structural, groups: [structural]}
      - {name: all, groups: [structural, accounting, market, industry, macro, text]}
    years: {first_data_year: 1990, first_test_year: 1997, last_test_year: 2001}
    periods: [full, dotcom]
    grids:
      lasso: {lam: [0.001, 0.01]}
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any, Mapping

import yaml

from .errors import ManifestError
from .evaluation import CRISIS_WINDOWS
from .models.registry import DEFAULTS, FAMILIES
from .panel import GROUPS
from .synthetic import SyntheticSpec

VERSION = 1

_TOP = {"version", "seed", "output_dir", "data", "impute", "algorithms", "stages", "years",
        "periods", "grids", "importance", "reduce", "credit", "report"}
_DATA = {"panel", "synthetic", "raw"}
_SYNTH = {"seed", "n_firms", "years", "base_hazard", "signal_weights", "noise_features",
          "groups", "missing_rate", "exit_rate", "persistence"}
_RAW = {"path", "synthesize", "floor_drift", "naive_dd"}
_RAW_SYNTH = {"seed", "n_firms", "years", "periods"}
_YEARS = {"first_data_year", "first_test_year", "last_test_year"}
_IMPORTANCE = {"repeats", "seed", "stage", "on", "top_n"}
_REDUCE = {"pca_threshold", "stage"}
_CREDIT = {"k_by_year", "k", "lgd", "market_size", "stage", "income_basis"}
_REPORT = {"winsorize"}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, Mapping):
        raise ManifestError(f"{where}: expected a mapping")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ManifestError(f"{where}: unknown keys {unknown}")


def _int(v, where):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ManifestError(f"{where}: expected an integer, got {v!r}")
    return v


def _num(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ManifestError(f"{where}: expected a number, got {v!r}")
    return float(v)


@dataclass(frozen=True)
class Stage:
    name: str
    groups: tuple[str, ...] | None = None
    features: tuple[str, ...] | None = None


@dataclass
class RunManifest:
    base_dir: str
    version: int = VERSION
    seed: int = 0
    output_dir: str = "out"
    panel_manifest: str | None = None
    synthetic: SyntheticSpec | None = None
    raw: dict[str, Any] | None = None
    impute: bool = True
    algorithms: list[str] = field(default_factory=lambda: list(FAMILIES))
    stages: list[Stage] = field(default_factory=list)
    first_data_year: int | None = None
    first_test_year: int | None = None
    last_test_year: int | None = None
    periods: dict[str, Any] = field(default_factory=lambda: {"full": "full"})
    grids: dict[str, dict[str, list]] = field(default_factory=dict)
    importance: dict[str, Any] = field(default_factory=dict)
    reduce: dict[str, Any] = field(default_factory=dict)
    credit: dict[str, Any] = field(default_factory=dict)
    report: dict[str, Any] = field(default_factory=dict)

    def path(self, p: str) -> str:
        return p if os.path.isabs(p) else os.path.normpath(os.path.join(self.base_dir, p))

    def stage(self, name: str | None) -> Stage:
        if name is None:
            return self.stages[-1]
        for s in self.stages:
            if s.name == name:
                return s
        raise ManifestError(f"unknown stage {name!r}")

    def grid(self, family: str):
        return self.grids.get(family)

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except FileNotFoundError:
            raise ManifestError(f"manifest not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ManifestError(f"manifest is not valid YAML: {exc}") from None
        return cls.from_dict(raw, os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_dict(cls, raw: Mapping, base_dir: str = ".") -> "RunManifest":
        _check_keys(raw, _TOP, "manifest")
        version = raw.get("version")
        if version != VERSION:
            raise ManifestError(f"manifest version must be {VERSION}, got {version!r}")
        m = cls(base_dir=base_dir)
        m.seed = _int(raw.get("seed", 0), "seed")
        m.output_dir = str(raw.get("output_dir", "out"))
        m.impute = bool(raw.get("impute", True))

        data = raw.get("data")
        if data is None:
            raise ManifestError("manifest needs a data section")
        _check_keys(data, _DATA, "data")
        if "panel" in data:
            m.panel_manifest = str(data["panel"])
        if "synthetic" in data:
            m.synthetic = _synthetic(data["synthetic"])
        if "raw" in data:
            _check_keys(data["raw"], _RAW, "data.raw")
            m.raw = dict(data["raw"])
            if "synthesize" in m.raw:
                _check_keys(m.raw["synthesize"], _RAW_SYNTH, "data.raw.synthesize")
            if ("path" in m.raw) == ("synthesize" in m.raw):
                raise ManifestError("data.raw needs exactly one of path or synthesize")
        if m.panel_manifest and m.synthetic:
            raise ManifestError("data: give either panel or synthetic, not both")

        algs = raw.get("algorithms", list(FAMILIES))
        if not isinstance(algs, list) or not algs:
            raise ManifestError("algorithms: expected a non-empty list")
        for a in algs:
            if a not in FAMILIES:
                raise ManifestError(f"algorithms: unknown family {a!r}")
        if len(set(algs)) != len(algs):
            raise ManifestError("algorithms: duplicates")
        m.algorithms = list(algs)

        stages = raw.get("stages", [{"name": "all", "groups": list(GROUPS)}])
        if not isinstance(stages, list) or not stages:
            raise ManifestError("stages: expected a non-empty list")
        for i, s in enumerate(stages):
            _check_keys(s, {"name", "groups", "features"}, f"stages[{i}]")
            if "name" not in s or ("groups" in s) == ("features" in s):
                raise ManifestError(f"stages[{i}]: needs a name and exactly one of groups/features")
            groups = s.get("groups")
            if groups is not None:
                bad = set(groups) - set(GROUPS)
                if bad:
                    raise ManifestError(f"stages[{i}]: unknown groups {sorted(bad)}")
            m.stages.append(Stage(str(s["name"]), tuple(groups) if groups else None,
                                  tuple(s["features"]) if "features" in s else None))
        if len({s.name for s in m.stages}) != len(m.stages):
            raise ManifestError("stages: duplicate names")

        years = raw.get("years")
        if years is not None:
            _check_keys(years, _YEARS, "years")
            for k in _YEARS:
                if k not in years:
                    raise ManifestError(f"years: missing {k}")
                setattr(m, k, _int(years[k], f"years.{k}"))
            if m.first_test_year < m.first_data_year + 3:
                raise ManifestError("years: first_test_year must be at least first_data_year + 3")
            if m.last_test_year < m.first_test_year:
                raise ManifestError("years: last_test_year precedes first_test_year")

        periods = raw.get("periods", ["full"])
        if isinstance(periods, list):
            periods = {p: p for p in periods}
        if not isinstance(periods, Mapping) or not periods:
            raise ManifestError("periods: expected a list of names or a mapping")
        for name, spec in periods.items():
            if isinstance(spec, str):
                if spec not in ("full", "non_crisis", *CRISIS_WINDOWS):
                    raise ManifestError(f"periods: unknown window {spec!r}")
            elif not (isinstance(spec, list) and all(isinstance(y, int) for y in spec)):
                raise ManifestError(f"periods.{name}: expected a window name or list of years")
        m.periods = dict(periods)

        grids = raw.get("grids", {})
        _check_keys(grids, set(FAMILIES), "grids")
        for fam, grid in grids.items():
            _check_keys(grid, set(DEFAULTS[fam]), f"grids.{fam}")
            for k, vals in grid.items():
                if not isinstance(vals, list) or not vals:
                    raise ManifestError(f"grids.{fam}.{k}: expected a non-empty list")
        m.grids = {f: dict(g) for f, g in grids.items()}

        m.importance = _section(raw, "importance", _IMPORTANCE)
        if m.importance.get("on", "test") not in ("test", "validation"):
            raise ManifestError("importance.on must be test or validation")
        if "repeats" in m.importance and _int(m.importance["repeats"], "importance.repeats") < 1:
            raise ManifestError("importance.repeats must be >= 1")
        m.reduce = _section(raw, "reduce", _REDUCE)
        thr = m.reduce.get("pca_threshold", 0.95)
        if not 0 < _num(thr, "reduce.pca_threshold") <= 1:
            raise ManifestError("reduce.pca_threshold must lie in (0, 1]")
        m.credit = _section(raw, "credit", _CREDIT)
        if m.credit.get("income_basis", "per_year") not in ("per_year", "per_loan"):
            raise ManifestError("credit.income_basis must be per_year or per_loan")
        if "k" in m.credit and "k_by_year" in m.credit:
            raise ManifestError("credit: give either k or k_by_year")
        m.report = _section(raw, "report", _REPORT)
        for sec in (m.importance, m.reduce, m.credit):
            if "stage" in sec:
                m.stage(sec["stage"])
        return m

    def require_years(self):
        if self.first_data_year is None:
            raise ManifestError("this command needs a years section")

    def require_panel_source(self):
        if self.panel_manifest is None and self.synthetic is None and self.raw is None:
            raise ManifestError("data needs a panel, synthetic or raw source")


def _section(raw, key, allowed):
    sec = raw.get(key, {}) or {}
    _check_keys(sec, allowed, key)
    return dict(sec)


def _synthetic(raw) -> SyntheticSpec:
    _check_keys(raw, _SYNTH, "data.synthetic")
    kw = dict(raw)
    if "years" in kw:
        kw["years"] = tuple(kw["years"])
    if "groups" in kw:
        kw["groups"] = tuple(kw["groups"])
    try:
        return SyntheticSpec(**kw)
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"data.synthetic: {exc}") from None
    except Exception as exc:  # DataError from spec validation
        raise ManifestError(f"data.synthetic: {exc}") from None

"""Expanding-window tuning and forecasting, pooled AUC reports.

Each walk-forward step trains on ``first..t-3``, tunes on ``{t-2, t-1}`` by
maximizing validation AUC and forecasts year ``t``.  Reports pool every
firm-year of the requested test years into one AUC.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, ManifestError, NumericalError
from .insight import PcaModel, pca_fit, pca_transform
from .io import write_table
from .metrics import auc, roc_curve
from .models import DISPLAY_NAMES, Dataset, ModelSpec, TrainedModel, design_columns, expand_grid
from .models import panel_dataset, predict, train
from .panel import GROUPS, Panel
from .parallel import pmap

log = logging.getLogger(__name__)

CRISIS_WINDOWS = {
    "dotcom": (1999, 2001),
    "gfc": (2007, 2009),
}


@dataclass(frozen=True)
class SplitPlan:
    train_years: tuple[int, ...]
    validation_years: tuple[int, int]
    test_year: int

    def __post_init__(self):
        t = self.test_year
        if not self.train_years or max(self.train_years) != t - 3:
            raise ValueError(f"training years must end at {t - 3}")
        if tuple(self.validation_years) != (t - 2, t - 1):
            raise ValueError(f"validation years must be ({t - 2}, {t - 1})")
        if list(self.train_years) != list(range(self.train_years[0], t - 2)):
            raise ValueError("training years must be consecutive")

    @property
    def train_end(self) -> int:
        return self.train_years[-1]


def expanding_window_plan(first_data_year: int, first_test_year: int,
                          last_test_year: int) -> list[SplitPlan]:
    """One plan per test year; the training window always starts at ``first_data_year``."""
    if first_test_year < first_data_year + 3:
        raise DataError(
            f"test year {first_test_year} leaves no training year before the two validation "
            f"years (data start {first_data_year})")
    if last_test_year < first_test_year:
        raise DataError("last test year precedes the first test year")
    return [SplitPlan(tuple(range(first_data_year, t - 2)), (t - 2, t - 1), t)
            for t in range(first_test_year, last_test_year + 1)]


@dataclass
class ForecastSet:
    test_year: int
    firm_ids: np.ndarray
    scores: np.ndarray
    labels: np.ndarray
    spec: ModelSpec
    validation_auc: float
    grid_aucs: list[float]
    model: TrainedModel
    pca: PcaModel | None = None

    @property
    def family(self) -> str:
        return self.spec.family


def _split_datasets(panel: Panel, plan: SplitPlan, names):
    tr = panel.select_years(plan.train_years)
    va = panel.select_years(plan.validation_years)
    te = panel.select_years([plan.test_year])
    if not len(tr) or not len(va) or not len(te):
        raise DataError(f"walk-forward step {plan.test_year}: a partition has no rows")
    end = plan.train_end
    # validation/test survival pairs are never used for fitting; censor them like training
    train_ds = panel_dataset(tr, names, window_end=end)
    val_ds = panel_dataset(va, names, stats_from=train_ds, window_end=end)
    test_ds = panel_dataset(te, names, stats_from=train_ds, window_end=end)
    return train_ds, val_ds, (te, test_ds)


def _pca_datasets(train_ds: Dataset, others: Sequence[Dataset], threshold: float):
    pca = pca_fit(train_ds.X, threshold, train_ds.feature_names)
    names = pca.component_names
    Xtr = pca_transform(pca, train_ds.X, train_ds.feature_names)
    new_train = Dataset.from_arrays(Xtr, train_ds.y, names, train_ds.time, train_ds.status)
    out = [Dataset.from_arrays(pca_transform(pca, d.X, d.feature_names), d.y, names,
                               d.time, d.status, stats_from=new_train) for d in others]
    log.info("PCA retained %d of %d components", pca.k, len(pca.kept))
    return pca, new_train, out


def tune_and_forecast(panel: Panel, family: str, grid: Mapping[str, list] | None,
                      plan: SplitPlan, groups: Sequence[str] | None = None,
                      features: Sequence[str] | None = None, seed: int = 0,
                      transform: str | None = None, pca_threshold: float = 0.95) -> ForecastSet:
    """Tune ``family`` over ``grid`` on the validation years and score the test year.

    Ties in validation AUC go to the earliest grid point.  Training is
    deterministic, so the model fitted during tuning *is* the retrained
    winner and is reused.  Test-year labels are read only after selection.
    """
    if groups is not None:
        bad = set(groups) - set(GROUPS)
        if bad:
            raise ManifestError(f"unknown predictor groups {sorted(bad)}")
    if transform not in (None, "pca"):
        raise ManifestError(f"unknown transform {transform!r}")
    specs = expand_grid(family, grid, seed)
    names = design_columns(panel, groups, features)
    if not names:
        raise DataError("no predictor columns selected")
    train_ds, val_ds, (test_panel, test_ds) = _split_datasets(panel, plan, names)
    pca = None
    if transform == "pca":
        pca, train_ds, (val_ds, test_ds) = _pca_datasets(train_ds, [val_ds, test_ds],
                                                         pca_threshold)

    def evaluate(spec):
        try:
            model = train(spec, train_ds)
            score = auc(predict(model, val_ds), val_ds.y)
        except NumericalError as exc:
            log.warning("grid point %s skipped: %s", spec.label(), exc)
            return float("nan"), None
        if np.isnan(score):
            log.warning("grid point %s skipped: validation AUC undefined", spec.label())
        return score, model

    results = pmap(evaluate, specs)
    aucs = [r[0] for r in results]
    finite = [i for i, a in enumerate(aucs) if not np.isnan(a)]
    if not finite:
        raise DataError(f"{family} {plan.test_year}: every grid point was skipped")
    best = max(finite, key=lambda i: (aucs[i], -i))
    model = results[best][1]
    scores = predict(model, test_ds)
    return ForecastSet(plan.test_year, np.asarray(test_panel.firm_id), scores,
                       test_ds.y.astype(int), specs[best], aucs[best], aucs, model, pca)


def walk_forward(panel: Panel, family: str, grid, plans: Sequence[SplitPlan], groups=None,
                 features=None, seed: int = 0, transform=None,
                 pca_threshold: float = 0.95) -> list[ForecastSet]:
    return pmap(lambda p: tune_and_forecast(panel, family, grid, p, groups, features, seed,
                                            transform, pca_threshold), plans)


# ---------------------------------------------------------------------------
# reports


@dataclass
class SubsetResult:
    name: str
    years: tuple[int, ...]
    auc: float
    n: int
    n_defaults: int
    roc: np.ndarray = field(repr=False, default=None)


def resolve_year_set(name_or_years, available: Sequence[int]) -> tuple[int, ...]:
    """Named window (``full``, ``dotcom``, ``gfc``, ``non_crisis``) or explicit years."""
    available = sorted(set(available))
    if isinstance(name_or_years, str):
        if name_or_years == "full":
            return tuple(available)
        if name_or_years == "non_crisis":
            crisis = {y for a, b in CRISIS_WINDOWS.values() for y in range(a, b + 1)}
            return tuple(y for y in available if y not in crisis)
        if name_or_years in CRISIS_WINDOWS:
            a, b = CRISIS_WINDOWS[name_or_years]
            return tuple(y for y in available if a <= y <= b)
        raise ManifestError(f"unknown year window {name_or_years!r}")
    return tuple(sorted(int(y) for y in name_or_years))


def pooled(forecasts: Sequence[ForecastSet], years) -> tuple[np.ndarray, np.ndarray]:
    years = set(years)
    picked = [f for f in sorted(forecasts, key=lambda f: f.test_year) if f.test_year in years]
    missing = years - {f.test_year for f in picked}
    if missing:
        raise DataError(f"forecasts do not cover years {sorted(missing)}")
    if not picked:
        raise DataError("empty year subset")
    return (np.concatenate([f.scores for f in picked]),
            np.concatenate([f.labels for f in picked]))


def subset_report(forecasts: Sequence[ForecastSet],
                  year_sets: Mapping[str, object] | Sequence[str]) -> list[SubsetResult]:
    """Pooled AUC and ROC over all firm-years in each named subset of test years."""
    available = [f.test_year for f in forecasts]
    if not isinstance(year_sets, Mapping):
        year_sets = {name: name for name in year_sets}
    out = []
    for name, spec in year_sets.items():
        years = resolve_year_set(spec, available)
        if not years:
            raise DataError(f"year subset {name!r} is empty")
        s, y = pooled(forecasts, years)
        out.append(SubsetResult(name, years, auc(s, y), len(y), int(y.sum()), roc_curve(s, y)))
    return out


@dataclass
class EvalReport:
    """Pooled AUC per (algorithm, predictor stage, period)."""

    algorithms: list[str]
    stages: list[str]
    periods: list[str]
    cells: dict[tuple[str, str, str], SubsetResult]

    def auc(self, algorithm, stage, period) -> float:
        return self.cells[(algorithm, stage, period)].auc


def build_report(forecasts: Mapping[tuple[str, str], Sequence[ForecastSet]],
                 periods: Mapping[str, object] | Sequence[str] = ("full",)) -> EvalReport:
    """``forecasts`` maps (algorithm, stage) to one walk-forward run."""
    algorithms, stages = [], []
    cells = {}
    for (alg, stage), fs in forecasts.items():
        if alg not in algorithms:
            algorithms.append(alg)
        if stage not in stages:
            stages.append(stage)
        for r in subset_report(fs, periods):
            cells[(alg, stage, r.name)] = r
    period_names = list(periods) if not isinstance(periods, Mapping) else list(periods.keys())
    return EvalReport(algorithms, stages, period_names, cells)


def report_rows(report: EvalReport):
    header = ["period", "algorithm", *report.stages]
    rows = []
    for period in report.periods:
        for alg in report.algorithms:
            row = [period, DISPLAY_NAMES.get(alg, alg)]
            for stage in report.stages:
                cell = report.cells.get((alg, stage, period))
                row.append(None if cell is None else cell.auc)
            rows.append(row)
    return header, rows


def write_report(report: EvalReport, path: str) -> None:
    """Table 2 layout: one row per (period, algorithm), one column per cumulative stage."""
    header, rows = report_rows(report)
    write_table(path, header, rows)


def write_forecasts(forecasts: Mapping[tuple[str, str], Sequence[ForecastSet]], path: str) -> None:
    header = ["algorithm", "stage", "test_year", "firm_id", "score", "label"]
    rows = []
    for (alg, stage), fs in forecasts.items():
        for f in sorted(fs, key=lambda f: f.test_year):
            for fid, s, y in zip(f.firm_ids, f.scores, f.labels):
                rows.append([alg, stage, f.test_year, fid, float(s), int(y)])
    write_table(path, header, rows, digits=12)


def write_tuning(forecasts: Mapping[tuple[str, str], Sequence[ForecastSet]], path: str) -> None:
    header = ["algorithm", "stage", "test_year", "winning_spec", "validation_auc"]
    rows = []
    for (alg, stage), fs in forecasts.items():
        for f in sorted(fs, key=lambda f: f.test_year):
            rows.append([alg, stage, f.test_year, f.spec.label(), f.validation_auc])
    write_table(path, header, rows)

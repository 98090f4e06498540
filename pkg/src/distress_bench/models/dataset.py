"""Model-ready design matrices built from panels."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DataError
from ..panel import N_INDUSTRIES, Panel


def fingerprint(names: Sequence[str]) -> str:
    return hashlib.sha256("\x1f".join(names).encode("utf-8")).hexdigest()[:16]


@dataclass
class Dataset:
    """Raw feature matrix plus labels, survival pairs and standardization stats.

    ``mean``/``sd`` always come from the rows the model is trained on; a
    validation or test Dataset is built with ``stats_from`` the training set.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    time: np.ndarray | None = None
    status: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.X)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise DataError("feature matrix does not match feature names")
        if len(self.y) != n:
            raise DataError("label count differs from row count")
        if (self.time is None) != (self.status is None):
            raise DataError("survival time and status must be given together")
        if self.time is not None and (len(self.time) != n or len(self.status) != n):
            raise DataError("survival pairs differ in length from row count")
        if not (np.isfinite(self.mean).all() and np.isfinite(self.sd).all()):
            raise DataError("standardization statistics are not finite")

    @classmethod
    def from_arrays(cls, X, y, feature_names, time=None, status=None, stats_from=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(y, dtype=float)
        names = tuple(feature_names)
        if stats_from is not None:
            if tuple(stats_from.feature_names) != names:
                raise DataError("feature names differ from the training dataset")
            mean, sd = stats_from.mean, stats_from.sd
        else:
            mean, sd = standardization_stats(X)
        return cls(X, y, names, mean, sd,
                   None if time is None else np.asarray(time, dtype=float),
                   None if status is None else np.asarray(status, dtype=float))

    @property
    def Z(self) -> np.ndarray:
        return (self.X - self.mean) / self.sd

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.feature_names)

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.X).any())

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows], self.feature_names, self.mean, self.sd,
                       None if self.time is None else self.time[rows],
                       None if self.status is None else self.status[rows])

    def with_X(self, X) -> "Dataset":
        return Dataset(np.asarray(X, dtype=float), self.y, self.feature_names, self.mean, self.sd,
                       self.time, self.status)


def standardization_stats(X):
    with np.errstate(invalid="ignore"):
        ok = ~np.isnan(X)
        cnt = ok.sum(axis=0)
        mean = np.where(cnt > 0, np.nansum(X, axis=0) / np.maximum(cnt, 1), 0.0)
        dev = np.where(ok, X - mean, 0.0)
        var = (dev ** 2).sum(axis=0) / np.maximum(cnt - 1, 1)
    sd = np.sqrt(var)
    sd = np.where((sd > 0) & np.isfinite(sd), sd, 1.0)
    return mean, sd


def industry_dummy_names() -> list[str]:
    return [f"industry_{k:02d}" for k in range(1, N_INDUSTRIES + 1)]


def design_columns(panel: Panel, groups=None, features=None, industry_dummies=None):
    """Column list for a model: named features or all features in ``groups``.

    Industry indicators are appended whenever the structural group is used
    (or when ``industry_dummies`` is True).
    """
    if features is not None:
        names = list(features)
        for n in names:
            panel.feature_index(n)
    else:
        groups = set(groups or ())
        names = [f.name for f in panel.schema if f.group in groups]
    if industry_dummies is None:
        industry_dummies = features is None and "structural" in set(groups or ())
    if industry_dummies:
        names += industry_dummy_names()
    return names


def panel_matrix(panel: Panel, names: Sequence[str]) -> np.ndarray:
    dummies = industry_dummy_names()
    cols = []
    for n in names:
        if n in dummies:
            cols.append((panel.industry == int(n.split("_")[1])).astype(float))
        else:
            cols.append(panel.column(n))
    if not cols:
        return np.empty((len(panel), 0))
    return np.column_stack(cols)


def survival_pairs(panel: Panel, window_end: int):
    """Duration (years, from the record's year) and event status, censored at ``window_end``.

    A record of year ``t`` whose firm defaults during year ``e`` has duration
    ``e - t + 1``; nothing observed after ``window_end`` is used.
    """
    end = np.minimum(panel.event_time, window_end)
    time = (end - panel.year + 1).astype(float)
    status = (panel.bankrupt & (panel.event_time <= window_end)).astype(float)
    return time, status


def panel_dataset(panel: Panel, names: Sequence[str], stats_from: Dataset | None = None,
                  window_end: int | None = None) -> Dataset:
    X = panel_matrix(panel, names)
    if window_end is None:
        window_end = panel.year_range[1] if len(panel) else 0
    time, status = survival_pairs(panel, window_end)
    return Dataset.from_arrays(X, panel.label, names, time=time, status=status,
                               stats_from=stats_from)

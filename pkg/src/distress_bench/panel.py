"""Firm-year panel: data model, delimited-text I/O, imputation and descriptive stats.

A :class:`Panel` is stored column-wise (numpy arrays) and sorted by
``(year, firm_id)``.  Missing feature values are held as ``NaN``, which is the
package-wide missing marker (:data:`MISSING`); it never compares equal to any
real value.

Convention on timing: a record for ``year = t`` carries predictors known at the
start of year ``t`` and ``defaulted_next_year = 1`` when the firm files for
bankruptcy during year ``t``, i.e. within one year of the information date.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

from .errors import DataError, ManifestError

MISSING = float("nan")
GROUPS = ("structural", "accounting", "market", "industry", "macro", "text")
N_INDUSTRIES = 12
BANKRUPT = "bankrupt"
CENSORED = "censored"

CORE_COLUMNS = (
    "firm_id",
    "year",
    "defaulted_next_year",
    "event_time",
    "event_status",
    "industry",
)


def is_missing(value) -> bool:
    return isinstance(value, float) and math.isnan(value)


@dataclass(frozen=True)
class Feature:
    name: str
    group: str

    def __post_init__(self):
        if self.group not in GROUPS:
            raise DataError(f"feature {self.name!r}: unknown group {self.group!r}")


@dataclass(frozen=True)
class FirmYearRecord:
    firm_id: str
    year: int
    defaulted_next_year: int
    event_time: int
    event_status: str
    industry: int
    features: Mapping[str, float] = field(default_factory=dict)


class Panel:
    """Immutable, sorted collection of firm-year records sharing one schema."""

    def __init__(self, firm_id, year, label, event_time, bankrupt, industry, X, schema):
        firm_id = np.asarray(firm_id, dtype=str)
        year = np.asarray(year, dtype=np.int64)
        n = len(firm_id)
        schema = tuple(schema)
        X = np.asarray(X, dtype=float).reshape(n, len(schema))
        label = np.asarray(label, dtype=np.int64)
        event_time = np.asarray(event_time, dtype=np.int64)
        bankrupt = np.asarray(bankrupt, dtype=bool)
        industry = np.asarray(industry, dtype=np.int64)
        for arr in (year, label, event_time, bankrupt, industry):
            if len(arr) != n:
                raise DataError("panel columns have inconsistent lengths")

        names = [f.name for f in schema]
        if len(set(names)) != len(names):
            raise DataError("duplicate feature names in schema")
        if n and not np.isin(label, (0, 1)).all():
            raise DataError("labels must be 0 or 1")

        order = np.lexsort((firm_id, year))
        self.firm_id = firm_id[order]
        self.year = year[order]
        self.label = label[order]
        self.event_time = event_time[order]
        self.bankrupt = bankrupt[order]
        self.industry = industry[order]
        self.X = X[order]
        self.schema = schema
        for arr in (self.firm_id, self.year, self.label, self.event_time,
                    self.bankrupt, self.industry, self.X):
            arr.flags.writeable = False
        self._validate()

    def _validate(self):
        if len(self) > 1:
            same = (self.year[1:] == self.year[:-1]) & (self.firm_id[1:] == self.firm_id[:-1])
            if same.any():
                i = int(np.flatnonzero(same)[0]) + 1
                raise DataError(
                    f"duplicate record for firm {self.firm_id[i]!r} in year {int(self.year[i])}"
                )
        pos = self.label == 1
        if (pos & ~self.bankrupt).any() or (self.event_time[pos] != self.year[pos]).any():
            raise DataError("a default-labelled record must be bankrupt with event_time equal to its year")
        if (self.event_time < self.year).any():
            raise DataError("event_time precedes record year")

    # construction helpers

    @classmethod
    def from_records(cls, records: Iterable[FirmYearRecord], schema: Sequence[Feature]) -> "Panel":
        records = list(records)
        names = [f.name for f in schema]
        X = np.full((len(records), len(names)), np.nan)
        for i, r in enumerate(records):
            for j, name in enumerate(names):
                X[i, j] = float(r.features.get(name, MISSING))
        return cls(
            [r.firm_id for r in records],
            [r.year for r in records],
            [r.defaulted_next_year for r in records],
            [r.event_time for r in records],
            [r.event_status == BANKRUPT for r in records],
            [r.industry for r in records],
            X,
            schema,
        )

    def _replace(self, mask=None, X=None, schema=None) -> "Panel":
        sel = slice(None) if mask is None else mask
        X = self.X[sel] if X is None else X
        return Panel(
            self.firm_id[sel], self.year[sel], self.label[sel], self.event_time[sel],
            self.bankrupt[sel], self.industry[sel], X,
            self.schema if schema is None else schema,
        )

    def with_features(self, X, schema) -> "Panel":
        return self._replace(X=X, schema=schema)

    def select(self, mask) -> "Panel":
        return self._replace(mask=np.asarray(mask, dtype=bool))

    def select_years(self, years) -> "Panel":
        return self.select(np.isin(self.year, list(years)))

    # accessors

    def __len__(self):
        return len(self.firm_id)

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.schema]

    @property
    def year_range(self) -> tuple[int, int] | None:
        if not len(self):
            return None
        return int(self.year.min()), int(self.year.max())

    @property
    def years(self) -> list[int]:
        return sorted(set(int(y) for y in self.year))

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise DataError(f"unknown feature {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_index(name)]

    def group_of(self, name: str) -> str:
        return self.schema[self.feature_index(name)].group

    @property
    def records(self) -> list[FirmYearRecord]:
        names = self.feature_names
        out = []
        for i in range(len(self)):
            out.append(FirmYearRecord(
                firm_id=str(self.firm_id[i]),
                year=int(self.year[i]),
                defaulted_next_year=int(self.label[i]),
                event_time=int(self.event_time[i]),
                event_status=BANKRUPT if self.bankrupt[i] else CENSORED,
                industry=int(self.industry[i]),
                features={n: float(self.X[i, j]) for j, n in enumerate(names)},
            ))
        return out

    def equals(self, other: "Panel") -> bool:
        return (
            self.schema == other.schema
            and np.array_equal(self.firm_id, other.firm_id)
            and np.array_equal(self.year, other.year)
            and np.array_equal(self.label, other.label)
            and np.array_equal(self.event_time, other.event_time)
            and np.array_equal(self.bankrupt, other.bankrupt)
            and np.array_equal(self.industry, other.industry)
            and np.array_equal(self.X, other.X, equal_nan=True)
        )


# ---------------------------------------------------------------------------
# Delimited text I/O


@dataclass(frozen=True)
class DataManifest:
    """Describes how a delimited file maps onto a :class:`Panel`.

    ``columns`` maps file column -> :class:`Feature`.
    """

    path: str
    columns: Mapping[str, Feature]
    label: str = "defaulted_next_year"
    firm_id: str = "firm_id"
    year: str = "year"
    event_time: str = "event_time"
    event_status: str = "event_status"
    industry: str = "industry"
    missing_token: str = "NA"

    def __post_init__(self):
        names = [f.name for f in self.columns.values()]
        if len(set(names)) != len(names):
            raise ManifestError("feature names in data manifest are not unique")

    @property
    def schema(self) -> tuple[Feature, ...]:
        return tuple(self.columns.values())

    @classmethod
    def from_dict(cls, raw: Mapping, base_dir: str = ".") -> "DataManifest":
        known = {"path", "features", "label", "firm_id", "year", "event_time",
                 "event_status", "industry", "missing_token"}
        unknown = set(raw) - known
        if unknown:
            raise ManifestError(f"unknown data manifest keys: {sorted(unknown)}")
        if "path" not in raw or "features" not in raw:
            raise ManifestError("data manifest needs 'path' and 'features'")
        columns = {}
        for entry in raw["features"]:
            try:
                column = entry["column"]
                feat = Feature(entry.get("name", column), entry["group"])
            except (KeyError, TypeError, DataError) as exc:
                raise ManifestError(f"bad feature entry {entry!r}: {exc}") from None
            if column in columns:
                raise ManifestError(f"column {column!r} mapped twice")
            columns[column] = feat
        path = raw["path"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        extra = {k: str(raw[k]) for k in known - {"path", "features"} if k in raw}
        return cls(path=path, columns=columns, **extra)

    @classmethod
    def load(cls, path: str) -> "DataManifest":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except FileNotFoundError:
            raise ManifestError(f"data manifest not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ManifestError(f"cannot parse data manifest {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ManifestError(f"data manifest {path} is not a mapping")
        return cls.from_dict(raw, os.path.dirname(os.path.abspath(path)))

    def to_dict(self, relative_to: str | None = None) -> dict:
        path = self.path
        if relative_to is not None:
            path = os.path.relpath(path, relative_to)
        return {
            "path": path,
            "firm_id": self.firm_id,
            "year": self.year,
            "label": self.label,
            "event_time": self.event_time,
            "event_status": self.event_status,
            "industry": self.industry,
            "missing_token": self.missing_token,
            "features": [
                {"column": c, "name": f.name, "group": f.group} for c, f in self.columns.items()
            ],
        }


def _parse_int(text, what, row):
    try:
        return int(text)
    except ValueError:
        raise DataError(f"row {row}: cannot parse {what} {text!r}") from None


def load_panel(manifest: DataManifest) -> Panel:
    """Read the delimited file described by ``manifest`` into a Panel.

    Row indices in error messages count data rows from 1 (header excluded).
    """
    if not os.path.exists(manifest.path):
        raise DataError(f"data file not found: {manifest.path}")
    with open(manifest.path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{manifest.path}: empty file") from None
        required = [manifest.firm_id, manifest.year, manifest.label, manifest.event_time,
                    manifest.event_status, manifest.industry, *manifest.columns]
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{manifest.path}: header lacks columns {missing}")
        pos = {c: header.index(c) for c in required}
        feat_cols = list(manifest.columns)

        ids, years, labels, etimes, bankrupt, industry, rows = [], [], [], [], [], [], []
        seen = {}
        for i, line in enumerate(reader, start=1):
            if not line:
                continue
            if len(line) != len(header):
                raise DataError(f"row {i}: expected {len(header)} fields, got {len(line)}")
            lab_text = line[pos[manifest.label]].strip()
            try:
                lab = int(float(lab_text))
            except ValueError:
                raise DataError(f"row {i}: unparseable label {lab_text!r}") from None
            if lab not in (0, 1) or float(lab_text) != lab:
                raise DataError(f"row {i}: label {lab_text!r} outside {{0,1}}")
            fid = line[pos[manifest.firm_id]]
            yr = _parse_int(line[pos[manifest.year]], "year", i)
            if (fid, yr) in seen:
                raise DataError(
                    f"row {i}: duplicate record for firm {fid!r} in year {yr} (first at row {seen[fid, yr]})"
                )
            seen[fid, yr] = i
            status = line[pos[manifest.event_status]].strip().lower()
            if status not in (BANKRUPT, CENSORED):
                raise DataError(f"row {i}: event_status {status!r} not in {{bankrupt, censored}}")
            values = []
            for c in feat_cols:
                text = line[pos[c]].strip()
                if text == manifest.missing_token or text == "":
                    values.append(MISSING)
                else:
                    try:
                        values.append(float(text))
                    except ValueError:
                        raise DataError(f"row {i}: cannot parse {c}={text!r}") from None
            ids.append(fid)
            years.append(yr)
            labels.append(lab)
            etimes.append(_parse_int(line[pos[manifest.event_time]], "event_time", i))
            bankrupt.append(status == BANKRUPT)
            industry.append(_parse_int(line[pos[manifest.industry]], "industry", i))
            rows.append(values)
    X = np.array(rows, dtype=float).reshape(len(rows), len(feat_cols))
    return Panel(ids, years, labels, etimes, bankrupt, industry, X, manifest.schema)


def format_float(value: float, missing_token: str = "NA") -> str:
    if math.isnan(value):
        return missing_token
    return repr(float(value))


def write_panel(panel: Panel, path: str, missing_token: str = "NA") -> DataManifest:
    """Write ``panel`` as CSV plus a sibling ``<stem>.manifest.yaml``.

    Floats use the shortest round-trip representation so that reading the file
    back reproduces every value bit for bit.
    """
    from .io import atomic_write

    names = panel.feature_names
    lines = [",".join([*CORE_COLUMNS, *names])]
    for i in range(len(panel)):
        core = [
            str(panel.firm_id[i]), str(int(panel.year[i])), str(int(panel.label[i])),
            str(int(panel.event_time[i])), BANKRUPT if panel.bankrupt[i] else CENSORED,
            str(int(panel.industry[i])),
        ]
        feats = [format_float(v, missing_token) for v in panel.X[i]]
        lines.append(",".join(core + feats))
    atomic_write(path, "\n".join(lines) + "\n")

    manifest = DataManifest(
        path=os.path.abspath(path),
        columns={f.name: f for f in panel.schema},
        missing_token=missing_token,
    )
    mpath = manifest_path_for(path)
    atomic_write(mpath, yaml.safe_dump(
        manifest.to_dict(relative_to=os.path.dirname(os.path.abspath(path))), sort_keys=False))
    return manifest


def manifest_path_for(csv_path: str) -> str:
    stem, _ = os.path.splitext(csv_path)
    return stem + ".manifest.yaml"


# ---------------------------------------------------------------------------
# Transformations


def impute_last_observation(panel: Panel) -> Panel:
    """Carry each firm's last observed accounting value forward.

    Only features tagged ``accounting`` are touched; a missing value with no
    earlier observation for the firm stays missing.
    """
    cols = [j for j, f in enumerate(panel.schema) if f.group == "accounting"]
    if not cols or not len(panel):
        return panel
    order = np.lexsort((panel.year, panel.firm_id))
    fid = panel.firm_id[order]
    starts = np.r_[True, fid[1:] != fid[:-1]]
    group_start = np.maximum.accumulate(np.where(starts, np.arange(len(fid)), 0))
    ar = np.arange(len(fid))

    X = panel.X.copy()
    for j in cols:
        vals = X[order, j]
        last = np.maximum.accumulate(np.where(~np.isnan(vals), ar, -1))
        ok = last >= group_start
        filled = np.where(ok, vals[np.clip(last, 0, None)], np.nan)
        X[order, j] = filled
    return panel.with_features(X, panel.schema)


def winsorize(panel: Panel, lower: float = 1.0, upper: float = 99.0, groups=None) -> Panel:
    """Clamp features at the given percentiles (off by default in the pipeline)."""
    X = panel.X.copy()
    for j, f in enumerate(panel.schema):
        if groups is not None and f.group not in groups:
            continue
        col = X[:, j]
        ok = ~np.isnan(col)
        if ok.sum() < 2:
            continue
        lo, hi = np.percentile(col[ok], [lower, upper])
        X[ok, j] = np.clip(col[ok], lo, hi)
    return panel.with_features(X, panel.schema)


@dataclass(frozen=True)
class Summary:
    mean: float
    sd: float
    p25: float
    median: float
    p75: float
    n: int


def summarize(panel: Panel) -> dict[str, Summary | None]:
    """Per-feature mean, sample sd and quartiles, ignoring missing values.

    Quartiles interpolate linearly between closest ranks (numpy's default
    ``linear`` method).  Features with fewer than two observed values map to
    ``None``.
    """
    out = {}
    for j, name in enumerate(panel.feature_names):
        col = panel.X[:, j]
        col = col[~np.isnan(col)]
        if len(col) < 2:
            out[name] = None
            continue
        p25, med, p75 = np.percentile(col, [25, 50, 75])
        out[name] = Summary(float(col.mean()), float(col.std(ddof=1)),
                            float(p25), float(med), float(p75), int(len(col)))
    return out


def correlation_with_default(panel: Panel) -> dict[str, float | None]:
    """Pearson correlation of each feature with the default label.

    Pairs with a missing feature value are dropped per feature.  ``None`` marks
    an undefined correlation (zero variance on either side).
    """
    y_all = panel.label.astype(float)
    if y_all.std() == 0:
        raise DataError("label has zero variance; correlations undefined")
    out = {}
    for j, name in enumerate(panel.feature_names):
        x = panel.X[:, j]
        ok = ~np.isnan(x)
        x, y = x[ok], y_all[ok]
        if len(x) < 2:
            out[name] = None
            continue
        dx = x - x.mean()
        dy = y - y.mean()
        sxx = float(dx @ dx)
        syy = float(dy @ dy)
        if sxx == 0 or syy == 0:
            out[name] = None
            continue
        out[name] = float(dx @ dy) / math.sqrt(sxx * syy)
    return out

"""Predictor construction from raw inputs: market model, Merton distance to default,
industry aggregates and the timing rules that join everything to firm-years.

Timing for a forecast year ``t``:

* accounting fields come from the latest statement whose period ends on or
  before July 1 of ``t - 1`` (at least six months before ``t`` starts);
* market fields (returns, volatility, size, distance to default) use year ``t - 1``;
* macro fields are the December ``t - 1`` readings;
* text measures come from the filing dated ``t - 1``.
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import DataError
from .panel import BANKRUPT, N_INDUSTRIES, Feature, FirmYearRecord, Panel
from .parallel import pmap

log = logging.getLogger(__name__)

MACRO_COLUMNS = ("term_spread", "credit_spread", "recession", "inflation", "gdp_growth",
                 "unemployment", "industrial_production")
MIN_RETURNS = 30


@dataclass(frozen=True)
class EquitySeries:
    """One firm's returns over a year plus the inputs of the structural model."""

    firm_id: str
    returns: np.ndarray
    index_returns: np.ndarray
    equity: float
    face_value: float
    rate: float
    periods_per_year: float = 252.0

    def __post_init__(self):
        r = np.asarray(self.returns, dtype=float)
        m = np.asarray(self.index_returns, dtype=float)
        if r.shape != m.shape or r.ndim != 1:
            raise DataError(f"{self.firm_id}: firm and index returns differ in length")
        if len(r) < MIN_RETURNS:
            raise DataError(f"{self.firm_id}: {len(r)} return observations, need {MIN_RETURNS}")
        if not (np.isfinite(r).all() and np.isfinite(m).all()):
            raise DataError(f"{self.firm_id}: non-finite returns")
        if (r <= -1).any():
            raise DataError(f"{self.firm_id}: returns at or below -100%")
        if not self.face_value > 0:
            raise DataError(f"{self.firm_id}: face value of debt must be positive")
        if not self.equity > 0:
            raise DataError(f"{self.firm_id}: market equity must be positive")
        object.__setattr__(self, "returns", r)
        object.__setattr__(self, "index_returns", m)


@dataclass(frozen=True)
class MacroRow:
    year: int
    term_spread: float
    credit_spread: float
    recession: int
    inflation: float
    gdp_growth: float
    unemployment: float
    industrial_production: float

    def __post_init__(self):
        if self.recession not in (0, 1):
            raise DataError(f"macro {self.year}: recession flag must be 0 or 1")

    def values(self) -> list[float]:
        return [float(getattr(self, c)) for c in MACRO_COLUMNS]


@dataclass(frozen=True)
class StructuralResult:
    V: float
    sigma_V: float
    mu: float
    dd: float
    iterations: int
    converged: bool


# ---------------------------------------------------------------------------
# market model


def market_model_stats(series: EquitySeries, ddof: int = 2) -> tuple[float, float, float]:
    """(beta, residual sd, compounded excess return) of the firm over the index.

    The residual sd uses ``n - ddof`` degrees of freedom (two estimated
    coefficients by default).
    """
    r, m = series.returns, series.index_returns
    mc = m - m.mean()
    sxx = float(mc @ mc)
    if sxx <= 0:
        raise DataError(f"{series.firm_id}: index returns have zero variance")
    beta = float(mc @ (r - r.mean())) / sxx
    alpha = r.mean() - beta * m.mean()
    resid = r - alpha - beta * m
    sigma = math.sqrt(float(resid @ resid) / (len(r) - ddof))
    excess = float(np.prod(1.0 + r) - np.prod(1.0 + m))
    return beta, sigma, excess


def relative_size(firm_mktcap: float, total_mktcap: float) -> float:
    if not (firm_mktcap > 0 and total_mktcap > 0):
        raise DataError("market capitalizations must be positive")
    return math.log(firm_mktcap / total_mktcap)


# ---------------------------------------------------------------------------
# structural model


def call_value(V, F, r, sigma, T=1.0):
    """Black-Scholes-Merton value of equity as a call on assets ``V`` struck at ``F``."""
    V = np.asarray(V, dtype=float)
    srt = sigma * math.sqrt(T)
    d1 = (np.log(V / F) + (r + 0.5 * sigma * sigma) * T) / srt
    return V * ndtr(d1) - F * math.exp(-r * T) * ndtr(d1 - srt)


def implied_asset_value(E, F, r, sigma, T=1.0):
    """Invert :func:`call_value` for ``V`` by bisection on ``[E, E + F e^{-rT} 10^3]``.

    The call value is strictly increasing in ``V``, so the bracket holds a
    unique root; bisection runs until the bracket stops shrinking.
    """
    E = np.atleast_1d(np.asarray(E, dtype=float))
    lo = E.copy()
    hi = E + F * math.exp(-r * T) * 1e3
    if (call_value(hi, F, r, sigma, T) < E).any():
        raise DataError("asset value root is not bracketed")
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not active.any():
            break
        below = call_value(mid, F, r, sigma, T) < E
        lo = np.where(active & below, mid, lo)
        hi = np.where(active & ~below, mid, hi)
    # pick whichever endpoint prices closer to the observed equity
    err_lo = np.abs(call_value(lo, F, r, sigma, T) - E)
    err_hi = np.abs(call_value(hi, F, r, sigma, T) - E)
    return np.where(err_lo <= err_hi, lo, hi)


def distance_to_default(V: float, F: float, mu: float, sigma_V: float, T: float = 1.0) -> float:
    return (math.log(V / F) + (mu - 0.5 * sigma_V * sigma_V) * T) / (sigma_V * math.sqrt(T))


def equity_path(series: EquitySeries) -> np.ndarray:
    """Equity values implied by the returns, ending at the observed value."""
    growth = np.cumprod(1.0 + series.returns[::-1])[::-1]
    before = series.equity / growth
    return np.r_[before, series.equity]


def merton_dd(series: EquitySeries, T: float = 1.0, tol: float = 1e-4, max_iter: int = 500,
              floor_drift: bool = True) -> StructuralResult:
    """Iterated Merton model: implied asset values and asset volatility.

    Start from ``sigma_V = sigma_E * E / (E + F)``; price every period's equity
    to back out ``V``; re-estimate ``sigma_V`` and the drift from implied log
    asset returns; stop when ``sigma_V`` moves less than ``tol``.  With
    ``floor_drift`` the drift is floored at ``r - 0.10``.
    """
    F, r, ppy = series.face_value, series.rate, series.periods_per_year
    if r < 0:
        raise DataError(f"{series.firm_id}: risk-free rate must be non-negative")
    E = equity_path(series)
    sigma_E = float(np.std(series.returns, ddof=1)) * math.sqrt(ppy)
    sigma = sigma_E * series.equity / (series.equity + F)
    if not sigma > 0:
        raise DataError(f"{series.firm_id}: equity volatility is zero")
    converged = False
    mu = r
    it = 0
    for it in range(1, max_iter + 1):
        V = implied_asset_value(E, F, r, sigma, T)
        lr = np.diff(np.log(V))
        new_sigma = float(np.std(lr, ddof=1)) * math.sqrt(ppy)
        mu = float(lr.mean()) * ppy
        if not (np.isfinite(new_sigma) and new_sigma > 0):
            break
        done = abs(new_sigma - sigma) < tol
        sigma = new_sigma
        if done:
            converged = True
            break
    V_end = float(implied_asset_value(series.equity, F, r, sigma, T)[0])
    if floor_drift:
        mu = max(mu, r - 0.10)
    dd = distance_to_default(V_end, F, mu, sigma, T)
    if not converged:
        log.warning("%s: Merton iteration did not converge after %d steps", series.firm_id, it)
    return StructuralResult(V_end, sigma, mu, dd, it, converged)


def naive_dd(series: EquitySeries, T: float = 1.0) -> float:
    """Closed-form approximation: debt volatility ``0.05 + 0.25 sigma_E``, drift = past return."""
    E, F = series.equity, series.face_value
    sigma_E = float(np.std(series.returns, ddof=1)) * math.sqrt(series.periods_per_year)
    sigma_D = 0.05 + 0.25 * sigma_E
    sigma_V = E / (E + F) * sigma_E + F / (E + F) * sigma_D
    past = float(np.prod(1.0 + series.returns) - 1.0)
    return (math.log((E + F) / F) + (past - 0.5 * sigma_V ** 2) * T) / (sigma_V * math.sqrt(T))


# ---------------------------------------------------------------------------
# industry aggregates


@dataclass(frozen=True)
class IndustryAggregate:
    hh_sales: float
    median_sigma: float
    median_tl_at: float
    defaults_last_1yr: int
    defaults_last_2yr: int


def _nanmedian(x):
    x = np.asarray(x, dtype=float)
    x = x[~np.isnan(x)]
    return float(np.median(x)) if len(x) else float("nan")


def herfindahl(sales) -> float:
    s = np.asarray(sales, dtype=float)
    s = s[~np.isnan(s)]
    total = s.sum()
    if len(s) == 0 or total <= 0:
        return float("nan")
    share = s / total
    return float(share @ share)


def industry_aggregates(industry, sales, sigma, tl_at,
                        default_history: Mapping[int, Sequence[int]] | None = None
                        ) -> dict[int, IndustryAggregate]:
    """Per-industry aggregates for one year's cross-section.

    ``default_history[k]`` holds the default counts of industry ``k`` in the two
    preceding years, most recent first.  Industries without firms get missing
    aggregates.
    """
    industry = np.asarray(industry)
    sales, sigma, tl_at = (np.asarray(a, dtype=float) for a in (sales, sigma, tl_at))
    out = {}
    for k in range(1, N_INDUSTRIES + 1):
        m = industry == k
        hist = list((default_history or {}).get(k, (0, 0)))
        d1 = int(hist[0]) if hist else 0
        d2 = d1 + (int(hist[1]) if len(hist) > 1 else 0)
        if not m.any():
            out[k] = IndustryAggregate(float("nan"), float("nan"), float("nan"), d1, d2)
            continue
        out[k] = IndustryAggregate(herfindahl(sales[m]), _nanmedian(sigma[m]),
                                   _nanmedian(tl_at[m]), d1, d2)
    return out


# ---------------------------------------------------------------------------
# joins


@dataclass(frozen=True)
class Statement:
    firm_id: str
    period_end: dt.date
    values: Mapping[str, float]


@dataclass(frozen=True)
class SkeletonRow:
    firm_id: str
    year: int
    defaulted_next_year: int
    event_time: int
    event_status: str
    industry: int


@dataclass
class RawInputs:
    skeleton: list[SkeletonRow]
    statements: list[Statement]
    accounting: tuple[str, ...]
    market: dict[tuple[str, int], dict[str, float]] = field(default_factory=dict)
    macro: dict[int, MacroRow] = field(default_factory=dict)
    text: dict[tuple[str, int], dict[str, float]] = field(default_factory=dict)
    text_names: tuple[str, ...] = ()


def statement_cutoff(year: int) -> dt.date:
    """Latest fiscal period end usable for forecasting ``year``."""
    return dt.date(year - 1, 7, 1)


def latest_statement(statements: Sequence[Statement], year: int) -> Statement | None:
    """Most recent statement ending at least six months before Jan 1 of ``year``."""
    cutoff = statement_cutoff(year)
    best = None
    for s in statements:
        if s.period_end <= cutoff and (best is None or s.period_end > best.period_end):
            best = s
    return best


MARKET_FEATURES = ("excess_return", "sigma", "relative_size", "beta")
INDUSTRY_FEATURES = ("hh_sales", "industry_sigma", "industry_tl_at",
                     "industry_defaults_1yr", "industry_defaults_2yr")


def align_predictors(raw: RawInputs, sales_field: str = "sale") -> tuple[Panel, int]:
    """Join raw inputs into a panel under the timing rules; returns (panel, dropped).

    Records whose year has no macro row for ``t - 1`` are dropped; the count
    is returned and logged.
    """
    by_firm: dict[str, list[Statement]] = {}
    for s in raw.statements:
        by_firm.setdefault(s.firm_id, []).append(s)
    nan = float("nan")
    rows, dropped = [], 0
    for sk in raw.skeleton:
        macro = raw.macro.get(sk.year - 1)
        if macro is None:
            dropped += 1
            continue
        st = latest_statement(by_firm.get(sk.firm_id, ()), sk.year)
        acct = [float(st.values.get(n, nan)) if st else nan for n in raw.accounting]
        sale = float(st.values.get(sales_field, nan)) if st else nan
        mk = raw.market.get((sk.firm_id, sk.year - 1), {})
        tx = raw.text.get((sk.firm_id, sk.year - 1), {})
        rows.append((sk, acct, sale, mk, macro, tx))
    if dropped:
        log.warning("%d firm-years dropped: no macro row for the prior year", dropped)

    # realized defaults per (industry, year), known once the year has ended
    defaults: dict[tuple[int, int], int] = {}
    for sk in raw.skeleton:
        if sk.defaulted_next_year:
            defaults[(sk.industry, sk.year)] = defaults.get((sk.industry, sk.year), 0) + 1

    tl_pos = raw.accounting.index("tl_at") if "tl_at" in raw.accounting else None
    years = sorted({r[0].year for r in rows})
    industry_cells: dict[tuple[int, int], IndustryAggregate] = {}
    for t in years:
        sel = [r for r in rows if r[0].year == t]
        hist = {k: (defaults.get((k, t - 1), 0), defaults.get((k, t - 2), 0))
                for k in range(1, N_INDUSTRIES + 1)}
        agg = industry_aggregates(
            [r[0].industry for r in sel], [r[2] for r in sel],
            [r[3].get("sigma", nan) for r in sel],
            [r[1][tl_pos] if tl_pos is not None else nan for r in sel], hist)
        for k, a in agg.items():
            industry_cells[(t, k)] = a

    schema = ([Feature("distance_to_default", "structural")]
              + [Feature(n, "accounting") for n in raw.accounting]
              + [Feature(n, "market") for n in MARKET_FEATURES]
              + [Feature(n, "industry") for n in INDUSTRY_FEATURES]
              + [Feature(n, "macro") for n in MACRO_COLUMNS]
              + [Feature(n, "text") for n in raw.text_names])
    records = []
    for sk, acct, _sale, mk, macro, tx in rows:
        ia = industry_cells[(sk.year, sk.industry)]
        values = ([mk.get("distance_to_default", nan)] + acct
                  + [mk.get(n, nan) for n in MARKET_FEATURES]
                  + [ia.hh_sales, ia.median_sigma, ia.median_tl_at,
                     float(ia.defaults_last_1yr), float(ia.defaults_last_2yr)]
                  + macro.values()
                  + [tx.get(n, nan) for n in raw.text_names])
        records.append(FirmYearRecord(
            sk.firm_id, sk.year, sk.defaulted_next_year, sk.event_time,
            sk.event_status, sk.industry, dict(zip((f.name for f in schema), values))))
    return Panel.from_records(records, schema), dropped


def market_features(series: EquitySeries, index_market_value: float,
                    floor_drift: bool = True, naive: bool = False) -> dict[str, float]:
    beta, sigma, excess = market_model_stats(series)
    if naive:
        dd = naive_dd(series)
    else:
        dd = merton_dd(series, floor_drift=floor_drift).dd
    return {"beta": beta, "sigma": sigma, "excess_return": excess,
            "relative_size": relative_size(series.equity, index_market_value),
            "distance_to_default": dd}


# ---------------------------------------------------------------------------
# delimited inputs


def _read_dicts(path: str) -> list[dict[str, str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except FileNotFoundError:
        raise DataError(f"input file not found: {path}") from None


def _require(rows, path, cols):
    if rows and (missing := [c for c in cols if c not in rows[0]]):
        raise DataError(f"{path}: missing columns {missing}")


def _num(text: str, missing_token: str = "NA") -> float:
    return float("nan") if text in ("", missing_token) else float(text)


def load_macro(path: str) -> dict[int, MacroRow]:
    rows = _read_dicts(path)
    _require(rows, path, ("year", *MACRO_COLUMNS))
    out = {}
    for i, r in enumerate(rows):
        try:
            row = MacroRow(int(r["year"]), *(float(r[c]) for c in MACRO_COLUMNS[:2]),
                           int(float(r["recession"])),
                           *(float(r[c]) for c in MACRO_COLUMNS[3:]))
        except ValueError as exc:
            raise DataError(f"{path}: row {i + 1}: {exc}") from None
        if row.year in out:
            raise DataError(f"{path}: duplicate macro year {row.year}")
        out[row.year] = row
    return out


def load_skeleton(path: str) -> list[SkeletonRow]:
    rows = _read_dicts(path)
    cols = ("firm_id", "year", "defaulted_next_year", "event_time", "event_status", "industry")
    _require(rows, path, cols)
    out = []
    for i, r in enumerate(rows):
        try:
            out.append(SkeletonRow(r["firm_id"], int(r["year"]), int(r["defaulted_next_year"]),
                                   int(r["event_time"]), r["event_status"], int(r["industry"])))
        except ValueError as exc:
            raise DataError(f"{path}: row {i + 1}: {exc}") from None
    return out


def load_statements(path: str, missing_token: str = "NA") -> tuple[list[Statement], tuple[str, ...]]:
    rows = _read_dicts(path)
    _require(rows, path, ("firm_id", "period_end"))
    fields = tuple(c for c in (rows[0] if rows else {}) if c not in ("firm_id", "period_end"))
    out = []
    for i, r in enumerate(rows):
        try:
            out.append(Statement(r["firm_id"], dt.date.fromisoformat(r["period_end"]),
                                 {c: _num(r[c], missing_token) for c in fields}))
        except ValueError as exc:
            raise DataError(f"{path}: row {i + 1}: {exc}") from None
    return out, fields


def load_equity_series(returns_path: str, firm_years_path: str) -> list[tuple[int, EquitySeries, float]]:
    """Long-format returns plus per-(firm, year) equity, debt, rate and index value.

    The returns file has columns ``firm_id, date, return, index_return``; the
    firm-year file has ``firm_id, year, market_equity, face_value, risk_free,
    index_market_value``.  The return frequency of each firm-year is its
    observation count.
    """
    rets = _read_dicts(returns_path)
    _require(rets, returns_path, ("firm_id", "date", "return", "index_return"))
    fy = _read_dicts(firm_years_path)
    _require(fy, firm_years_path, ("firm_id", "year", "market_equity", "face_value",
                                    "risk_free", "index_market_value"))
    grouped: dict[tuple[str, int], list[tuple[str, float, float]]] = {}
    for i, r in enumerate(rets):
        try:
            d = dt.date.fromisoformat(r["date"])
            grouped.setdefault((r["firm_id"], d.year), []).append(
                (r["date"], float(r["return"]), float(r["index_return"])))
        except ValueError as exc:
            raise DataError(f"{returns_path}: row {i + 1}: {exc}") from None
    out = []
    for i, r in enumerate(fy):
        key = (r["firm_id"], int(r["year"]))
        obs = sorted(grouped.get(key, ()))
        if not obs:
            raise DataError(f"{returns_path}: no returns for firm {key[0]} in {key[1]}")
        series = EquitySeries(key[0], np.array([o[1] for o in obs]), np.array([o[2] for o in obs]),
                              float(r["market_equity"]), float(r["face_value"]),
                              float(r["risk_free"]), float(len(obs)))
        out.append((key[1], series, float(r["index_market_value"])))
    return out


def compute_market_table(series: Sequence[tuple[int, EquitySeries, float]],
                         floor_drift: bool = True, naive: bool = False
                         ) -> dict[tuple[str, int], dict[str, float]]:
    """Market features per (firm, year); firms are processed independently."""
    results = pmap(lambda item: market_features(item[1], item[2], floor_drift, naive), series)
    return {(s.firm_id, year): res for (year, s, _), res in zip(series, results)}

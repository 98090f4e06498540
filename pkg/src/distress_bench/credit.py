"""Competitive loan market: each algorithm quotes a spread per firm and the
lowest quote funds a one-year loan.

All money is held in integer cents so that profit = income - losses and the
per-year funded total are exact.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError, ManifestError
from .io import write_table
from .models import DISPLAY_NAMES

log = logging.getLogger(__name__)

MARKET_SIZE_CENTS = 100_000_000 * 100
LGD = 0.45


@dataclass(frozen=True)
class MarketConfig:
    k_by_year: Mapping[int, float]
    market_size_cents: int = MARKET_SIZE_CENTS
    lgd: float = LGD

    def __post_init__(self):
        if not 0 < self.lgd < 1:
            raise ManifestError("LGD must lie in (0, 1)")
        if self.market_size_cents <= 0:
            raise ManifestError("market size must be positive")
        if any(k < 0 for k in self.k_by_year.values()):
            raise ManifestError("base spreads must be non-negative")

    def k(self, year: int) -> float:
        try:
            return float(self.k_by_year[year])
        except KeyError:
            raise DataError(f"no base spread k for year {year}") from None


def _decimal(x: float) -> Fraction:
    # the shortest decimal that round-trips to x
    return Fraction(repr(float(x)))


def quote_spread(p: float, config: MarketConfig, year: int) -> float:
    """Odds of default times LGD plus the year's base spread; ``inf`` when p = 1.

    Evaluated exactly on the decimal values of the inputs and rounded once, so
    p = 0.1, LGD = 0.45, k = 0.01 quotes exactly 0.06.
    """
    if not 0.0 <= p <= 1.0:
        raise DataError(f"default probability {p} outside [0, 1]")
    k = config.k(year)
    if p >= 1.0:
        return math.inf
    q = _decimal(p)
    return float(q / (1 - q) * _decimal(config.lgd) + _decimal(k))


def squash_risk(score):
    """Map a non-negative risk score (cumulative hazard) into [0, 1) monotonically."""
    s = np.asarray(score, dtype=float)
    return s / (1.0 + s)


@dataclass
class AlgorithmEconomics:
    algorithm: str
    loans_funded: int = 0
    loans_defaulted: int = 0
    income_cents: int = 0
    losses_cents: int = 0
    funded_cents: int = 0

    @property
    def profit_cents(self) -> int:
        return self.income_cents - self.losses_cents

    @property
    def default_rate(self) -> float:
        return 100.0 * self.loans_defaulted / self.loans_funded if self.loans_funded else float("nan")

    @property
    def roa(self) -> float:
        return 100.0 * self.profit_cents / self.funded_cents if self.funded_cents else float("nan")


@dataclass
class MarketResult:
    algorithms: list[str]
    rows: dict[str, AlgorithmEconomics]
    years: list[int]
    total_loans: int
    unfunded_loans: int
    ties: int
    winners: dict[tuple[int, str], str] = field(repr=False, default_factory=dict)

    def market_share(self, algorithm: str) -> float:
        funded = self.total_loans - self.unfunded_loans
        return 100.0 * self.rows[algorithm].loans_funded / funded if funded else float("nan")

    def annual_thousands(self, cents: int, basis: str = "per_year", loans: int = 0) -> float:
        """Cents as thousands of currency units, averaged per year or per funded loan."""
        if basis == "per_year":
            return cents / 100.0 / 1000.0 / len(self.years)
        if basis == "per_loan":
            return cents / 100.0 / 1000.0 / loans if loans else float("nan")
        raise ManifestError(f"unknown income basis {basis!r}")


def _year_scores(forecasts):
    """{year: (firm_ids, scores, labels)} from ForecastSets or plain tuples."""
    out = {}
    for f in forecasts:
        year = int(f.test_year)
        if year in out:
            raise DataError(f"duplicate forecasts for {year}")
        out[year] = (np.asarray(f.firm_ids), np.asarray(f.scores, dtype=float),
                     np.asarray(f.labels, dtype=int))
    return out


def simulate_competition(forecasts: Mapping[str, Sequence], config: MarketConfig,
                         risk_score_algorithms: Sequence[str] | None = None,
                         labels: Mapping[tuple[str, int], int] | None = None) -> MarketResult:
    """Run the loan market over every test year the algorithms share.

    ``forecasts`` maps algorithm name (in tie-break order) to its per-year
    forecasts.  Scores of algorithms in ``risk_score_algorithms`` (default: any
    whose forecasts come from the survival forest) go through
    :func:`squash_risk` before quoting.  Each year's market is split into equal
    loans over the firms sorted by id; the rounding remainder goes to the last
    loan.  Interest on each repaid loan and the loss on each defaulted one are
    rounded to the nearest cent.
    """
    algs = list(forecasts)
    if not algs:
        raise DataError("no algorithms to simulate")
    if risk_score_algorithms is None:
        risk_score_algorithms = [a for a in algs
                                 if any(getattr(f, "family", None) == "survival_forest"
                                        for f in forecasts[a])]
    per_alg = {a: _year_scores(forecasts[a]) for a in algs}
    years = sorted(per_alg[algs[0]])
    for a in algs[1:]:
        if sorted(per_alg[a]) != years:
            raise DataError(f"{a} forecasts cover years {sorted(per_alg[a])}, expected {years}")

    rows = {a: AlgorithmEconomics(a) for a in algs}
    winners = {}
    ties = unfunded = total = 0
    for year in years:
        ids0, _, lab0 = per_alg[algs[0]][year]
        order = np.argsort(ids0, kind="mergesort")
        firms = ids0[order]
        truth = lab0[order]
        if labels is not None:
            truth = np.array([labels[(str(f), year)] for f in firms])
        n = len(firms)
        if n == 0:
            continue
        spreads = np.empty((len(algs), n))
        for i, a in enumerate(algs):
            ids, scores, labs = per_alg[a][year]
            lookup = dict(zip(ids.tolist(), range(len(ids))))
            idx = []
            for f in firms.tolist():
                if f not in lookup:
                    raise DataError(f"missing score for algorithm {a}, firm {f}, year {year}")
                idx.append(lookup[f])
            idx = np.array(idx, dtype=int)
            if len(ids) != n:
                raise DataError(f"{a} scores firms outside the {year} universe")
            if labels is None and not np.array_equal(labs[idx], truth):
                raise DataError(f"{a} disagrees on realized labels in {year}")
            p = scores[idx]
            if a in risk_score_algorithms:
                p = squash_risk(p)
            spreads[i] = [quote_spread(float(v), config, year) for v in p]
        size = config.market_size_cents // n
        sizes = np.full(n, size, dtype=np.int64)
        sizes[-1] = config.market_size_cents - size * (n - 1)
        best = spreads.min(axis=0)
        for j in range(n):
            total += 1
            if math.isinf(best[j]):
                unfunded += 1
                continue
            tied = np.flatnonzero(spreads[:, j] == best[j])
            if len(tied) > 1:
                ties += 1
                log.info("%d firm %s: tie between %s, funded by %s", year, firms[j],
                         [algs[t] for t in tied], algs[tied[0]])
            w = rows[algs[tied[0]]]
            winners[(year, str(firms[j]))] = w.algorithm
            amount = int(sizes[j])
            w.loans_funded += 1
            w.funded_cents += amount
            if truth[j]:
                w.loans_defaulted += 1
                w.losses_cents += int(round(config.lgd * amount))
            else:
                w.income_cents += int(round(best[j] * amount))
    if ties:
        log.info("%d loans had tied lowest quotes", ties)
    if unfunded:
        log.warning("%d loans unfunded: every algorithm quoted an infinite spread", unfunded)
    return MarketResult(algs, rows, years, total, unfunded, ties, winners)


TABLE_HEADER = ["algorithm", "loans_funded", "loans_defaulted", "default_rate_pct",
                "market_share_pct", "annual_interest_income", "annual_losses", "annual_profit",
                "roa_pct"]


def market_rows(result: MarketResult, basis: str = "per_year"):
    out = []
    for a in result.algorithms:
        r = result.rows[a]
        out.append([DISPLAY_NAMES.get(a, a), r.loans_funded, r.loans_defaulted, r.default_rate,
                    result.market_share(a),
                    result.annual_thousands(r.income_cents, basis, r.loans_funded),
                    result.annual_thousands(r.losses_cents, basis, r.loans_funded),
                    result.annual_thousands(r.profit_cents, basis, r.loans_funded),
                    r.roa])
    return out


def write_market(result: MarketResult, path: str, basis: str = "per_year") -> None:
    """Table 5 layout; money columns in thousands."""
    write_table(path, TABLE_HEADER, market_rows(result, basis), digits=2)


def load_k_by_year(path: str) -> dict[int, float]:
    """Two-column file ``year, k`` (k as a decimal spread)."""
    out = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or (i == 0 and row[0].strip() == "year"):
                    continue
                if len(row) != 2:
                    raise DataError(f"{path}: line {i + 1}: expected two columns")
                out[int(row[0])] = float(row[1])
    except FileNotFoundError:
        raise DataError(f"base spread file not found: {path}") from None
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return out

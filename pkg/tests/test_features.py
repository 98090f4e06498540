import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distress_bench.errors import DataError
from distress_bench.features import (
    MACRO_COLUMNS, EquitySeries, MacroRow, RawInputs, SkeletonRow, Statement,
    align_predictors, call_value, distance_to_default, herfindahl, implied_asset_value,
    industry_aggregates, latest_statement, market_model_stats, merton_dd, naive_dd,
    relative_size, statement_cutoff,
)


def bs_call(V, F, r, s, T):
    """Black-Scholes call via math.erf, independent of the library's normal CDF."""
    N = lambda x: 0.5 * (1 + math.erf(x / math.sqrt(2)))  # noqa: E731
    d1 = (math.log(V / F) + (r + 0.5 * s * s) * T) / (s * math.sqrt(T))
    return V * N(d1) - F * math.exp(-r * T) * N(d1 - s * math.sqrt(T))


def random_series(rng, firm="F", n=252):
    m = rng.normal(0.0004, 0.01, n)
    r = np.clip(0.0002 + rng.uniform(0.5, 1.5) * m + rng.normal(0, rng.uniform(0.005, 0.04), n),
                -0.5, 0.5)
    E = float(np.exp(rng.uniform(2, 8)))
    return EquitySeries(firm, r, m, E, E * float(np.exp(rng.uniform(-2, 2))),
                        float(rng.uniform(0.0, 0.08)), float(n))


def test_call_value_matches_erf_formula():
    for V, F, r, s in [(120, 100, 0.03, 0.2), (50, 100, 0.0, 0.6), (1000, 10, 0.05, 0.1)]:
        assert float(call_value(V, F, r, s)) == pytest.approx(bs_call(V, F, r, s, 1.0), rel=1e-12)


def test_merton_repricing_on_100_firms():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(100):
        s = random_series(rng, f"F{i}")
        res = merton_dd(s)
        assert res.converged
        E_model = bs_call(res.V, s.face_value, s.rate, res.sigma_V, 1.0)
        worst = max(worst, abs(E_model - s.equity) / s.equity)
    assert worst <= 1e-8


def test_implied_asset_value_inverts_call():
    E = np.array([1.0, 10.0, 500.0])
    V = implied_asset_value(E, 100.0, 0.03, 0.25)
    assert np.allclose(call_value(V, 100.0, 0.03, 0.25), E, rtol=1e-12)


def test_dd_strictly_increasing_in_leverage_ratio():
    dds = [distance_to_default(v, 100.0, 0.05, 0.3) for v in (110.0, 150.0, 200.0, 400.0)]
    assert all(a < b for a, b in zip(dds, dds[1:]))
    # closed form at V/F = e^0.5: (0.5 + (0.05 - 0.045)) / 0.3
    assert distance_to_default(100 * math.exp(0.5), 100.0, 0.05, 0.3) == pytest.approx(
        (0.5 + 0.05 - 0.045) / 0.3, rel=1e-12)


def test_drift_floor_flag():
    rng = np.random.default_rng(5)
    n = 252
    m = rng.normal(0, 0.01, n)
    s = EquitySeries("D", np.full(n, -0.004) + m + rng.normal(0, 0.01, n), m, 50.0, 80.0, 0.03, n)
    floored = merton_dd(s, floor_drift=True)
    raw = merton_dd(s, floor_drift=False)
    assert raw.mu < 0.03 - 0.10
    assert floored.mu == pytest.approx(0.03 - 0.10)
    assert floored.dd > raw.dd


def test_naive_dd_hand_value():
    rng = np.random.default_rng(1)
    s = random_series(rng)
    sE = float(np.std(s.returns, ddof=1)) * math.sqrt(s.periods_per_year)
    E, F = s.equity, s.face_value
    sV = E / (E + F) * sE + F / (E + F) * (0.05 + 0.25 * sE)
    mu = float(np.prod(1 + s.returns) - 1)
    assert naive_dd(s) == pytest.approx((math.log((E + F) / F) + mu - sV * sV / 2) / sV, rel=1e-12)


def test_market_model_matches_least_squares():
    rng = np.random.default_rng(3)
    s = random_series(rng)
    X = np.column_stack([np.ones(len(s.returns)), s.index_returns])
    coef, *_ = np.linalg.lstsq(X, s.returns, rcond=None)
    resid = s.returns - X @ coef
    beta, sigma, excess = market_model_stats(s)
    assert beta == pytest.approx(coef[1], rel=1e-10)
    assert sigma == pytest.approx(math.sqrt(resid @ resid / (len(resid) - 2)), rel=1e-10)
    assert excess == pytest.approx(np.prod(1 + s.returns) - np.prod(1 + s.index_returns), rel=1e-12)


def test_series_validation():
    with pytest.raises(DataError, match="need 30"):
        EquitySeries("X", np.zeros(10), np.zeros(10), 1.0, 1.0, 0.0)
    with pytest.raises(DataError):
        EquitySeries("X", np.zeros(40), np.zeros(40), 1.0, 0.0, 0.0)
    with pytest.raises(DataError):
        EquitySeries("X", np.full(40, -1.0), np.zeros(40), 1.0, 1.0, 0.0)


def test_relative_size():
    assert relative_size(10.0, 1000.0) == pytest.approx(math.log(0.01))
    with pytest.raises(DataError):
        relative_size(0.0, 1.0)


def test_herfindahl_cases():
    assert herfindahl([5.0]) == 1.0
    assert herfindahl([3.0, 3.0]) == 0.5
    assert herfindahl([6.0, 4.0]) == pytest.approx(0.52, abs=1e-15)
    assert math.isnan(herfindahl([]))


@given(st.lists(st.floats(0.01, 1e6), min_size=1, max_size=30))
def test_herfindahl_bounds(sales):
    h = herfindahl(sales)
    assert 1 / len(sales) - 1e-12 <= h <= 1 + 1e-12


def test_industry_aggregates_median_and_history():
    agg = industry_aggregates([1, 1, 1, 2], [1.0, 1.0, 2.0, 4.0], [0.1, 0.3, np.nan, 0.2],
                              [0.5, 0.6, 0.7, 0.8], {1: (2, 3)})
    assert agg[1].median_sigma == pytest.approx(0.2)
    assert agg[1].median_tl_at == pytest.approx(0.6)
    assert (agg[1].defaults_last_1yr, agg[1].defaults_last_2yr) == (2, 5)
    assert agg[2].hh_sales == 1.0
    assert math.isnan(agg[3].hh_sales)


# ---------------------------------------------------------------------------
# timing


def test_statement_cutoff_boundaries():
    assert statement_cutoff(1995) == dt.date(1994, 7, 1)
    june = Statement("A", dt.date(1994, 6, 30), {"x": 1.0})
    sept = Statement("A", dt.date(1994, 9, 30), {"x": 2.0})
    older = Statement("A", dt.date(1993, 9, 30), {"x": 3.0})
    assert latest_statement([older, june], 1995) is june
    assert latest_statement([older, sept], 1995) is older
    assert latest_statement([sept], 1995) is None


def macro(year, term=1.0):
    return MacroRow(year, term, 1.0, 0, 2.0, 2.5, 5.0, 1.0)


def raw_inputs():
    skeleton = [SkeletonRow("A", 1990, 0, 1992, "censored", 1),
                SkeletonRow("A", 1991, 0, 1992, "censored", 1),
                SkeletonRow("B", 1991, 1, 1991, "bankrupt", 1)]
    statements = [Statement("A", dt.date(1989, 6, 30), {"tl_at": 0.4, "sale": 5.0}),
                  Statement("A", dt.date(1989, 9, 30), {"tl_at": 0.9, "sale": 5.0}),
                  Statement("B", dt.date(1990, 3, 31), {"tl_at": 0.7, "sale": 5.0})]
    market = {("A", 1989): {"sigma": 0.1, "distance_to_default": 3.0, "beta": 1.0,
                            "excess_return": 0.0, "relative_size": -3.0},
              ("A", 1990): {"sigma": 0.2, "distance_to_default": 2.0, "beta": 1.0,
                            "excess_return": 0.0, "relative_size": -3.0}}
    return RawInputs(skeleton, statements, ("tl_at",), market, {1989: macro(1989, 0.5),
                                                                1990: macro(1990, 0.9)})


def test_align_uses_prior_year_inputs():
    panel, dropped = align_predictors(raw_inputs())
    assert dropped == 0
    a90 = panel.select((panel.firm_id == "A") & (panel.year == 1990))
    assert a90.column("tl_at")[0] == 0.4  # June statement eligible, September not
    assert a90.column("term_spread")[0] == 0.5  # December 1989 macro reading
    assert a90.column("distance_to_default")[0] == 3.0
    a91 = panel.select((panel.firm_id == "A") & (panel.year == 1991))
    assert a91.column("tl_at")[0] == 0.9
    assert a91.column("sigma")[0] == 0.2
    # B defaulted in 1990's forecast window of 1991 -> counted for 1992, not 1991
    assert a91.column("industry_defaults_1yr")[0] == 0


def test_align_drops_years_without_macro():
    raw = raw_inputs()
    raw.macro.pop(1989)
    panel, dropped = align_predictors(raw)
    assert dropped == 1 and len(panel) == 2


def test_align_ignores_information_from_forecast_year():
    base, _ = align_predictors(raw_inputs())
    raw = raw_inputs()
    raw.statements.append(Statement("A", dt.date(1990, 6, 30), {"tl_at": 99.0, "sale": 1.0}))
    raw.market[("A", 1991)] = {"sigma": 99.0, "distance_to_default": -9.0, "beta": 9.0,
                               "excess_return": 9.0, "relative_size": 9.0}
    raw.macro[1991] = macro(1991, 99.0)
    leaked, _ = align_predictors(raw)
    a90 = lambda p: p.select((p.firm_id == "A") & (p.year == 1990))  # noqa: E731
    assert a90(leaked).equals(a90(base))


def test_macro_row_validation():
    with pytest.raises(DataError):
        MacroRow(1990, 1.0, 1.0, 2, 1.0, 1.0, 1.0, 1.0)
    assert len(macro(1990).values()) == len(MACRO_COLUMNS)

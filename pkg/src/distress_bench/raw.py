"""Raw input bundles for the feature pipeline: file layout, synthesis and loading.

A bundle is a directory holding

* ``skeleton.csv``: firm_id, year, defaulted_next_year, event_time, event_status, industry
* ``statements.csv``: firm_id, period_end, then one column per accounting field
* ``returns.csv``: firm_id, date, return, index_return (long format)
* ``firm_years.csv``: firm_id, year, market_equity, face_value, risk_free, index_market_value
* ``macro.csv``: year plus the seven macro columns
* ``documents/<firm>/<year>.txt`` and ``sentence_labels.csv`` (optional)
* ``lexicon_words.csv``, ``lexicon_valence.csv``, ``lexicon_boosters.csv`` (optional)
"""
from __future__ import annotations

import datetime as dt
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DataError
from .features import (MACRO_COLUMNS, RawInputs, align_predictors, compute_market_table,
                       load_equity_series, load_macro, load_skeleton, load_statements)
from .io import atomic_write, render_table
from .panel import BANKRUPT, CENSORED, N_INDUSTRIES, Panel
from .text import TEXT_FEATURES, builtin_lexicon, compute_text_table, load_documents
from .text import load_lexicon, load_sentence_labels

ACCOUNTING = ("ni_at", "tl_at", "nwc_at", "re_at", "ebit_at", "mkt_tl", "sale_at")


@dataclass(frozen=True)
class BundlePaths:
    root: str

    def __getattr__(self, name):
        files = {
            "skeleton": "skeleton.csv", "statements": "statements.csv",
            "returns": "returns.csv", "firm_years": "firm_years.csv", "macro": "macro.csv",
            "documents": "documents", "sentence_labels": "sentence_labels.csv",
            "lexicon_words": "lexicon_words.csv", "lexicon_valence": "lexicon_valence.csv",
            "lexicon_boosters": "lexicon_boosters.csv",
        }
        if name not in files:
            raise AttributeError(name)
        return os.path.join(self.root, files[name])


_GOOD = ["revenue growth was strong", "margins improve and the outlook is good",
         "the company reported a gain", "operations remain profitable"]
_BAD = ["the company recorded an impairment and a loss", "sales continue to decline",
        "liquidity is weak and default may occur", "a lawsuit was filed in court"]
_NEUTRAL = ["the board met four times", "the company leases office space",
            "management reviewed approximately twelve contracts", "claims are described below"]


def synthesize_bundle(root: str, seed: int = 0, n_firms: int = 30,
                      years: tuple[int, int] = (1994, 2001), periods: int = 52) -> BundlePaths:
    """Write a small self-consistent raw bundle; identical output per seed."""
    rng = np.random.default_rng(seed)
    paths = BundlePaths(root)
    first, last = years
    firms = [f"R{i:04d}" for i in range(n_firms)]
    industry = rng.integers(1, N_INDUSTRIES + 1, size=n_firms)
    fy_month = rng.choice([3, 6, 9, 12], size=n_firms)
    health = rng.standard_normal(n_firms)

    stmt_rows, ret_rows, fy_rows, skel = [], [], [], []
    alive = np.ones(n_firms, dtype=bool)
    exit_year = np.full(n_firms, last)
    status = [CENSORED] * n_firms
    labels = {}
    for year in range(first - 2, last + 1):
        health = 0.8 * health + 0.6 * rng.standard_normal(n_firms)
        for i, f in enumerate(firms):
            if not alive[i]:
                continue
            end = dt.date(year, int(fy_month[i]), 28)
            h = health[i]
            stmt_rows.append([f, end.isoformat(), 0.03 - 0.05 * h + 0.02 * rng.standard_normal(),
                              0.5 + 0.12 * h + 0.05 * rng.standard_normal(),
                              0.2 - 0.05 * h, -0.1 - 0.2 * h, 0.05 - 0.04 * h,
                              max(0.2, 3.0 - 1.0 * h), 1.0 + 0.1 * rng.standard_normal(),
                              float(np.exp(5 + rng.standard_normal()))])
        if year < first:
            continue
        # market data for `year` feeds forecasts of year + 1
        index = rng.normal(0.0015, 0.02, periods)
        for i, f in enumerate(firms):
            if not alive[i]:
                continue
            h = health[i]
            vol = 0.03 + 0.015 * max(h, -1.0)
            beta = 0.8 + 0.3 * rng.random()
            r = np.clip(0.001 - 0.002 * h + beta * index + vol * rng.standard_normal(periods),
                        -0.5, 0.5)
            for k in range(periods):
                d = dt.date(year, 1, 1) + dt.timedelta(days=7 * k)
                ret_rows.append([f, d.isoformat(), float(r[k]), float(index[k])])
            eq = float(np.exp(4.0 - 0.7 * h + 0.3 * rng.standard_normal()))
            fy_rows.append([f, year, eq, eq * float(np.exp(0.8 * h)), 0.03, 1e6])
        if year == first:
            continue
        p = expit(-3.2 + 1.3 * health)
        draw = rng.random(n_firms)
        for i, f in enumerate(firms):
            if not alive[i]:
                continue
            y = int(draw[i] < p[i])
            labels[(f, year)] = y
            if y:
                alive[i] = False
                exit_year[i] = year
                status[i] = BANKRUPT
    for (f, year), y in sorted(labels.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        i = firms.index(f)
        skel.append([f, year, y, int(exit_year[i]), status[i], int(industry[i])])

    macro_rows = []
    for year in range(first, last + 1):
        macro_rows.append([year, *np.round(rng.normal([1.1, 1.0, 0, 3.5, 2.7, 6.0, 2.4],
                                                      [1.0, 0.4, 0, 2.0, 2.5, 1.2, 3.5]), 6)])
        macro_rows[-1][3] = int(rng.random() < 0.15)

    doc_rows = []
    for (f, year), _ in sorted(labels.items()):
        i = firms.index(f)
        n_sent = 6
        sents, labs = [], []
        for _k in range(n_sent):
            u = rng.random()
            pool, lab = ((_BAD, "negative") if u < 0.2 + 0.1 * max(health[i], 0)
                         else (_GOOD, "positive") if u < 0.55 else (_NEUTRAL, "neutral"))
            sents.append(pool[int(rng.integers(len(pool)))].capitalize() + ".")
            labs.append(lab)
        # the filing dated year - 1 feeds the forecast for `year`
        atomic_write(os.path.join(paths.documents, f, f"{year - 1}.txt"), " ".join(sents) + "\n")
        doc_rows.extend([f, year - 1, k, lab] for k, lab in enumerate(labs))

    atomic_write(paths.skeleton, render_table(
        ["firm_id", "year", "defaulted_next_year", "event_time", "event_status", "industry"],
        skel))
    atomic_write(paths.statements, render_table(
        ["firm_id", "period_end", *ACCOUNTING, "sale"], stmt_rows, digits=10))
    atomic_write(paths.returns, render_table(["firm_id", "date", "return", "index_return"],
                                             ret_rows, digits=10))
    atomic_write(paths.firm_years, render_table(
        ["firm_id", "year", "market_equity", "face_value", "risk_free", "index_market_value"],
        fy_rows, digits=10))
    atomic_write(paths.macro, render_table(["year", *MACRO_COLUMNS], macro_rows))
    atomic_write(paths.sentence_labels, render_table(
        ["firm_id", "year", "sentence_index", "label"], doc_rows))
    lex = builtin_lexicon()
    atomic_write(paths.lexicon_words, render_table(
        ["word", "category"],
        [[w, c] for c in sorted(lex.categories) for w in sorted(lex.categories[c])]
        + [[w, "negator"] for w in sorted(lex.negators)]))
    atomic_write(paths.lexicon_valence, render_table(
        ["word", "valence"], [[w, v] for w, v in sorted(lex.valence.items())]))
    atomic_write(paths.lexicon_boosters, render_table(
        ["word", "multiplier"], [[w, v] for w, v in sorted(lex.boosters.items())]))
    return paths


def build_panel(root: str, floor_drift: bool = True, naive_dd: bool = False) -> tuple[Panel, int]:
    """Load a bundle and construct the predictor panel; returns (panel, dropped records)."""
    paths = BundlePaths(root)
    if not os.path.isdir(root):
        raise DataError(f"raw input directory not found: {root}")
    skeleton = load_skeleton(paths.skeleton)
    statements, fields = load_statements(paths.statements)
    accounting = tuple(f for f in fields if f != "sale")
    market = compute_market_table(load_equity_series(paths.returns, paths.firm_years),
                                  floor_drift, naive_dd)
    macro = load_macro(paths.macro)
    text, text_names = {}, ()
    if os.path.isdir(paths.documents):
        docs = load_documents(paths.documents)
        labels = (load_sentence_labels(paths.sentence_labels)
                  if os.path.exists(paths.sentence_labels) else None)
        if os.path.exists(paths.lexicon_words):
            lex = load_lexicon(paths.lexicon_words,
                               paths.lexicon_valence if os.path.exists(paths.lexicon_valence) else None,
                               paths.lexicon_boosters if os.path.exists(paths.lexicon_boosters) else None)
        else:
            lex = builtin_lexicon()
        text = compute_text_table(docs, lex, labels)
        text_names = TEXT_FEATURES
    raw = RawInputs(skeleton, statements, accounting, market, macro, text, text_names)
    return align_predictors(raw)

"""Permutation importance, cross-model importance ranks and PCA reduction."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DataError, SchemaMismatchError
from .metrics import auc
from .models import predict
from .models.dataset import fingerprint
from .parallel import pmap

log = logging.getLogger(__name__)

REDUCED_PREDICTORS = (
    "distance_to_default",
    "ni_at",
    "tl_at",
    "sigma",
    "excess_return",
    "beta",
    "relative_size",
    "finbert_sentiment",
)


def reduced_predictor_set() -> list[str]:
    """Market-model variables plus distance to default and FinBERT sentiment."""
    return list(REDUCED_PREDICTORS)


# ---------------------------------------------------------------------------
# permutation importance


@dataclass
class ImportanceTable:
    model: str
    feature_names: tuple[str, ...]
    delta_auc: np.ndarray
    repeats: int
    seed: int
    baseline_auc: float
    valid_repeats: np.ndarray = field(default=None)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.feature_names, self.delta_auc.tolist()))


def _shuffle(rng, n):
    return rng.permutation(n)


def permutation_importance(model, X, y, feature_names, repeats: int = 10, seed: int = 0,
                           name: str | None = None,
                           permute: Callable[[np.random.Generator, int], np.ndarray] = _shuffle
                           ) -> ImportanceTable:
    """Mean drop in AUC when one column at a time is shuffled.

    Each feature gets its own child seed of ``seed``, so results do not depend
    on evaluation order or worker count.  Repeats whose AUC is undefined are
    discarded and counted in ``valid_repeats``.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    names = tuple(feature_names)
    if fingerprint(names) != model.fingerprint:
        raise SchemaMismatchError("evaluation data schema differs from the model's")
    baseline = auc(predict(model, X, names), y)
    if np.isnan(baseline):
        raise DataError("importance needs both classes in the evaluation data")
    n, p = X.shape
    children = np.random.SeedSequence(seed).spawn(p)

    def one(j):
        rng = np.random.default_rng(children[j])
        deltas = []
        for _ in range(repeats):
            Xp = X.copy()
            Xp[:, j] = X[permute(rng, n), j]
            a = auc(predict(model, Xp, names), y)
            if not np.isnan(a):
                deltas.append(baseline - a)
        return deltas

    results = pmap(one, range(p))
    delta = np.array([np.mean(d) if d else np.nan for d in results])
    valid = np.array([len(d) for d in results])
    dropped = int(repeats * p - valid.sum())
    if dropped:
        log.warning("%d permutation repeats discarded (undefined AUC)", dropped)
    return ImportanceTable(name or model.family, names, delta, repeats, seed, baseline, valid)


# ---------------------------------------------------------------------------
# rank heatmap


@dataclass
class RankingGrid:
    features: list[str]
    models: list[str]
    ranks: np.ndarray
    rank_sums: np.ndarray


def dense_rank_desc(values) -> np.ndarray:
    """1 for the largest value; equal values share a rank, no gaps."""
    values = np.asarray(values, dtype=float)
    filled = np.where(np.isnan(values), -np.inf, values)
    uniq = np.unique(filled)[::-1]
    return np.searchsorted(-uniq, -filled) + 1


def rank_heatmap(tables: Mapping[str, ImportanceTable] | Sequence[ImportanceTable],
                 top_n: int = 25) -> RankingGrid:
    """Per-model dense importance ranks, rows ordered by ascending rank sum (ties by name)."""
    if isinstance(tables, Mapping):
        items = list(tables.items())
    else:
        items = [(t.model, t) for t in tables]
    if not items:
        raise ValueError("no importance tables given")
    features = sorted(items[0][1].feature_names)
    for _, t in items:
        if sorted(t.feature_names) != features:
            raise DataError("importance tables do not share a feature space")
    cols = []
    for _, t in items:
        d = t.as_dict()
        cols.append(dense_rank_desc([d[f] for f in features]))
    ranks = np.column_stack(cols)
    sums = ranks.sum(axis=1)
    order = sorted(range(len(features)), key=lambda i: (sums[i], features[i]))[:top_n]
    return RankingGrid([features[i] for i in order], [m for m, _ in items],
                       ranks[order], sums[order])


# ---------------------------------------------------------------------------
# PCA


@dataclass
class PcaModel:
    feature_names: tuple[str, ...]
    kept: tuple[str, ...]
    dropped: tuple[str, ...]
    mean: np.ndarray
    sd: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray
    explained_ratio: np.ndarray
    k: int
    threshold: float

    @property
    def component_names(self) -> list[str]:
        return [f"pc_{i + 1}" for i in range(self.k)]


def pca_fit(X, threshold: float = 0.95, feature_names: Sequence[str] | None = None) -> PcaModel:
    """Principal components of the standardized training features.

    Constant columns are dropped (listed in ``dropped``).  ``k`` is the
    smallest number of components whose cumulative explained variance reaches
    ``threshold``.  Each loading vector is signed so its largest-magnitude
    entry is positive.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise DataError("PCA needs at least two rows")
    if np.isnan(X).any():
        raise DataError("PCA requires fully imputed inputs")
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"x{j}" for j in range(X.shape[1]))
    sd_all = X.std(axis=0, ddof=1)
    keep = sd_all > 0
    if keep.sum() < 1:
        raise DataError("no non-constant features for PCA")
    dropped = tuple(n for n, k in zip(names, keep) if not k)
    if dropped:
        log.info("PCA dropped constant features: %s", ", ".join(dropped))
    Xk = X[:, keep]
    mean = Xk.mean(axis=0)
    sd = sd_all[keep]
    Zs = (Xk - mean) / sd
    C = Zs.T @ Zs / (len(Zs) - 1)
    C = (C + C.T) / 2
    evals, evecs = np.linalg.eigh(C)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    pivot = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[pivot, np.arange(evecs.shape[1])])
    evecs = evecs * np.where(signs == 0, 1.0, signs)
    ratio = evals / evals.sum()
    cum = np.cumsum(ratio)
    k = int(np.argmax(cum >= threshold - 1e-12)) + 1
    return PcaModel(names, tuple(n for n, kk in zip(names, keep) if kk), dropped, mean, sd,
                    evecs, evals, ratio, k, threshold)


def pca_transform(model: PcaModel, X, feature_names: Sequence[str] | None = None) -> np.ndarray:
    """Scores on the first ``k`` components, using the training mean and sd."""
    X = np.asarray(X, dtype=float)
    if feature_names is not None and tuple(feature_names) != model.feature_names:
        raise SchemaMismatchError("PCA input schema differs from the fitted schema")
    if X.shape[1] != len(model.feature_names):
        raise SchemaMismatchError("PCA input has the wrong number of columns")
    keep = [model.feature_names.index(n) for n in model.kept]
    Zs = (X[:, keep] - model.mean) / model.sd
    return Zs @ model.loadings[:, :model.k]

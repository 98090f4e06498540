"""CART classification trees, random forests and random survival forests."""
from __future__ import annotations

import numpy as np

from ..parallel import pmap
from .tree import Binner, FrozenTree, GiniSplitter, LogRankSplitter, grow, resolve_mtry


def _scalar_tree(tree, payloads) -> FrozenTree:
    ft = tree.freeze()
    leaves = ft.feature < 0
    vals = np.asarray(payloads, dtype=float)
    ft.value = np.where(leaves, vals[ft.value.astype(np.int64)], 0.0)
    return ft


def train_cart(Z, y, max_depth=None, min_leaf=1, mtry=None, seed=0, max_bins=256,
               rows=None, binner=None) -> FrozenTree:
    """Greedy Gini tree; leaf value is the training default fraction."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    if binner is None:
        binner = Binner(max_bins).fit(Z)
    B = binner.transform(Z)
    idx = np.arange(len(Z)) if rows is None else np.asarray(rows)
    m = resolve_mtry(mtry, Z.shape[1])
    rng = np.random.default_rng(seed)
    tree, payloads = grow(B, binner.thresholds, binner.n_thresholds, binner.width, idx,
                          GiniSplitter(y, min_leaf), max_depth=max_depth, mtry=m, rng=rng)
    return _scalar_tree(tree, payloads)


def _child_seeds(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def train_random_forest(Z, y, n_trees=100, mtry="sqrt", max_depth=None, min_leaf=1,
                        seed=0, bootstrap=True, max_bins=256) -> list[FrozenTree]:
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    binner = Binner(max_bins).fit(Z)
    B = binner.transform(Z)
    n, p = Z.shape
    m = resolve_mtry(mtry, p)
    rngs = _child_seeds(seed, n_trees)

    def one(rng):
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        tree, payloads = grow(B, binner.thresholds, binner.n_thresholds, binner.width, idx,
                              GiniSplitter(y, min_leaf), max_depth=max_depth, mtry=m, rng=rng)
        return _scalar_tree(tree, payloads)

    return pmap(one, rngs)


def predict_forest(trees, Z) -> np.ndarray:
    total = np.zeros(len(Z))
    for t in trees:
        total += t.predict(Z)
    return total / len(trees)


# ---------------------------------------------------------------------------
# survival forest


class SurvivalTree:
    """Tree whose leaves hold Nelson-Aalen cumulative hazards on ``times``."""

    def __init__(self, tree: FrozenTree, hazards: np.ndarray, times: np.ndarray):
        self.tree = tree
        self.hazards = hazards
        self.times = times

    def cumulative_hazard(self, Z, t) -> np.ndarray:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        leaf = self.tree.apply(Z)
        if k < 0:
            return np.zeros(len(Z))
        payload = self.tree.value[leaf].astype(np.int64)
        return self.hazards[payload, k]

    def to_dict(self):
        return {"tree": self.tree.to_dict(), "hazards": self.hazards.tolist(),
                "times": self.times.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(FrozenTree.from_dict(d["tree"]),
                   np.array(d["hazards"], dtype=float).reshape(-1, len(d["times"])),
                   np.array(d["times"], dtype=float))


def train_survival_tree(Z, time, status, min_leaf=1, mtry=None, max_depth=None, seed=0,
                        max_bins=256, rows=None, binner=None) -> SurvivalTree:
    Z = np.asarray(Z, dtype=float)
    time = np.asarray(time, dtype=float)
    times, tidx = np.unique(time, return_inverse=True)
    if binner is None:
        binner = Binner(max_bins).fit(Z)
    B = binner.transform(Z)
    idx = np.arange(len(Z)) if rows is None else np.asarray(rows)
    m = resolve_mtry(mtry, Z.shape[1])
    splitter = LogRankSplitter(tidx, status, len(times), min_leaf)
    tree, payloads = grow(B, binner.thresholds, binner.n_thresholds, binner.width, idx,
                          splitter, max_depth=max_depth, mtry=m,
                          rng=np.random.default_rng(seed))
    return SurvivalTree(tree.freeze(), np.vstack(payloads), times)


def train_survival_forest(Z, time, status, n_trees=100, mtry="sqrt", min_leaf=5, max_depth=None,
                          seed=0, bootstrap=True, max_bins=256) -> list[SurvivalTree]:
    Z = np.asarray(Z, dtype=float)
    time = np.asarray(time, dtype=float)
    status = np.asarray(status, dtype=float)
    times, tidx = np.unique(time, return_inverse=True)
    binner = Binner(max_bins).fit(Z)
    B = binner.transform(Z)
    n, p = Z.shape
    m = resolve_mtry(mtry, p)
    rngs = _child_seeds(seed, n_trees)

    def one(rng):
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        splitter = LogRankSplitter(tidx, status, len(times), min_leaf)
        tree, payloads = grow(B, binner.thresholds, binner.n_thresholds, binner.width, idx,
                              splitter, max_depth=max_depth, mtry=m, rng=rng)
        return SurvivalTree(tree.freeze(), np.vstack(payloads), times)

    return pmap(one, rngs)


def predict_survival_forest(trees, Z, horizon=1.0) -> np.ndarray:
    """Ensemble-averaged cumulative hazard at ``horizon`` (a risk score)."""
    total = np.zeros(len(Z))
    for t in trees:
        total += t.cumulative_hazard(Z, horizon)
    return total / len(trees)

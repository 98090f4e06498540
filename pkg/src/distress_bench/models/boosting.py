"""Newton gradient boosting of regression trees under logistic loss.

Two growth policies mirror the two popular libraries: ``level_wise`` splits
every node down to ``max_depth``; ``leaf_wise`` repeatedly splits the leaf
with the largest gain until ``max_leaves`` leaves exist.  Leaf weights are
``-G / (H + l2_reg)`` scaled by the learning rate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .forest import _scalar_tree
from .tree import Binner, FrozenTree, NewtonSplitter, grow

log = logging.getLogger(__name__)


def logistic_loss(margin, y) -> float:
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


@dataclass
class BoostedEnsemble:
    base_margin: float
    trees: list[FrozenTree] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)

    def margin(self, Z) -> np.ndarray:
        m = np.full(len(Z), self.base_margin)
        for t in self.trees:
            m += t.predict(Z)
        return m

    def predict(self, Z) -> np.ndarray:
        return expit(self.margin(Z))


def train_gbt(Z, y, variant="level_wise", rounds=100, learning_rate=0.1, max_depth=6,
              max_leaves=31, l2_reg=1.0, min_leaf=1, min_child_weight=1.0, seed=0,
              max_bins=256) -> BoostedEnsemble:
    """Fit a boosted ensemble; ``train_loss[r]`` is the mean loss after ``r`` rounds.

    A round whose tree would raise the training loss is halved until it does
    not (a plain Newton step on a leaf can overshoot).
    """
    if variant not in ("level_wise", "leaf_wise"):
        raise ValueError(f"unknown boosting variant {variant!r}")
    if rounds < 1 or not 0 < learning_rate <= 1:
        raise ValueError("rounds >= 1 and learning_rate in (0, 1] required")
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    binner = Binner(max_bins).fit(Z)
    B = binner.transform(Z)
    idx = np.arange(len(Z))
    ybar = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    model = BoostedEnsemble(float(np.log(ybar / (1 - ybar))))
    margin = np.full(len(Z), model.base_margin)
    loss = logistic_loss(margin, y)
    model.train_loss.append(loss)
    rng = np.random.default_rng(seed)

    for r in range(rounds):
        prob = expit(margin)
        g = prob - y
        h = prob * (1 - prob)
        if h.sum() <= 0:
            log.warning("boosting stopped after %d rounds: hessians vanished", r)
            break
        splitter = NewtonSplitter(g, h, l2_reg, min_leaf, min_child_weight)
        if variant == "level_wise":
            tree, payloads = grow(B, binner.thresholds, binner.n_thresholds, binner.width, idx,
                                  splitter, max_depth=max_depth, rng=rng)
        else:
            depth = None if max_depth is None or max_depth < 0 else max_depth
            tree, payloads = grow(B, binner.thresholds, binner.n_thresholds, binner.width, idx,
                                  splitter, max_depth=depth, max_leaves=max_leaves, rng=rng,
                                  best_first=True)
        ft = _scalar_tree(tree, payloads)
        ft.value = ft.value * learning_rate
        step = ft.predict(Z)
        new_loss = logistic_loss(margin + step, y)
        shrink = 0
        while new_loss > loss and shrink < 40:
            ft.value = ft.value * 0.5
            step = step * 0.5
            new_loss = logistic_loss(margin + step, y)
            shrink += 1
        if new_loss > loss:
            ft.value = np.zeros_like(ft.value)
            step = np.zeros_like(step)
            new_loss = loss
        margin = margin + step
        loss = new_loss
        model.trees.append(ft)
        model.train_loss.append(loss)
    return model

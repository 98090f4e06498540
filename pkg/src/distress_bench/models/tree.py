"""Histogram tree growing shared by CART, survival trees and boosted trees.

Features are pre-binned once per fit.  Candidate thresholds are observed
training values; a row goes left when ``x <= threshold`` or when ``x`` is
missing.  When a feature has at most ``max_bins`` distinct values every value
is a candidate, so the search is exhaustive.

Ties between candidate splits (equal criterion up to 1e-12 relative) go to the
lowest feature index, then the lowest threshold.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TIE_TOL = 1e-12


class Binner:
    """Maps each feature onto integer bins bounded by observed values."""

    def __init__(self, max_bins: int = 256):
        self.max_bins = max_bins
        self.thresholds: list[np.ndarray] = []

    def fit(self, Z: np.ndarray) -> "Binner":
        self.thresholds = []
        for j in range(Z.shape[1]):
            col = Z[:, j]
            col = col[~np.isnan(col)]
            uniq = np.unique(col)
            if len(uniq) > self.max_bins:
                q = np.linspace(0.0, 1.0, self.max_bins + 1)[1:-1]
                uniq = np.unique(np.quantile(col, q, method="inverted_cdf"))
                uniq = np.unique(np.r_[uniq, col.max()])
            # the largest value can never split anything off
            self.thresholds.append(uniq[:-1].copy())
        return self

    @property
    def width(self) -> int:
        # one slot per threshold, one for values above all thresholds, one for missing
        return max((len(t) for t in self.thresholds), default=0) + 2

    @property
    def n_thresholds(self) -> np.ndarray:
        return np.array([len(t) for t in self.thresholds], dtype=np.int64)

    def transform(self, Z: np.ndarray) -> np.ndarray:
        W = self.width
        B = np.empty(Z.shape, dtype=np.int32)
        for j, thr in enumerate(self.thresholds):
            col = Z[:, j]
            B[:, j] = np.searchsorted(thr, col, side="left")
            B[np.isnan(col), j] = W - 1
        return B


@dataclass
class Split:
    gain: float
    feature: int
    bin: int


class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def add_leaf(self, value) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def set_split(self, node, feature, threshold, left, right):
        self.feature[node] = int(feature)
        self.threshold[node] = float(threshold)
        self.left[node] = left
        self.right[node] = right

    def freeze(self) -> "FrozenTree":
        return FrozenTree(
            np.array(self.feature, dtype=np.int64),
            np.array(self.threshold, dtype=float),
            np.array(self.left, dtype=np.int64),
            np.array(self.right, dtype=np.int64),
            np.array(self.value, dtype=float),
        )


@dataclass
class FrozenTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def apply(self, Z: np.ndarray) -> np.ndarray:
        """Leaf node index reached by each row."""
        node = np.zeros(len(Z), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while len(active):
            nd = node[active]
            x = Z[active, self.feature[nd]]
            go_left = np.isnan(x) | (x <= self.threshold[nd])
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, Z: np.ndarray) -> np.ndarray:
        return self.value[self.apply(Z)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "FrozenTree":
        return cls(
            np.array(d["feature"], dtype=np.int64),
            np.array(d["threshold"], dtype=float),
            np.array(d["left"], dtype=np.int64),
            np.array(d["right"], dtype=np.int64),
            np.array(d["value"], dtype=float),
        )


# ---------------------------------------------------------------------------
# histogram helpers


def histograms(B, idx, feats, W, weights=()):
    """Per-feature bin counts (and weighted sums) for the rows ``idx``.

    Returns arrays of shape ``(len(feats), W)``: counts first, then one per
    entry of ``weights``.
    """
    k = len(feats)
    codes = (B[np.ix_(idx, feats)] + np.arange(k) * W).ravel()
    size = k * W
    out = [np.bincount(codes, minlength=size).reshape(k, W).astype(float)]
    for w in weights:
        wv = np.broadcast_to(w[idx][:, None], (len(idx), k)).ravel()
        out.append(np.bincount(codes, weights=wv, minlength=size).reshape(k, W))
    return out


def left_sums(hist):
    """Cumulative left-child totals for every threshold (missing goes left)."""
    return np.cumsum(hist[:, :-1], axis=1) + hist[:, -1:]


def candidate_mask(counts, n_thr_feats, min_leaf):
    """Valid thresholds: real threshold, non-empty bin, both children >= min_leaf."""
    k, W = counts.shape
    n = counts[0].sum()
    nL = left_sums(counts)
    nR = n - nL
    bins = np.arange(W - 1)
    valid = bins[None, :] < n_thr_feats[:, None]
    valid &= counts[:, :-1] > 0
    valid &= (nL >= min_leaf) & (nR >= min_leaf)
    return valid, nL, nR


def pick_best(gain, valid, feats):
    """First (feature, bin) within tolerance of the maximum gain, or None."""
    if not valid.any():
        return None
    g = np.where(valid, gain, -np.inf)
    best = g.max()
    if not np.isfinite(best):
        return None
    tol = TIE_TOL * max(1.0, abs(best))
    flat = np.flatnonzero(g.ravel() >= best - tol)[0]
    fi, b = divmod(int(flat), g.shape[1])
    return Split(float(g[fi, b]), int(feats[fi]), int(b))


# ---------------------------------------------------------------------------
# splitters


class GiniSplitter:
    def __init__(self, y, min_leaf):
        self.y = np.asarray(y, dtype=float)
        self.min_leaf = min_leaf

    def leaf_value(self, idx):
        return float(self.y[idx].mean())

    def is_pure(self, idx):
        s = self.y[idx].sum()
        return s == 0 or s == len(idx)

    def best(self, B, idx, feats, W, n_thr):
        counts, pos = histograms(B, idx, feats, W, (self.y,))
        valid, nL, nR = candidate_mask(counts, n_thr[feats], self.min_leaf)
        n = float(len(idx))
        P = self.y[idx].sum()
        pL = left_sums(pos)
        pR = P - pL
        with np.errstate(divide="ignore", invalid="ignore"):
            child = (nL - (pL ** 2 + (nL - pL) ** 2) / nL) + (nR - (pR ** 2 + (nR - pR) ** 2) / nR)
        parent = n - (P ** 2 + (n - P) ** 2) / n
        gain = (parent - child) / n
        return pick_best(gain, valid, feats)


class NewtonSplitter:
    """Second-order split gain used by gradient boosting."""

    def __init__(self, g, h, l2_reg, min_leaf, min_child_weight):
        self.g = g
        self.h = h
        self.lam = l2_reg
        self.min_leaf = min_leaf
        self.mcw = min_child_weight

    def leaf_value(self, idx):
        G = self.g[idx].sum()
        H = self.h[idx].sum()
        return float(-G / (H + self.lam)) if H + self.lam > 0 else 0.0

    def is_pure(self, idx):
        return False

    def best(self, B, idx, feats, W, n_thr):
        counts, gh, hh = histograms(B, idx, feats, W, (self.g, self.h))
        valid, _nL, _nR = candidate_mask(counts, n_thr[feats], self.min_leaf)
        G = self.g[idx].sum()
        H = self.h[idx].sum()
        GL = left_sums(gh)
        HL = left_sums(hh)
        GR = G - GL
        HR = H - HL
        valid &= (HL >= self.mcw) & (HR >= self.mcw)
        lam = self.lam
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 0.5 * (GL ** 2 / (HL + lam) + GR ** 2 / (HR + lam) - G ** 2 / (H + lam))
        valid &= np.isfinite(gain) & (gain > TIE_TOL)
        return pick_best(gain, valid, feats)


class LogRankSplitter:
    """Maximises the absolute two-sample log-rank statistic.

    ``tidx`` holds each row's rank among the distinct observed times, so the
    criterion (and the tree) depends on times only through their order.
    """

    def __init__(self, tidx, status, n_times, min_leaf):
        self.tidx = np.asarray(tidx, dtype=np.int64)
        self.status = np.asarray(status, dtype=float)
        self.D = n_times
        self.min_leaf = min_leaf

    def leaf_value(self, idx):
        return nelson_aalen(self.tidx[idx], self.status[idx], self.D)

    def is_pure(self, idx):
        return self.status[idx].sum() == 0

    def best(self, B, idx, feats, W, n_thr):
        k = len(feats)
        D = self.D
        m = len(idx)
        t = self.tidx[idx]
        codes = ((B[np.ix_(idx, feats)] + np.arange(k) * W) * D + t[:, None]).ravel()
        size = k * W * D
        cnt = np.bincount(codes, minlength=size).reshape(k, W, D).astype(float)
        ev = np.bincount(codes, weights=np.broadcast_to(self.status[idx][:, None], (m, k)).ravel(),
                         minlength=size).reshape(k, W, D)

        counts = cnt.sum(axis=2)
        valid, _nL, _nR = candidate_mask(counts, n_thr[feats], self.min_leaf)

        c_all = cnt[0].sum(axis=0)
        d_all = ev[0].sum(axis=0)
        Y = np.cumsum(c_all[::-1])[::-1]
        cL = np.cumsum(cnt[:, :-1, :], axis=1) + cnt[:, -1:, :]
        dL = np.cumsum(ev[:, :-1, :], axis=1) + ev[:, -1:, :]
        YL = np.cumsum(cL[:, :, ::-1], axis=2)[:, :, ::-1]

        use = (d_all > 0) & (Y > 0)
        if not use.any():
            return None
        Yu, du = Y[use], d_all[use]
        YLu, dLu = YL[:, :, use], dL[:, :, use]
        frac = YLu / Yu
        num = (dLu - frac * du).sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            shrink = np.where(Yu > 1, (Yu - du) / (Yu - 1), 0.0)
        var = (frac * (1 - frac) * shrink * du).sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            stat = np.where(var > 0, np.abs(num) / np.sqrt(var), 0.0)
        valid &= stat > TIE_TOL
        return pick_best(stat, valid, feats)


def nelson_aalen(tidx, status, n_times):
    """Cumulative hazard at each distinct time index (length ``n_times``)."""
    c = np.bincount(tidx, minlength=n_times).astype(float)
    d = np.bincount(tidx, weights=status, minlength=n_times)
    Y = np.cumsum(c[::-1])[::-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        inc = np.where(Y > 0, d / Y, 0.0)
    return np.cumsum(inc)


# ---------------------------------------------------------------------------
# growth


def grow(B, thresholds, n_thr, W, idx, splitter, *, max_depth=None, max_leaves=None,
         mtry=None, rng=None, best_first=False):
    """Grow one tree on rows ``idx``.

    With ``best_first`` the leaf with the largest gain is split until
    ``max_leaves`` leaves exist; otherwise every splittable node is split
    breadth-first down to ``max_depth``.

    Returns ``(tree, payloads)``: leaf values stay in ``payloads`` (indexed by
    ``tree.value`` for leaves) so that splitters may return arrays.
    """
    p = B.shape[1]
    tree = Tree()
    payloads = []

    def features():
        if mtry is None or mtry >= p:
            return np.arange(p)
        return np.sort(rng.choice(p, size=mtry, replace=False))

    def make_leaf(rows):
        payloads.append(splitter.leaf_value(rows))
        return tree.add_leaf(len(payloads) - 1)

    def candidate(rows, depth):
        if max_depth is not None and depth >= max_depth:
            return None
        if len(rows) < 2 * getattr(splitter, "min_leaf", 1) or splitter.is_pure(rows):
            return None
        return splitter.best(B, rows, features(), W, n_thr)

    def split(node, rows, depth, cand):
        col = B[rows, cand.feature]
        go_left = (col <= cand.bin) | (col == W - 1)
        lrows, rrows = rows[go_left], rows[~go_left]
        left = make_leaf(lrows)
        right = make_leaf(rrows)
        tree.set_split(node, cand.feature, thresholds[cand.feature][cand.bin], left, right)
        return (left, lrows, depth + 1), (right, rrows, depth + 1)

    root = make_leaf(idx)
    if best_first:
        frontier = []
        c = candidate(idx, 0)
        if c is not None:
            frontier.append((root, idx, 0, c))
        n_leaves = 1
        while frontier and (max_leaves is None or n_leaves < max_leaves):
            j = max(range(len(frontier)), key=lambda i: (frontier[i][3].gain, -i))
            node, rows, depth, cand = frontier.pop(j)
            for child in split(node, rows, depth, cand):
                cc = candidate(child[1], child[2])
                if cc is not None:
                    frontier.append((*child, cc))
            n_leaves += 1
    else:
        queue = [(root, idx, 0)]
        head = 0
        while head < len(queue):
            node, rows, depth = queue[head]
            head += 1
            cand = candidate(rows, depth)
            if cand is not None:
                queue.extend(split(node, rows, depth, cand))
    return tree, payloads


def resolve_mtry(mtry, p: int) -> int:
    if mtry is None:
        return p
    if mtry == "sqrt":
        return max(1, int(np.sqrt(p)))
    if mtry == "third":
        return max(1, p // 3)
    if isinstance(mtry, float) and 0 < mtry <= 1:
        return max(1, int(round(mtry * p)))
    m = int(mtry)
    if not 1 <= m <= p:
        raise ValueError(f"mtry={mtry} outside [1, {p}]")
    return m

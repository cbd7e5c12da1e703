"""Random forest on the 21 hand-crafted window features."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .errors import ContractError

N_FEATURES = 21
N_TREES = 100

# relative slack when comparing impurity scores, so float noise cannot break ties
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class DecisionTree:
    """Flat binary tree. Leaves have ``feature == -1``; ``value`` is P(FOG)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int64)
        active = self.feature[node] >= 0
        rows = np.arange(len(x))
        while active.any():
            idx = rows[active]
            nd = node[idx]
            go_left = x[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active[idx] = self.feature[node[idx]] >= 0
        return self.value[node]


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[DecisionTree, ...]
    seed: int
    n_features: int = N_FEATURES
    meta: dict = field(default_factory=dict)

    def predict_proba(self, x) -> np.ndarray:
        return predict_proba(self, x)


def best_split(x: np.ndarray, w: np.ndarray, y: np.ndarray, features) -> tuple[int, float] | None:
    """Best Gini split over ``features`` for weighted samples.

    Candidate thresholds are midpoints between consecutive distinct values.
    Returns ``(feature, threshold)`` or None when no feature varies. Among
    equal scores the lowest feature index wins, then the lowest threshold.
    """
    total_w = w.sum()
    total_pos = (w * y).sum()
    best: tuple[float, int, float] | None = None
    for f in sorted(int(f) for f in features):
        col = x[:, f]
        order = np.argsort(col, kind="stable")
        v = col[order]
        change = np.nonzero(v[1:] > v[:-1])[0]
        if len(change) == 0:
            continue
        cw = np.cumsum(w[order])[change]
        cp = np.cumsum((w * y)[order])[change]
        rw = total_w - cw
        rp = total_pos - cp
        # maximising sum_k c_k^2 / n per side is minimising weighted Gini
        score = (cp ** 2 + (cw - cp) ** 2) / cw + (rp ** 2 + (rw - rp) ** 2) / rw
        i = int(np.argmax(score))  # first maximum is the lowest threshold
        s = float(score[i])
        thr = 0.5 * (v[change[i]] + v[change[i] + 1])
        if best is None or s > best[0] + _TIE_TOL * max(1.0, abs(best[0])):
            best = (s, f, float(thr))
    if best is None:
        return None
    return best[1], best[2]


def _grow(x: np.ndarray, y: np.ndarray, w: np.ndarray, rng: np.random.Generator,
          max_features: int) -> DecisionTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(x)))]
    d = x.shape[1]
    while stack:
        node, idx = stack.pop()
        wn = w[idx]
        n = wn.sum()
        pos = (wn * y[idx]).sum()
        value[node] = pos / n
        if pos == 0 or pos == n or n < 2:
            continue
        feats = rng.choice(d, size=max_features, replace=False)
        split = best_split(x[idx], wn, y[idx], feats)
        if split is None:
            continue
        f, thr = split
        mask = x[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node], right[node] = new_node(), new_node()
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], idx[~mask]))
        stack.append((left[node], idx[mask]))
    return DecisionTree(np.array(feature, dtype=np.int64), np.array(threshold),
                        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                        np.array(value))


def fit_forest(x, y, seed: int = 0, n_trees: int = N_TREES,
               n_features: int = N_FEATURES) -> ForestModel:
    """Bootstrap-aggregated Gini trees grown to purity.

    Each tree draws n rows with replacement; duplicated rows are carried as
    integer weights, which is equivalent to materialising the bootstrap sample.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y).reshape(-1)
    if x.ndim != 2 or x.shape[1] != n_features:
        raise ContractError(f"expected an (n, {n_features}) feature matrix, got {x.shape}")
    if len(x) != len(y):
        raise ContractError("one label per row required")
    if len(x) < 2:
        raise ContractError("need at least two training rows")
    if not np.isin(y, (0, 1)).all():
        raise ContractError("labels must be 0 or 1")
    if not np.isfinite(x).all():
        raise ContractError("features must be finite")
    y = y.astype(float)
    if len(np.unique(y)) < 2:
        warnings.warn("training set contains a single class", RuntimeWarning)
    max_features = math.ceil(math.sqrt(n_features))
    trees = []
    for t in range(n_trees):
        rng = seeding.rng(seed, "forest", "tree", t)
        draws = rng.integers(0, len(x), size=len(x))
        counts = np.bincount(draws, minlength=len(x))
        keep = np.nonzero(counts)[0]
        trees.append(_grow(x[keep], y[keep], counts[keep].astype(float), rng, max_features))
    return ForestModel(tuple(trees), seed, n_features)


def predict_proba(model: ForestModel, x) -> np.ndarray:
    """Mean of the trees' leaf P(FOG)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ContractError(f"expected an (n, {model.n_features}) feature matrix, got {x.shape}")
    out = np.zeros(len(x))
    for tree in model.trees:
        out += tree.predict(x)
    return out / len(model.trees)


def save_forest(model: ForestModel, path) -> None:
    """Store every tree's node arrays in one ``.npz`` file."""
    arrays = {"seed": np.array(model.seed), "n_features": np.array(model.n_features)}
    for i, t in enumerate(model.trees):
        for name in ("feature", "threshold", "left", "right", "value"):
            arrays[f"tree{i:03d}_{name}"] = getattr(t, name)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_forest(path) -> ForestModel:
    with np.load(path) as z:
        n = sum(1 for k in z.files if k.endswith("_feature"))
        trees = tuple(DecisionTree(*(z[f"tree{i:03d}_{name}"] for name in
                                     ("feature", "threshold", "left", "right", "value")))
                      for i in range(n))
        return ForestModel(trees, int(z["seed"]), int(z["n_features"]))

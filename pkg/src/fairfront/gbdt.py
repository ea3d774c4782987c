"""Minimal deterministic gradient-boosted decision trees.

Logistic-loss boosting with squared-error regression trees fit to the
gradients, second-order leaf values, sample weights, and optional early
stopping on a validation split.  Split search is exact over sorted unique
feature values, with ties broken by lowest feature index then lowest
threshold, so training is bit-reproducible.  The per-tree output matrix is
exposed for rebalancing, and ensembles serialize to a self-describing JSON
document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._util import cross_entropy, logit, sigmoid

_LAMBDA = 1.0          # ridge term on leaf values
_MARGIN_CLAMP = 10.0
_MIN_GAIN = 1e-12


@dataclass
class GBDTParams:
    depth: int = 4
    rounds: int = 300
    learning_rate: float = 0.08
    min_leaf: float = 16.0       # minimum total sample weight per child
    early_stop_rounds: int = 25  # 0 disables early stopping
    seed: int = 0                # reserved; training is fully deterministic

    def __post_init__(self):
        if self.depth < 1 or self.rounds < 0 or self.learning_rate <= 0:
            raise ValueError("invalid gbdt params")


@dataclass
class Tree:
    """Array-encoded binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(X.shape[0], dtype=np.intp)
        active = self.feature[idx] >= 0
        while np.any(active):
            node = idx[active]
            go_left = X[active, self.feature[node]] <= self.threshold[node]
            idx[active] = np.where(go_left, self.left[node], self.right[node])
            active = self.feature[idx] >= 0
        return self.value[idx]

    @property
    def n_nodes(self) -> int:
        return self.feature.size


@dataclass
class Ensemble:
    base_margin: float
    learning_rate: float
    trees: list = field(default_factory=list)
    n_features: int = 0
    link: str = "logistic"

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict_raw(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        self._check_features(X)
        raw = np.full(X.shape[0], self.base_margin)
        for tree in self.trees:
            raw += self.learning_rate * tree.predict(X)
        return raw

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.predict_raw(X))

    def _check_features(self, X):
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")

    def to_json(self) -> str:
        doc = {
            "kind": "fairfront-gbdt",
            "base_margin": self.base_margin,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "link": self.link,
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in self.trees
            ],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Ensemble":
        doc = json.loads(text)
        if doc.get("kind") != "fairfront-gbdt":
            raise ValueError("not an ensemble document")
        trees = [
            Tree(
                np.asarray(t["feature"], dtype=np.intp),
                np.asarray(t["threshold"], dtype=float),
                np.asarray(t["left"], dtype=np.intp),
                np.asarray(t["right"], dtype=np.intp),
                np.asarray(t["value"], dtype=float),
            )
            for t in doc["trees"]
        ]
        return cls(doc["base_margin"], doc["learning_rate"], trees, doc["n_features"], doc["link"])

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Ensemble":
        with open(path) as fh:
            return cls.from_json(fh.read())


def per_tree_outputs(ensemble: Ensemble, X) -> np.ndarray:
    """Matrix of raw per-tree outputs T_j(x), one column per tree.

    ``base_margin + learning_rate * rowsum`` reproduces ``predict_raw``.
    """
    X = np.asarray(X, dtype=float)
    ensemble._check_features(X)
    if not ensemble.trees:
        return np.zeros((X.shape[0], 0))
    return np.column_stack([tree.predict(X) for tree in ensemble.trees])


def _best_split(X, rows, g, h, w, min_leaf):
    """Exact split search on one node.

    Maximizes the weighted-SSE reduction of the gradient targets, which only
    depends on weighted first moments, so integer-weight duplication yields
    identical trees.  Returns (gain, feature, threshold) or None.
    """
    wn = w[rows]
    gn = g[rows]
    w_total = wn.sum()
    wg_total = (wn * gn).sum()
    parent_score = wg_total * wg_total / w_total
    best = None
    for f in range(X.shape[1]):
        xs = X[rows, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        cw = np.cumsum(wn[order])
        cwg = np.cumsum((wn * gn)[order])
        # candidate boundaries sit between distinct consecutive values
        distinct = xs_sorted[1:] > xs_sorted[:-1]
        if not np.any(distinct):
            continue
        cand = np.flatnonzero(distinct)
        wl = cw[cand]
        wr = w_total - wl
        ok = (wl >= min_leaf) & (wr >= min_leaf)
        if not np.any(ok):
            continue
        cand = cand[ok]
        wl, wr = wl[ok], wr[ok]
        gl = cwg[cand]
        gr = wg_total - gl
        gain = gl * gl / wl + gr * gr / wr - parent_score
        k = int(np.argmax(gain))
        if gain[k] > _MIN_GAIN and (best is None or gain[k] > best[0]):
            threshold = 0.5 * (xs_sorted[cand[k]] + xs_sorted[cand[k] + 1])
            best = (float(gain[k]), f, threshold)
    return best


def _fit_tree(X, rows, g, h, w, depth, min_leaf) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def leaf_value(node_rows):
        num = (w[node_rows] * g[node_rows]).sum()
        den = (w[node_rows] * h[node_rows]).sum() + _LAMBDA
        return -num / den

    def build(node_rows, level):
        node_id = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        split = _best_split(X, node_rows, g, h, w, min_leaf) if level < depth else None
        if split is None:
            value[node_id] = leaf_value(node_rows)
            return node_id
        _, f, thr = split
        mask = X[node_rows, f] <= thr
        feature[node_id] = f
        threshold[node_id] = thr
        left[node_id] = build(node_rows[mask], level + 1)
        right[node_id] = build(node_rows[~mask], level + 1)
        return node_id

    build(rows, 0)
    return Tree(
        np.asarray(feature, dtype=np.intp),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.intp),
        np.asarray(right, dtype=np.intp),
        np.asarray(value, dtype=float),
    )


def train(X, y, sample_weight=None, params: GBDTParams = None, valid=None) -> Ensemble:
    """Boost logistic-loss trees on (X, y), optionally early-stopping on
    ``valid = (X_val, y_val)``.

    The base margin is the clamped logit of the weighted label mean; an
    all-one-class target yields a margin-only ensemble with zero trees.
    """
    params = params or GBDTParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X and y must be row-aligned")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary 0/1")
    w = np.ones(y.size) if sample_weight is None else np.asarray(sample_weight, dtype=float).ravel()
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive total")

    p_bar = float((w * y).sum() / w.sum())
    base_margin = float(np.clip(logit(p_bar), -_MARGIN_CLAMP, _MARGIN_CLAMP))
    ensemble = Ensemble(base_margin, params.learning_rate, [], X.shape[1])
    if p_bar in (0.0, 1.0) or params.rounds == 0:
        return ensemble

    rows = np.arange(y.size)
    raw = np.full(y.size, base_margin)
    use_valid = valid is not None and params.early_stop_rounds > 0
    if use_valid:
        X_val = np.asarray(valid[0], dtype=float)
        y_val = np.asarray(valid[1], dtype=float).ravel()
        raw_val = np.full(y_val.size, base_margin)
        best_loss = cross_entropy(sigmoid(raw_val), y_val)
        best_round = 0
        stall = 0

    for round_idx in range(params.rounds):
        p = sigmoid(raw)
        g = p - y
        h = p * (1.0 - p)
        tree = _fit_tree(X, rows, g, h, w, params.depth, params.min_leaf)
        ensemble.trees.append(tree)
        raw += params.learning_rate * tree.predict(X)
        if use_valid:
            raw_val += params.learning_rate * tree.predict(X_val)
            loss = cross_entropy(sigmoid(raw_val), y_val)
            if loss < best_loss - 1e-12:
                best_loss = loss
                best_round = round_idx + 1
                stall = 0
            else:
                stall += 1
                if stall >= params.early_stop_rounds:
                    break
    if use_valid:
        ensemble.trees = ensemble.trees[:best_round]
    return ensemble

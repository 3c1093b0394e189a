"""CART decision tree (gini) and a bootstrap random forest built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from markerstack.classifiers.base import ForestParams, TrainedModel, TreeParams
from markerstack.seeding import rng_for

# gains closer than this count as ties (resolved toward lower feature/threshold)
GAIN_TIE = 1e-12


def gini_impurity(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("class counts must be nonnegative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("class counts must not all be zero")
    p = counts / total
    return float(1.0 - p @ p)


def _gini_rows(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=1)
    p = counts / totals[:, None]
    return 1.0 - (p * p).sum(axis=1)


def best_split(rows, labels, candidate_features=None, min_samples_leaf: int = 1):
    """Exhaustive CART split search.

    Candidate thresholds are midpoints between consecutive distinct values;
    rows with ``x <= threshold`` go left. Returns ``(feature, threshold,
    gain)`` for the largest impurity decrease, or None when no admissible
    split decreases impurity.
    """
    X = np.asarray(rows, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n = X.shape[0]
    if n < 2:
        return None
    _, y = np.unique(np.asarray(labels), return_inverse=True)
    n_cls = int(y.max()) + 1
    onehot = np.zeros((n, n_cls))
    onehot[np.arange(n), y] = 1.0
    parent = gini_impurity(onehot.sum(axis=0))
    if parent == 0.0:
        return None
    features = range(X.shape[1]) if candidate_features is None else sorted(candidate_features)

    best = None
    best_gain = GAIN_TIE
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        v = X[order, f]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        right = left[-1] + onehot[order[-1]] - left
        n_left = np.arange(1, n)
        valid = (v[:-1] < v[1:]) & (n_left >= min_samples_leaf) & (n - n_left >= min_samples_leaf)
        if not valid.any():
            continue
        pos = np.flatnonzero(valid)
        nl = n_left[pos].astype(float)
        gains = parent - (nl * _gini_rows(left[pos]) + (n - nl) * _gini_rows(right[pos])) / n
        top = gains.max()
        if top > best_gain + (GAIN_TIE if best is not None else 0.0):
            k = pos[np.flatnonzero(gains >= top - GAIN_TIE)[0]]
            threshold = 0.5 * (v[k] + v[k + 1])
            if not threshold < v[k + 1]:
                threshold = v[k]
            best = (int(f), float(threshold), float(top))
            best_gain = top
    return best


@dataclass(frozen=True)
class Leaf:
    counts: tuple[float, ...]


@dataclass(frozen=True)
class SplitNode:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[Leaf, SplitNode]


def grow_tree(X, y_idx, n_classes, max_depth, min_samples_leaf, n_candidates=None, rng=None, depth=0) -> Node:
    counts = np.bincount(y_idx, minlength=n_classes).astype(float)
    leaf = Leaf(tuple(counts.tolist()))
    if depth >= max_depth or np.count_nonzero(counts) <= 1 or X.shape[0] < 2 * min_samples_leaf:
        return leaf
    d = X.shape[1]
    candidates = None
    if n_candidates is not None and n_candidates < d:
        candidates = sorted(rng.choice(d, size=n_candidates, replace=False).tolist())
    found = best_split(X, y_idx, candidates, min_samples_leaf)
    if found is None:
        return leaf
    f, thr, _ = found
    go_left = X[:, f] <= thr
    return SplitNode(
        f, thr,
        grow_tree(X[go_left], y_idx[go_left], n_classes, max_depth, min_samples_leaf, n_candidates, rng, depth + 1),
        grow_tree(X[~go_left], y_idx[~go_left], n_classes, max_depth, min_samples_leaf, n_candidates, rng, depth + 1),
    )


def leaf_frequencies(node: Node, X: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.empty((X.shape[0], n_classes))
    _fill(node, X, np.arange(X.shape[0]), out)
    return out


def _fill(node, X, idx, out):
    if isinstance(node, Leaf):
        counts = np.asarray(node.counts)
        out[idx] = counts / counts.sum()
        return
    go_left = X[idx, node.feature] <= node.threshold
    _fill(node.left, X, idx[go_left], out)
    _fill(node.right, X, idx[~go_left], out)


def tree_depth(node: Node) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


def leaves(node: Node):
    if isinstance(node, Leaf):
        yield node
    else:
        yield from leaves(node.left)
        yield from leaves(node.right)


def node_to_dict(node: Node) -> dict:
    if isinstance(node, Leaf):
        return {"counts": list(node.counts)}
    return {"feature": node.feature, "threshold": node.threshold,
            "left": node_to_dict(node.left), "right": node_to_dict(node.right)}


def node_from_dict(doc: dict) -> Node:
    if "counts" in doc:
        return Leaf(tuple(float(c) for c in doc["counts"]))
    return SplitNode(int(doc["feature"]), float(doc["threshold"]),
                     node_from_dict(doc["left"]), node_from_dict(doc["right"]))


class TreeModel(TrainedModel):
    kind = "tree"

    def __init__(self, params, classes, n_features, scaler, root: Node):
        super().__init__(params, classes, n_features, scaler)
        self.root = root

    @classmethod
    def fit(cls, params: TreeParams, X, y_idx, classes, scaler):
        root = grow_tree(X, y_idx, len(classes), params.max_depth, params.min_samples_leaf)
        return cls(params, classes, X.shape[1], scaler, root)

    def _scores(self, X):
        return leaf_frequencies(self.root, X, len(self.classes))

    def _state(self):
        return {"root": node_to_dict(self.root)}

    @classmethod
    def _from_state(cls, params, classes, n_features, scaler, state):
        return cls(params, classes, n_features, scaler, node_from_dict(state["root"]))


class ForestModel(TrainedModel):
    """Trees on size-n bootstrap resamples; tree ``t`` draws from the
    sub-seed ``"tree/t"`` of the training seed."""

    kind = "forest"

    def __init__(self, params, classes, n_features, scaler, trees: list[Node]):
        super().__init__(params, classes, n_features, scaler)
        self.trees = list(trees)

    @classmethod
    def fit(cls, params: ForestParams, X, y_idx, classes, scaler, seed: int = 0):
        n, d = X.shape
        n_candidates = max(1, int(math.isqrt(d))) if params.max_features == "sqrt" else None
        trees = []
        for t in range(params.n_estimators):
            rng = rng_for(seed, f"tree/{t}")
            boot = rng.integers(0, n, size=n)
            trees.append(grow_tree(X[boot], y_idx[boot], len(classes), params.max_depth,
                                   params.min_samples_leaf, n_candidates, rng))
        return cls(params, classes, d, scaler, trees)

    def _scores(self, X):
        total = np.zeros((X.shape[0], len(self.classes)))
        for tree in self.trees:
            total += leaf_frequencies(tree, X, len(self.classes))
        return total / len(self.trees)

    def _state(self):
        return {"trees": [node_to_dict(t) for t in self.trees]}

    @classmethod
    def _from_state(cls, params, classes, n_features, scaler, state):
        return cls(params, classes, n_features, scaler, [node_from_dict(t) for t in state["trees"]])

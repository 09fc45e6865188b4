"""CART classification tree with Gini impurity for the switching condition.

Samples are ``(phi1, omega1, omega2, M)`` with labels C1/C2.  A split
``(feature, threshold)`` sends samples with ``value < threshold`` to the left
child and the rest to the right child.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSplit, EmptyNode, SchemaMismatch
from .pendulum import C1, C2

# relative slack when comparing impurity scores of competing splits
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float


def gini(counts) -> float:
    """Two-class Gini impurity ``p1(1-p1) + p2(1-p2)``."""
    n1, n2 = counts
    n = n1 + n2
    if n <= 0:
        raise EmptyNode("impurity of an empty node is undefined")
    p1 = n1 / n
    p2 = n2 / n
    return p1 * (1.0 - p1) + p2 * (1.0 - p2)


def _counts(labels: np.ndarray) -> tuple[int, int]:
    n1 = int(np.count_nonzero(labels == C1))
    return n1, int(labels.shape[0] - n1)


def split_quality(X, y, split: Split) -> float:
    """Size-weighted impurity of the two children of ``split``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    left = X[:, split.feature] < split.threshold
    n_left = int(left.sum())
    n = y.shape[0]
    if n_left == 0 or n_left == n:
        raise DegenerateSplit("split leaves one child empty")
    return n_left / n * gini(_counts(y[left])) + (n - n_left) / n * gini(_counts(y[~left]))


def _feature_scan(values: np.ndarray, is_c1: np.ndarray, min_leaf: int):
    """Best threshold on one feature.

    Returns ``(score, threshold)`` where ``score`` is ``n * G`` (smaller is
    better) or ``None`` when no admissible threshold exists.
    """
    order = np.argsort(values, kind="stable")
    v = values[order]
    c1 = np.cumsum(is_c1[order])
    n = v.shape[0]
    # candidate boundaries sit between positions i and i + 1 with distinct values
    idx = np.flatnonzero(v[1:] > v[:-1])
    n_left = idx + 1
    keep = (n_left >= min_leaf) & (n - n_left >= min_leaf)
    idx, n_left = idx[keep], n_left[keep]
    if idx.size == 0:
        return None
    l1 = c1[idx].astype(float)
    l2 = n_left - l1
    r1 = c1[-1] - l1
    n_right = n - n_left
    r2 = n_right - r1
    # n * G = 2 * (l1 * l2 / nl + r1 * r2 / nr)
    score = 2.0 * (l1 * l2 / n_left + r1 * r2 / n_right)
    best = np.min(score)
    pick = int(np.flatnonzero(score <= best + _TIE_RTOL * max(best, 1.0))[0])
    i = idx[pick]
    thr = 0.5 * (v[i] + v[i + 1])
    if not v[i] < thr:
        # midpoint of adjacent floats rounds down onto the left value
        thr = v[i + 1]
    return float(score[pick]), float(thr)


def best_split(X, y, min_samples_leaf: int = 1) -> Split | None:
    """Exhaustive impurity-minimising split over all features and midpoints.

    Ties are broken towards the lowest feature index, then the lowest
    threshold.  Returns ``None`` when the labels are pure or no admissible
    split lowers the impurity.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    n = y.shape[0]
    if n < 2:
        return None
    n1, n2 = _counts(y)
    if n1 == 0 or n2 == 0:
        return None
    parent = n * gini((n1, n2))
    is_c1 = (y == C1).astype(np.int64)
    best_score, best = None, None
    for f in range(X.shape[1]):
        found = _feature_scan(X[:, f], is_c1, min_samples_leaf)
        if found is None:
            continue
        score, thr = found
        if best_score is None or score < best_score - _TIE_RTOL * max(best_score, 1.0):
            best_score, best = score, Split(f, thr)
    if best is None or not best_score < parent - _TIE_RTOL * max(parent, 1.0):
        return None
    return best


@dataclass(frozen=True)
class DecisionTree:
    """Flat array representation; node 0 is the root.

    Internal nodes have ``feature >= 0``; leaves have ``feature == -1`` and a
    class in ``leaf_class``.  ``counts[i]`` holds the (C1, C2) training counts
    that reached node ``i``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_class: np.ndarray
    counts: np.ndarray
    max_depth: int | None = None
    min_samples_leaf: int = 1

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[i] + 1
                depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict(self, F) -> np.ndarray:
        """Vectorised root-to-leaf traversal for rows of ``F``."""
        F = np.atleast_2d(np.asarray(F, dtype=float))
        node = np.zeros(F.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = F[rows, self.feature[nd]] < self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active[rows] = self.feature[node[rows]] >= 0
        return self.leaf_class[node].copy()

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            counts = [int(c) for c in self.counts[i]]
            if self.feature[i] >= 0:
                nodes.append({
                    "kind": "split",
                    "feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                    "counts": counts,
                })
            else:
                nodes.append({"kind": "leaf", "class": int(self.leaf_class[i]), "counts": counts})
        return {"max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf, "nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        try:
            nodes = d["nodes"]
            n = len(nodes)
            feature = np.full(n, -1, dtype=np.int64)
            threshold = np.zeros(n)
            left = np.full(n, -1, dtype=np.int64)
            right = np.full(n, -1, dtype=np.int64)
            leaf_class = np.zeros(n, dtype=np.int64)
            counts = np.zeros((n, 2), dtype=np.int64)
            for i, nd in enumerate(nodes):
                counts[i] = nd.get("counts", (0, 0))
                if nd["kind"] == "split":
                    feature[i] = nd["feature"]
                    threshold[i] = nd["threshold"]
                    left[i] = nd["left"]
                    right[i] = nd["right"]
                elif nd["kind"] == "leaf":
                    leaf_class[i] = nd["class"]
                else:
                    raise SchemaMismatch(f"unknown node kind {nd['kind']!r}")
        except (KeyError, TypeError) as exc:
            raise SchemaMismatch(f"malformed tree artifact: {exc}") from exc
        tree = cls(feature, threshold, left, right, leaf_class, counts,
                   d.get("max_depth"), int(d.get("min_samples_leaf", 1)))
        tree.validate()
        return tree

    def validate(self) -> None:
        """Check that every path from the root ends in a leaf exactly once."""
        seen = np.zeros(self.n_nodes, dtype=bool)
        stack = [0]
        while stack:
            i = stack.pop()
            if i < 0 or i >= self.n_nodes or seen[i]:
                raise SchemaMismatch("tree nodes do not form a tree rooted at 0")
            seen[i] = True
            if self.feature[i] >= 0:
                stack.extend((int(self.left[i]), int(self.right[i])))
            elif self.leaf_class[i] not in (C1, C2):
                raise SchemaMismatch(f"leaf {i} has invalid class {self.leaf_class[i]}")
        if not seen.all():
            raise SchemaMismatch("tree contains unreachable nodes")


def constant_tree(cls: int) -> DecisionTree:
    """Single-leaf tree that always predicts ``cls``."""
    return DecisionTree(
        feature=np.array([-1]), threshold=np.zeros(1), left=np.array([-1]),
        right=np.array([-1]), leaf_class=np.array([cls]), counts=np.zeros((1, 2), dtype=np.int64),
        max_depth=0,
    )


def fit_tree(X, y, max_depth: int | None = 8, min_samples_leaf: int = 20) -> DecisionTree:
    """Grow a tree greedily with :func:`best_split`.

    A node becomes a leaf when it is pure, sits at ``max_depth``, has no
    split leaving at least ``min_samples_leaf`` samples in each child, or no
    split lowers the impurity.  Leaves predict the majority class with ties
    going to C2.  ``max_depth=None`` grows without a depth limit.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    if y.shape[0] == 0:
        raise ValueError("cannot fit a tree to empty data")
    if y.shape[0] != X.shape[0]:
        raise ValueError("features and labels differ in length")
    feature, threshold, left, right, leaf_class, counts = [], [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        n1, n2 = _counts(y[idx])
        counts.append((n1, n2))
        leaf_class.append(C1 if n1 > n2 else C2)
        return len(feature) - 1

    # depth-first, left before right, so node order is deterministic
    stack = [(new_node(np.arange(y.shape[0])), np.arange(y.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if max_depth is not None and depth >= max_depth:
            continue
        s = best_split(X[idx], y[idx], min_samples_leaf)
        if s is None:
            continue
        go_left = X[idx, s.feature] < s.threshold
        feature[node] = s.feature
        threshold[node] = s.threshold
        l_idx, r_idx = idx[go_left], idx[~go_left]
        left[node] = new_node(l_idx)
        right[node] = new_node(r_idx)
        stack.append((right[node], r_idx, depth + 1))
        stack.append((left[node], l_idx, depth + 1))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        leaf_class=np.asarray(leaf_class, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64).reshape(-1, 2),
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
    )


def predict(tree: DecisionTree, f) -> int:
    """Class of a single feature vector ``(phi1, omega1, omega2, M)``."""
    return int(tree.predict(np.asarray(f, dtype=float)[None, :])[0])

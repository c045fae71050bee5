"""Gini decision tree for cross-dataset validation of cluster labels.

Greedy binary CART splits with deterministic tie-breaking: among splits
of equal impurity gain the lowest feature index wins, then the lowest
threshold.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput


@dataclass
class TreeNode:
    # internal nodes carry (feature, threshold); leaves carry a label
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    label: Optional[str] = None
    counts: dict = field(default_factory=dict)

    @property
    def is_leaf(self) -> bool:
        return self.label is not None

    def to_json_obj(self) -> dict:
        if self.is_leaf:
            return {"label": self.label, "counts": self.counts}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_json_obj(),
            "right": self.right.to_json_obj(),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TreeNode":
        if "label" in obj:
            return cls(label=obj["label"], counts=obj.get("counts", {}))
        return cls(
            feature=obj["feature"],
            threshold=obj["threshold"],
            left=cls.from_json_obj(obj["left"]),
            right=cls.from_json_obj(obj["right"]),
        )


@dataclass
class TreeConfig:
    max_depth: Optional[int] = 6
    min_samples_leaf: int = 5


@dataclass
class TrainedTree:
    root: TreeNode
    n_features: int
    config: TreeConfig

    def depth(self) -> int:
        def walk(node, d):
            if node.is_leaf:
                return d
            return max(walk(node.left, d + 1), walk(node.right, d + 1))

        return walk(self.root, 0)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_features": self.n_features,
                "max_depth": self.config.max_depth,
                "min_samples_leaf": self.config.min_samples_leaf,
                "root": self.root.to_json_obj(),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "TrainedTree":
        obj = json.loads(text)
        return cls(
            TreeNode.from_json_obj(obj["root"]),
            obj["n_features"],
            TreeConfig(obj["max_depth"], obj["min_samples_leaf"]),
        )

    def to_text(self) -> str:
        lines = []

        def walk(node, indent):
            pad = "  " * indent
            if node.is_leaf:
                lines.append(f"{pad}-> {node.label} {dict(sorted(node.counts.items()))}")
                return
            lines.append(f"{pad}f[{node.feature}] <= {node.threshold:.6f}?")
            walk(node.left, indent + 1)
            walk(node.right, indent + 1)

        walk(self.root, 0)
        return "\n".join(lines)


def _gini(counts: np.ndarray, total: int) -> float:
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float((p * p).sum())


def _majority(labels: Sequence[str]) -> tuple[str, dict]:
    counter = Counter(labels)
    # deterministic: most common, ties by label text
    label = min(counter, key=lambda l: (-counter[l], l))
    return label, dict(counter)


def _best_split(
    x: np.ndarray, y: np.ndarray, classes: np.ndarray, min_leaf: int
) -> Optional[tuple[int, float, float]]:
    """Returns (feature, threshold, impurity_drop) for the best Gini
    split, or None when no admissible split exists."""
    n, d = x.shape
    class_of = {c: i for i, c in enumerate(classes)}
    y_idx = np.array([class_of[v] for v in y])
    parent_counts = np.bincount(y_idx, minlength=len(classes)).astype(float)
    parent_gini = _gini(parent_counts, n)
    best = None
    for f in range(d):
        order = np.argsort(x[:, f], kind="stable")
        xs = x[order, f]
        ys = y_idx[order]
        left = np.zeros(len(classes))
        right = parent_counts.copy()
        for i in range(n - 1):
            c = ys[i]
            left[c] += 1
            right[c] -= 1
            if xs[i + 1] <= xs[i]:
                continue
            n_left = i + 1
            n_right = n - n_left
            if n_left < min_leaf or n_right < min_leaf:
                continue
            score = (
                parent_gini
                - (n_left / n) * _gini(left, n_left)
                - (n_right / n) * _gini(right, n_right)
            )
            threshold = (xs[i] + xs[i + 1]) / 2.0
            key = (-score, f, threshold)
            if best is None or key < best[0]:
                best = (key, f, threshold, score)
    if best is None or best[3] <= 0.0:
        return None
    return best[1], best[2], best[3]


def train_tree(
    features: np.ndarray, labels: Sequence[str], cfg: Optional[TreeConfig] = None
) -> TrainedTree:
    """Grow a CART classifier. Single-class input yields a one-leaf tree."""
    cfg = cfg or TreeConfig()
    x = np.asarray(features, dtype=float)
    if x.size == 0:
        raise EmptyInput("training requires at least one sample")
    y = np.asarray([str(l) for l in labels], dtype=object)
    if len(y) != len(x):
        raise DimensionMismatch("features and labels differ in length")
    classes = np.unique(y)

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        sub_y = y[idx]
        label, counts = _majority(list(sub_y))
        if (
            len(set(sub_y)) == 1
            or (cfg.max_depth is not None and depth >= cfg.max_depth)
            or len(idx) < 2 * cfg.min_samples_leaf
        ):
            return TreeNode(label=label, counts=counts)
        split = _best_split(x[idx], sub_y, classes, cfg.min_samples_leaf)
        if split is None:
            return TreeNode(label=label, counts=counts)
        f, threshold, _ = split
        mask = x[idx, f] <= threshold
        return TreeNode(
            feature=f,
            threshold=threshold,
            left=grow(idx[mask], depth + 1),
            right=grow(idx[~mask], depth + 1),
        )

    root = grow(np.arange(len(x)), 0)
    return TrainedTree(root, x.shape[1], cfg)


def predict(tree: TrainedTree, vector: Sequence[float]) -> str:
    v = np.asarray(vector, dtype=float)
    if v.shape != (tree.n_features,):
        raise DimensionMismatch(
            f"expected {tree.n_features} features, got {v.shape}"
        )
    node = tree.root
    while not node.is_leaf:
        node = node.left if v[node.feature] <= node.threshold else node.right
    return node.label


def predict_many(tree: TrainedTree, vectors: np.ndarray) -> list[str]:
    return [predict(tree, v) for v in np.asarray(vectors, dtype=float)]


def cross_dataset_accuracy(
    tree: TrainedTree, features: np.ndarray, labels: Sequence[str]
) -> float:
    """Fraction of matching predictions on a second dataset."""
    x = np.asarray(features, dtype=float)
    if x.size == 0:
        raise EmptyInput("accuracy requires at least one sample")
    predictions = predict_many(tree, x)
    hits = sum(1 for p, l in zip(predictions, labels) if p == str(l))
    return hits / len(predictions)

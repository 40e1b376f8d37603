"""Bagged multi-output regression trees.

Splits minimise the summed squared deviation of the label vectors, which for
a candidate split is equivalent to maximising
``|S_L|^2 / n_L + |S_R|^2 / n_R`` over label sums S.  Each node examines a
random subset of input features.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument


@dataclass(frozen=True)
class ForestHyper:
    n_trees: int = 50
    max_depth: int | None = 12  # None grows until leaves are pure or too small
    min_leaf: int = 5
    feature_fraction: float = 1.0 / 3.0
    bootstrap: bool = True
    seed: int = 0

    def validate(self):
        if self.n_trees < 1:
            raise InvalidArgument("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise InvalidArgument("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise InvalidArgument("min_leaf must be >= 1")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise InvalidArgument("feature_fraction must lie in (0, 1]")
        return self


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf whose row in ``value`` is its prediction."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # (n_nodes, n_out); zero rows for internal nodes

    @property
    def depth(self):
        depth = np.zeros(len(self.feature), dtype=np.int64)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X):
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            n = node[active]
            go_left = X[active, self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return node

    def predict(self, X):
        return self.value[self.apply(X)]


def best_split(x_feats, Y, min_leaf):
    """Best (gain, feature column, threshold) over the given feature columns.

    ``x_feats`` is (n, m).  Returns ``None`` when no admissible split exists.
    Thresholds are midpoints between consecutive distinct values.
    """
    n = len(Y)
    if n < 2 * min_leaf:
        return None
    best = None
    sizes = np.arange(1, n + 1, dtype=float)
    total = Y.sum(axis=0)
    parent = float(total @ total) / n
    lo, hi = min_leaf - 1, n - min_leaf  # left sizes min_leaf .. n-min_leaf
    for j in range(x_feats.shape[1]):
        xs = x_feats[:, j]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        cs = np.cumsum(Y[order], axis=0)
        left = np.einsum("ij,ij->i", cs, cs)[lo:hi] / sizes[lo:hi]
        rest = total - cs[lo:hi]
        right = np.einsum("ij,ij->i", rest, rest) / (n - sizes[lo:hi])
        score = left + right
        valid = xs_sorted[lo:hi] < xs_sorted[lo + 1:hi + 1]
        if not valid.any():
            continue
        score = np.where(valid, score, -np.inf)
        s = int(np.argmax(score))
        gain = score[s] - parent
        if best is None or gain > best[0]:
            pos = lo + s
            best = (gain, j, 0.5 * (xs_sorted[pos] + xs_sorted[pos + 1]))
    return best


def fit_tree(X, Y, hyper, rng):
    n_features = X.shape[1]
    n_try = max(1, int(round(hyper.feature_fraction * n_features)))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(None)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(X)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        Yn = Y[idx]
        split = None
        if hyper.max_depth is None or depth < hyper.max_depth:
            cols = np.sort(rng.choice(n_features, size=n_try, replace=False))
            split = best_split(X[np.ix_(idx, cols)], Yn, hyper.min_leaf)
        scale = max(1.0, float(np.abs(Yn).max()) ** 2) if len(Yn) else 1.0
        if split is None or split[0] <= 1e-12 * scale:
            value[node] = Yn.mean(axis=0)
            continue
        _, j, thr = split
        f = int(cols[j])
        mask = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        value[node] = np.zeros(Y.shape[1])
        l, r = new_node(), new_node()
        left[node], right[node] = l, r
        stack.append((r, idx[~mask], depth + 1))
        stack.append((l, idx[mask], depth + 1))
    return Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                np.vstack(value))


@dataclass
class ForestParams:
    trees: list
    hyper: ForestHyper = field(default_factory=ForestHyper)
    n_in: int = 0

    kind = "rf"
    sequence = False

    def predict(self, X):
        return rf_predict(self, X)

    def config(self):
        h = self.hyper
        return {"kind": self.kind, "n_trees": len(self.trees), "max_depth": h.max_depth,
                "min_leaf": h.min_leaf, "feature_fraction": h.feature_fraction,
                "bootstrap": h.bootstrap, "seed": h.seed, "n_in": self.n_in}

    def arrays(self):
        out = {}
        for t, tree in enumerate(self.trees):
            out[f"tree{t}.feature"] = tree.feature
            out[f"tree{t}.threshold"] = tree.threshold
            out[f"tree{t}.left"] = tree.left
            out[f"tree{t}.right"] = tree.right
            out[f"tree{t}.value"] = tree.value
        return out

    @classmethod
    def from_arrays(cls, config, arrays):
        trees = [Tree(*(arrays[f"tree{t}.{k}"] for k in ("feature", "threshold", "left", "right", "value")))
                 for t in range(config["n_trees"])]
        hyper = ForestHyper(config["n_trees"], config["max_depth"], config["min_leaf"],
                            config["feature_fraction"], config["bootstrap"], config["seed"])
        return cls(trees, hyper, int(config["n_in"]))


def rf_fit(X, Y, hyper=ForestHyper(), threads=1):
    """Fit ``hyper.n_trees`` trees; tree t uses its own child seed, so results
    do not depend on ``threads``."""
    hyper.validate()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 3:
        X = X[:, -1, :]
    if len(X) != len(Y) or len(X) == 0:
        raise InvalidArgument("need matching non-empty X and Y")
    seeds = np.random.SeedSequence(hyper.seed).spawn(hyper.n_trees)

    def one(seed):
        rng = np.random.default_rng(seed)
        if hyper.bootstrap:
            rows = np.sort(rng.integers(0, len(X), size=len(X)))
            return fit_tree(X[rows], Y[rows], hyper, rng)
        return fit_tree(X, Y, hyper, rng)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            trees = list(pool.map(one, seeds))
    else:
        trees = [one(s) for s in seeds]
    return ForestParams(trees, hyper, X.shape[1])


def rf_predict(forest, X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 3:
        X = X[:, -1, :]
    total = np.zeros((len(X), forest.trees[0].value.shape[1]))
    for tree in forest.trees:  # fixed order keeps the average reproducible
        total += tree.predict(X)
    return total / len(forest.trees)

"""Random forest regression on CART trees grown from scratch.

Each tree is fit on a bootstrap resample; splits minimize the children's
summed squared error over all features and all midpoint thresholds between
distinct consecutive sorted values; leaves predict the mean training target.
The forest prediction is the equal-weight tree average, which is a step
function of the inputs, not a piecewise-linear one: asking it for local
affine coefficients is a contract violation by design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import RegressionModel

UNBOUNDED_DEPTH = None  # sentinel for "grow to purity"


@dataclass
class _TreeNodes:
    """Flat node arrays; feature < 0 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            rows = np.nonzero(active)[0]
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.value[node]


class _TreeBuilder:
    """Grows one tree from a single root argsort: each node receives its
    samples pre-sorted per feature and hands partitioned orders to its
    children, so no node below the root ever re-sorts."""

    def __init__(self, X: np.ndarray, y: np.ndarray, max_depth: int | None,
                 min_samples_split: int = 2):
        self.X = X
        self.y = y
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self._left_mask = np.zeros(len(y), dtype=bool)

    def build(self) -> _TreeNodes:
        order0 = np.argsort(self.X, axis=0, kind="stable").astype(np.int32)
        self._grow(order0, depth=0)
        return _TreeNodes(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value),
        )

    def _new_node(self) -> int:
        node_id = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return node_id

    def _grow(self, order: np.ndarray, depth: int) -> int:
        """order: (m, d) sample indices, column f sorted by feature f."""
        node = self._new_node()
        yn = self.y[order[:, 0]]
        m = len(yn)
        tot1 = float(yn.sum())
        tot2 = float(yn @ yn)
        self.value[node] = tot1 / m
        if m < self.min_samples_split or (
                self.max_depth is not None and depth >= self.max_depth):
            return node
        split = self._best_split(order, tot1, tot2)
        if split is None:
            return node
        f, thr = split

        left_mask = self._left_mask
        samples = order[:, 0]
        left_samples = samples[self.X[samples, f] <= thr]
        left_mask[left_samples] = True
        take = left_mask[order]
        m_left = len(left_samples)
        left_order = order.T[take.T].reshape(-1, m_left).T
        right_order = order.T[~take.T].reshape(-1, m - m_left).T
        left_mask[left_samples] = False  # reset the scratch mask

        self.feature[node] = f
        self.threshold[node] = thr
        self.left[node] = self._grow(left_order, depth + 1)
        self.right[node] = self._grow(right_order, depth + 1)
        return node

    def _best_split(self, order: np.ndarray, tot1: float, tot2: float
                    ) -> tuple[int, float] | None:
        """Exhaustive SSE scan, vectorized over all features at once."""
        m = order.shape[0]
        parent_sse = tot2 - tot1 * tot1 / m
        if parent_sse <= 1e-12:
            return None  # pure node

        xs = self.X[order, np.arange(order.shape[1])[None, :]]
        ys = self.y[order]
        c1 = np.cumsum(ys, axis=0)[:-1]
        c2 = np.cumsum(ys * ys, axis=0)[:-1]
        counts = np.arange(1, m, dtype=float)[:, None]
        sse_left = c2 - c1 * c1 / counts
        sse_right = (tot2 - c2) - (tot1 - c1) ** 2 / (m - counts)
        total = sse_left + sse_right
        total[xs[1:] <= xs[:-1]] = np.inf  # no boundary between equal values

        flat = int(np.argmin(total))
        best = total.flat[flat]
        if not np.isfinite(best) or best >= parent_sse - 1e-12:
            return None
        pos, f = divmod(flat, total.shape[1])
        lo, hi = xs[pos, f], xs[pos + 1, f]
        thr = 0.5 * (lo + hi)
        if thr >= hi:  # midpoint of ulp-adjacent values can round up
            thr = lo
        return f, float(thr)


@dataclass
class ForestModel(RegressionModel):
    trees: list[_TreeNodes]
    max_depth: int | None
    n_trees: int
    seed: int
    bootstrap: bool
    train_target_range: tuple[float, float] = (0.0, 0.0)

    n_features: int = 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)

    # local_affine deliberately not overridden: a step function has no
    # affine region, so the base class raises NotPiecewiseLinearError.


def fit_forest(X: np.ndarray, y: np.ndarray, max_depth: int | None,
               n_trees: int = 100, seed: int | np.random.SeedSequence = 0,
               bootstrap: bool = True, min_samples_split: int = 2) -> ForestModel:
    """max_depth None grows each tree to purity (the unbounded grid point);
    bootstrap=False is a test hook that fits every tree on the full sample."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    rng = np.random.default_rng(seed)
    n = len(y)
    trees = []
    for _ in range(n_trees):
        if bootstrap:
            idx = rng.integers(0, n, size=n)
            xb, yb = X[idx], y[idx]
        else:
            xb, yb = X, y
        trees.append(_TreeBuilder(xb, yb, max_depth, min_samples_split).build())
    return ForestModel(trees=trees, max_depth=max_depth, n_trees=n_trees,
                       seed=seed if isinstance(seed, int) else -1,
                       bootstrap=bootstrap,
                       train_target_range=(float(y.min()), float(y.max())),
                       n_features=X.shape[1])

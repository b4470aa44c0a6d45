"""Regression trees grown leaf-wise on gradient histograms."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from . import _kernels as K


@dataclass(eq=False)
class Tree:
    """One regression tree in flat form.

    Internal nodes are numbered in preorder (root = 0). ``left``/``right``
    hold a node number when >= 0 and ``-(leaf_id + 1)`` for a leaf. Rows go
    left when ``x[feature] <= threshold``; missing values never occur, and
    the fixed default direction for them would be left. ``leaf_value`` is
    the stored (already shrunk) value per leaf id.
    """

    feature: np.ndarray        # int32 (n_internal,)
    threshold: np.ndarray      # float64 (n_internal,)
    threshold_bin: np.ndarray  # int32 (n_internal,)
    left: np.ndarray           # int32 (n_internal,)
    right: np.ndarray          # int32 (n_internal,)
    leaf_value: np.ndarray     # float64 (n_leaves,)

    @property
    def n_internal(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(self.leaf_value.shape[0])

    @classmethod
    def constant(cls, value: float) -> "Tree":
        z = np.zeros(0, dtype=np.int32)
        return cls(z, np.zeros(0), z.copy(), z.copy(), z.copy(), np.array([value], dtype=float))

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if self.n_internal == 0:
            return np.zeros(X.shape[0], dtype=np.int32)
        return K.route_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.leaf_value[self.apply(X)]

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f))
                   for f in ("feature", "threshold", "threshold_bin", "left", "right", "leaf_value"))


@dataclass
class _Leaf:
    leaf_id: int
    rows: np.ndarray
    hist: np.ndarray
    sum_g: float
    sum_h: float
    gain: float = 0.0
    split_pos: int = -1
    split_bin: int = -1
    parent: int = -1   # growth-order index of the internal node pointing here
    is_left: bool = True


class TreeGrower:
    """Best-first growth of one tree on a binned, feature-major matrix.

    ``feats`` lists the global feature indices this tree may use (sorted);
    ``nbins`` is the bin count of every global feature.
    """

    def __init__(self, xb, nbins, edges, num_leaves=64, min_samples_leaf=20, l2_lambda=1e-3,
                 learning_rate=0.05):
        self.xb = xb
        self.nbins = np.asarray(nbins, dtype=np.int64)
        self.edges = edges
        self.num_leaves = num_leaves
        self.min_samples_leaf = min_samples_leaf
        self.l2_lambda = l2_lambda
        self.learning_rate = learning_rate
        self._build, self._subtract, self._best = K.node_kernels(numba.get_num_threads() > 1)

    def _evaluate(self, leaf: _Leaf, nbins_sel):
        gain, pos, b = self._best(leaf.hist, nbins_sel, leaf.sum_g, leaf.sum_h,
                                  float(leaf.rows.shape[0]), self.l2_lambda,
                                  float(self.min_samples_leaf))
        leaf.gain, leaf.split_pos, leaf.split_bin = gain, pos, b

    def _hist(self, feats, nbins_sel, rows, g, h):
        gh = K.gather_gh(rows, g, h)
        hist = self._pool.pop() if self._pool else np.empty((feats.shape[0], K.N_BINS_MAX, 3))
        self._build(self.xb, feats, nbins_sel, rows, gh, hist)
        return hist, gh

    def grow(self, rows, g, h, feats):
        """Grow one tree; returns ``(tree, leaf_rows)`` with the row set of each leaf id."""
        feats = np.asarray(feats, dtype=np.int64)
        nbins_sel = self.nbins[feats]
        lam = self.l2_lambda
        # histogram buffers are recycled across nodes and trees of equal width
        if not hasattr(self, "_pool") or self._pool_width != feats.shape[0]:
            self._pool, self._pool_width = [], feats.shape[0]

        hist, gh = self._hist(feats, nbins_sel, rows, g, h)
        sg, sh = K.sum_gh(gh)
        leaves = [_Leaf(0, rows, hist, sg, sh)]
        self._evaluate(leaves[0], nbins_sel)

        # internal nodes in growth order: [feature, bin, left_ref, right_ref]
        nodes: list[list[int]] = []
        while len(leaves) < self.num_leaves:
            best = None
            for leaf in leaves:
                if leaf.split_pos >= 0 and (best is None or leaf.gain > best.gain):
                    best = leaf
            if best is None:
                break
            f = int(feats[best.split_pos])
            lrows, rrows = K.partition_rows(self.xb, f, best.split_bin, best.rows)
            small_is_left = lrows.shape[0] <= rrows.shape[0]
            small = lrows if small_is_left else rrows
            small_hist, sgh = self._hist(feats, nbins_sel, small, g, h)
            large_hist = best.hist
            self._subtract(large_hist, small_hist, nbins_sel)
            s_g, s_h = K.sum_gh(sgh)
            l_g, l_h = best.sum_g - s_g, best.sum_h - s_h
            if small_is_left:
                lh, lg, lhh, rh, rg, rhh = small_hist, s_g, s_h, large_hist, l_g, l_h
            else:
                lh, lg, lhh, rh, rg, rhh = large_hist, l_g, l_h, small_hist, s_g, s_h

            node_idx = len(nodes)
            new_id = len(leaves)
            nodes.append([f, best.split_bin, -(best.leaf_id + 1), -(new_id + 1)])
            if best.parent >= 0:
                nodes[best.parent][2 if best.is_left else 3] = node_idx
            left = _Leaf(best.leaf_id, lrows, lh, lg, lhh, parent=node_idx, is_left=True)
            right = _Leaf(new_id, rrows, rh, rg, rhh, parent=node_idx, is_left=False)
            for child in (left, right):
                self._evaluate(child, nbins_sel)
                if child.split_pos < 0:
                    self._pool.append(child.hist)
                    child.hist = None
            leaves[best.leaf_id] = left
            leaves.append(right)

        for leaf in leaves:
            if leaf.hist is not None:
                self._pool.append(leaf.hist)
                leaf.hist = None
        values = np.array([-self.learning_rate * leaf.sum_g / (leaf.sum_h + lam) for leaf in leaves])
        tree = _preorder(nodes, values, self.edges)
        return tree, [leaf.rows for leaf in leaves]


def _preorder(nodes, leaf_values, edges) -> Tree:
    if not nodes:
        return Tree.constant(float(leaf_values[0]))
    order: list[int] = []
    stack = [0]
    while stack:
        i = stack.pop()
        order.append(i)
        _, _, lref, rref = nodes[i]
        if rref >= 0:
            stack.append(rref)
        if lref >= 0:
            stack.append(lref)
    new_of = {old: new for new, old in enumerate(order)}
    n = len(order)
    feature = np.empty(n, dtype=np.int32)
    tbin = np.empty(n, dtype=np.int32)
    thr = np.empty(n)
    left = np.empty(n, dtype=np.int32)
    right = np.empty(n, dtype=np.int32)
    for new, old in enumerate(order):
        f, b, lref, rref = nodes[old]
        feature[new] = f
        tbin[new] = b
        thr[new] = edges[f][b]
        left[new] = new_of[lref] if lref >= 0 else lref
        right[new] = new_of[rref] if rref >= 0 else rref
    return Tree(feature, thr, tbin, left, right, np.asarray(leaf_values, dtype=float))

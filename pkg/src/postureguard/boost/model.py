"""Multiclass gradient boosting: training loop, model container and prediction."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..core import PostureGuardError
from . import _kernels as K
from .binning import apply_bins, compute_bin_edges
from .loss import logloss, softmax, softmax_logloss
from .tree import Tree, TreeGrower

log = logging.getLogger(__name__)

# RNG streams derived from the single training seed
FEATURE_STREAM = 1
VALIDATION_STREAM = 2


class LayoutMismatch(PostureGuardError):
    """Feature matrix does not match the layout the model was trained on."""


class NonFiniteFeature(PostureGuardError):
    pass


@dataclass(frozen=True)
class BoostParams:
    num_leaves: int = 64
    learning_rate: float = 0.05
    feature_fraction: float = 0.9
    max_rounds: int = 1000
    early_stop_patience: int = 10
    min_samples_leaf: int = 20
    l2_lambda: float = 1e-3
    histogram_bins: int = 256
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.num_leaves < 2:
            raise ValueError("num_leaves must be >= 2")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if not 0.0 < self.feature_fraction <= 1.0:
            raise ValueError("feature_fraction must lie in (0, 1]")
        if self.max_rounds < 0 or self.early_stop_patience < 1:
            raise ValueError("max_rounds must be >= 0 and early_stop_patience >= 1")
        if self.min_samples_leaf < 1 or self.l2_lambda < 0:
            raise ValueError("min_samples_leaf must be >= 1 and l2_lambda >= 0")
        if not 2 <= self.histogram_bins <= K.N_BINS_MAX:
            raise ValueError(f"histogram_bins must lie in [2, {K.N_BINS_MAX}]")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "BoostParams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    valid_loss: list = field(default_factory=list)
    stopped_round: int = 0
    best_round: int = 0
    single_class: bool = False
    n_fit: int = 0
    n_valid: int = 0
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


class GbdtModel:
    """Trained multiclass booster.

    ``trees[m][k]`` is the tree of round ``m`` for class position ``k``;
    ``classes[k]`` is the label id that position stands for. Raw scores are
    ``base_score`` plus every stored leaf value, accumulated round by round.
    """

    def __init__(self, classes, base_score, trees, params: BoostParams, n_features: int,
                 bin_edges=None, layout_hash: str = "", tau: int = 1, ood=None):
        self.classes = np.asarray(classes, dtype=np.int64)
        self.base_score = np.asarray(base_score, dtype=float)
        self.trees = [list(r) for r in trees]
        self.params = params
        self.n_features = int(n_features)
        self.bin_edges = [np.asarray(e, dtype=float) for e in (bin_edges or [])]
        self.layout_hash = layout_hash
        self.tau = int(tau)
        self.ood = ood
        if any(len(r) != self.n_classes for r in self.trees):
            raise ValueError("every round needs exactly one tree per class")
        self._packed = None

    @property
    def n_classes(self) -> int:
        return int(self.classes.shape[0])

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    @property
    def n_trees(self) -> int:
        return self.n_rounds * self.n_classes

    def flat_trees(self) -> list[Tree]:
        """Trees in round-major, class-minor order."""
        return [t for r in self.trees for t in r]

    def leaf_counts(self) -> np.ndarray:
        return np.array([t.n_leaves for t in self.flat_trees()], dtype=np.int64)

    def truncated(self, n_rounds: int) -> "GbdtModel":
        return GbdtModel(self.classes, self.base_score, self.trees[:n_rounds], self.params,
                         self.n_features, self.bin_edges, self.layout_hash, self.tau)

    def _pack(self):
        if self._packed is None:
            ts = self.flat_trees()
            n_int = np.array([t.n_internal for t in ts], dtype=np.int64)
            n_leaf = np.array([t.n_leaves for t in ts], dtype=np.int64)
            node_off = np.concatenate([[0], np.cumsum(n_int)[:-1]]).astype(np.int64)
            leaf_off = np.concatenate([[0], np.cumsum(n_leaf)[:-1]]).astype(np.int64)

            def cat(name, dtype):
                parts = [getattr(t, name) for t in ts]
                return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)

            self._packed = (cat("feature", np.int64), cat("threshold", float),
                            cat("left", np.int64), cat("right", np.int64),
                            cat("leaf_value", float), node_off, leaf_off, n_int)
        return self._packed

    def check_features(self, X, layout_hash: str | None = None) -> np.ndarray:
        if layout_hash is not None and self.layout_hash and layout_hash != self.layout_hash:
            raise LayoutMismatch(
                f"feature layout {layout_hash} does not match the model's {self.layout_hash}; "
                "retrain the model or re-export the feature schema")
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise LayoutMismatch(
                f"expected {self.n_features} features per row, got shape {X.shape}; "
                "retrain the model or re-export the feature schema")
        return X

    def predict_scores(self, X, layout_hash: str | None = None) -> np.ndarray:
        X = self.check_features(X, layout_hash)
        if self.n_rounds == 0:
            return np.tile(self.base_score, (X.shape[0], 1))
        f, thr, lft, rgt, val, noff, loff, nint = self._pack()
        return K.predict_raw(X, self.base_score, f, thr, lft, rgt, val, noff, loff, nint,
                             self.n_rounds, self.n_classes)

    def predict_proba(self, X, layout_hash: str | None = None) -> np.ndarray:
        return softmax(self.predict_scores(X, layout_hash))

    def predict_label(self, X, layout_hash: str | None = None) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. the lowest class position
        return self.classes[np.argmax(self.predict_scores(X, layout_hash), axis=1)]

    def leaf_indices(self, X, layout_hash: str | None = None) -> np.ndarray:
        """Leaf id per tree, columns ordered round-major then class (``m * K + k``)."""
        X = self.check_features(X, layout_hash)
        if self.n_trees == 0:
            return np.zeros((X.shape[0], 0), dtype=np.int32)
        f, thr, lft, rgt, _, noff, _, nint = self._pack()
        return K.leaf_index_matrix(X, f, thr, lft, rgt, noff, nint, self.n_trees)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(stream)))


def validation_rows(labels, groups, fraction: float, seed: int):
    """Split rows into (fit, valid) by holding out whole groups, stratified by label.

    Each class keeps at least one group for fitting; ``round(fraction * n)``
    of its groups (in a seeded shuffle) are held out.
    """
    labels = np.asarray(labels)
    groups = np.arange(labels.size) if groups is None else np.asarray(groups)
    uniq, first, inverse = np.unique(groups, return_index=True, return_inverse=True)
    group_label = labels[first]
    rng = _rng(seed, VALIDATION_STREAM)
    held = np.zeros(uniq.size, dtype=bool)
    if fraction > 0:
        for cls in np.unique(group_label):
            members = np.flatnonzero(group_label == cls)
            n_val = min(int(np.floor(fraction * members.size + 0.5)), members.size - 1)
            if n_val > 0:
                held[rng.permutation(members)[:n_val]] = True
    valid = held[inverse]
    return np.flatnonzero(~valid), np.flatnonzero(valid)


def _feature_subset(rng, n_features: int, fraction: float) -> np.ndarray:
    if fraction >= 1.0:
        return np.arange(n_features, dtype=np.int64)
    n_sel = max(1, int(np.floor(fraction * n_features + 0.5)))
    return np.sort(rng.choice(n_features, n_sel, replace=False)).astype(np.int64)


def _check_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    if not np.isfinite(X).all():
        raise NonFiniteFeature("feature matrix contains NaN or infinite values")
    return X


def train(X, y, params: BoostParams | None = None, *, groups=None, layout_hash: str = "",
          tau: int = 1, classes=None, callback=None):
    """Fit a softmax booster; returns ``(model, report)``.

    ``groups`` marks rows that belong together (e.g. frames of one sample)
    so the early-stopping hold-out never splits a group. ``classes`` fixes
    the label set and its order; by default it is the sorted set of labels
    present. A single-class input yields a constant model with
    ``report.single_class`` set.
    """
    params = params or BoostParams()
    t0 = time.perf_counter()
    X = _check_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise ValueError("labels must have one entry per row")
    classes = np.unique(y) if classes is None else np.asarray(classes, dtype=np.int64)
    pos = np.searchsorted(classes, y)
    if np.any(pos >= classes.size) or np.any(classes[np.minimum(pos, classes.size - 1)] != y):
        raise ValueError("labels outside the declared class set")
    n_classes = classes.size
    report = TrainReport()

    counts = np.bincount(pos, minlength=n_classes)
    if np.count_nonzero(counts) < 2:
        report.single_class = True
        report.n_fit = int(y.size)
        report.seconds = time.perf_counter() - t0
        base = np.where(counts > 0, 0.0, np.log(np.finfo(float).tiny))
        log.warning("single-class training data: returning a constant model")
        return GbdtModel(classes, base, [], params, X.shape[1], None, layout_hash, tau), report

    fit_rows, val_rows = validation_rows(pos, groups, params.validation_fraction, params.seed)
    yf, yv = pos[fit_rows], pos[val_rows]
    Xv = X[val_rows]
    report.n_fit, report.n_valid = int(yf.size), int(yv.size)

    prior = np.bincount(yf, minlength=n_classes) / yf.size
    base = np.log(np.maximum(prior, np.finfo(float).tiny))
    edges = compute_bin_edges(X, params.histogram_bins, rows=fit_rows)
    nbins = np.array([e.size + 1 for e in edges], dtype=np.int64)
    xb = apply_bins(X, edges, rows=fit_rows)
    grower = TreeGrower(xb, nbins, edges, params.num_leaves, params.min_samples_leaf,
                        params.l2_lambda, params.learning_rate)
    rng = _rng(params.seed, FEATURE_STREAM)

    scores = np.tile(base, (yf.size, 1))
    vscores = np.tile(base, (yv.size, 1))
    all_rows = np.arange(yf.size, dtype=np.int64)
    trees: list[list[Tree]] = []
    best_loss, best_round = np.inf, 0
    loss, grad, hess = softmax_logloss(scores, yf)

    for m in range(params.max_rounds):
        round_trees = []
        for k in range(n_classes):
            feats = _feature_subset(rng, X.shape[1], params.feature_fraction)
            g = np.ascontiguousarray(grad[:, k])
            h = np.ascontiguousarray(hess[:, k])
            tree, leaf_rows = grower.grow(all_rows, g, h, feats)
            for leaf, rows in enumerate(leaf_rows):
                scores[rows, k] += tree.leaf_value[leaf]
            if yv.size:
                vscores[:, k] += tree.predict(Xv)
            round_trees.append(tree)
        trees.append(round_trees)
        loss, grad, hess = softmax_logloss(scores, yf)
        report.train_loss.append(loss)
        monitor = logloss(vscores, yv) if yv.size else loss
        report.valid_loss.append(monitor)
        report.stopped_round = m + 1
        if monitor < best_loss:
            best_loss, best_round = monitor, m + 1
        if callback is not None:
            callback(m + 1, loss, monitor)
        log.debug("round %d train %.6f valid %.6f", m + 1, loss, monitor)
        if m + 1 - best_round >= params.early_stop_patience:
            break

    report.best_round = best_round
    report.seconds = time.perf_counter() - t0
    model = GbdtModel(classes, base, trees[:best_round], params, X.shape[1], edges,
                      layout_hash, tau)
    return model, report

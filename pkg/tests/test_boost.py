import numpy as np
import pytest

from postureguard.boost import (
    BoostParams, GbdtModel, LayoutMismatch, NonFiniteFeature, Tree, apply_bins, compute_bin_edges, train,
)
from postureguard.boost import _kernels as K
from postureguard.boost.model import validation_rows


def exact_best_gain(X, g, h, lam, min_leaf):
    """Exhaustive sorted scan over every distinct threshold of every feature."""
    G, H, n = g.sum(), h.sum(), len(g)
    parent = G * G / (H + lam)
    best = (0.0, -1, None)
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs, gs, hs = X[order, j], g[order], h[order]
        gl = hl = 0.0
        for i in range(n - 1):
            gl += gs[i]
            hl += hs[i]
            if xs[i] == xs[i + 1]:
                continue
            if i + 1 < min_leaf or n - i - 1 < min_leaf:
                continue
            gain = gl * gl / (hl + lam) + (G - gl) ** 2 / (H - hl + lam) - parent
            if gain > best[0]:
                best = (gain, j, xs[i])
    return best


def histogram_best(X, g, h, lam, min_leaf):
    edges = compute_bin_edges(X, 256)
    nbins = np.array([e.size + 1 for e in edges], dtype=np.int64)
    xb = apply_bins(X, edges)
    rows = np.arange(X.shape[0], dtype=np.int64)
    feats = np.arange(X.shape[1], dtype=np.int64)
    hist = np.empty((X.shape[1], K.N_BINS_MAX, 3))
    K.build_histogram(xb, feats, nbins, rows, K.gather_gh(rows, g, h), hist)
    gain, j, b = K.best_split(hist, nbins, g.sum(), h.sum(), float(len(g)), lam, float(min_leaf))
    return gain, j, (edges[j][b] if j >= 0 else None)


@pytest.mark.parametrize("n", [60, 500, 5000])
def test_histogram_split_matches_sorted_scan(n):
    rng = np.random.default_rng(n)
    for trial in range(8):
        f = 4
        distinct = rng.integers(2, 257, f)
        X = np.column_stack([rng.integers(0, d, n) * 0.37 - 3 for d in distinct]).astype(float)
        g = rng.standard_normal(n)
        h = rng.uniform(0.01, 0.25, n)
        lam, min_leaf = 1e-3, int(rng.integers(1, 30))
        exact = exact_best_gain(X, g, h, lam, min_leaf)
        hist = histogram_best(X, g, h, lam, min_leaf)
        assert abs(exact[0] - hist[0]) <= 1e-9 * max(1.0, abs(exact[0]))
        assert (exact[1], exact[2]) == (hist[1], hist[2])


def test_bins_replay_thresholds(rng):
    X = rng.standard_normal((3000, 3))
    edges = compute_bin_edges(X, 256)
    xb = apply_bins(X, edges)
    for j, e in enumerate(edges):
        assert e.size <= 255
        for t in (0, e.size // 2, e.size - 1):
            assert np.array_equal(X[:, j] <= e[t], xb[j] <= t)


def _blobs(seed, n=300, k=3, f=5):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, k, n)
    X = rng.standard_normal((n, f)) + 1.5 * np.eye(k, f)[y]
    return X, y


def test_separable_threshold_learned_within_ten_rounds():
    rng = np.random.default_rng(1)
    X = rng.uniform(-1, 1, (400, 3))
    y = (X[:, 1] > 0.2).astype(int)
    model, report = train(X, y, BoostParams(max_rounds=10, learning_rate=0.3, validation_fraction=0.0))
    assert model.n_rounds <= 10
    assert np.mean(model.predict_label(X) == y) == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_training_loss_never_increases(seed):
    X, y = _blobs(seed, n=600, k=4)
    params = BoostParams(feature_fraction=1.0, max_rounds=60, num_leaves=8, seed=seed, validation_fraction=0.0)
    _, report = train(X, y, params)
    prior = np.bincount(y) / y.size
    initial = -np.mean(np.log(prior[y]))
    losses = np.array([initial] + report.train_loss)
    assert np.all(np.diff(losses) <= 0.0)


def test_zero_rounds_predicts_priors():
    X, y = _blobs(0)
    model, report = train(X, y, BoostParams(max_rounds=0, validation_fraction=0.0))
    assert model.n_rounds == 0 and report.stopped_round == 0
    prior = np.bincount(y) / y.size
    np.testing.assert_allclose(model.predict_proba(X[:5]), np.tile(prior, (5, 1)), rtol=1e-12)


def test_base_score_shift_leaves_probabilities_unchanged():
    X, y = _blobs(1)
    model, _ = train(X, y, BoostParams(max_rounds=15))
    shifted = GbdtModel(model.classes, model.base_score + 3.5, model.trees, model.params, model.n_features)
    np.testing.assert_allclose(shifted.predict_proba(X), model.predict_proba(X), rtol=1e-12, atol=1e-15)
    assert np.array_equal(shifted.predict_label(X), model.predict_label(X))


def test_one_split_hand_trace():
    x = np.arange(40.0)[:, None]
    y = (x[:, 0] >= 20).astype(int)
    params = BoostParams(num_leaves=2, learning_rate=0.1, max_rounds=1, min_samples_leaf=5,
                         validation_fraction=0.0)
    model, _ = train(x, y, params)
    t0, t1 = model.trees[0]
    # p = 0.5 everywhere: class-0 gradients are -0.5 on the left, +0.5 on the right, hessians 0.25
    v = 0.1 * 10.0 / (5.0 + 1e-3)
    assert t0.threshold.tolist() == [19.0] and t0.feature.tolist() == [0]
    np.testing.assert_allclose(t0.leaf_value, [v, -v], rtol=1e-15)
    np.testing.assert_allclose(t1.leaf_value, [-v, v], rtol=1e-15)
    s = model.predict_scores(np.array([[3.0], [19.0], [19.5]]))
    np.testing.assert_allclose(s, np.log(0.5) + np.array([[v, -v], [v, -v], [-v, v]]), rtol=1e-15)


def test_manual_tree_routing():
    # root: x0 <= 1 ? (x1 <= 0 ? leaf0 : leaf1) : leaf2
    tree = Tree(np.array([0, 1], np.int32), np.array([1.0, 0.0]), np.array([0, 0], np.int32),
                np.array([1, -1], np.int32), np.array([-3, -2], np.int32), np.array([10.0, 20.0, 30.0]))
    X = np.array([[0.0, -1.0], [1.0, 0.5], [1.5, -9.0]])
    assert tree.apply(X).tolist() == [0, 1, 2]
    assert tree.predict(X).tolist() == [10.0, 20.0, 30.0]


def test_scores_are_base_plus_tree_sums():
    X, y = _blobs(2)
    model, _ = train(X, y, BoostParams(max_rounds=12, num_leaves=6))
    manual = np.tile(model.base_score, (X.shape[0], 1))
    for rnd in model.trees:
        for k, tree in enumerate(rnd):
            manual[:, k] += tree.predict(X)
    assert np.array_equal(model.predict_scores(X), manual)
    np.testing.assert_allclose(model.predict_proba(X).sum(axis=1), 1.0, rtol=1e-14)


def test_leaf_indices_layout():
    X, y = _blobs(3)
    model, _ = train(X, y, BoostParams(max_rounds=7, num_leaves=5))
    leaves = model.leaf_indices(X)
    assert leaves.shape == (X.shape[0], model.n_rounds * model.n_classes)
    for col, tree in enumerate(model.flat_trees()):
        assert np.array_equal(leaves[:, col], tree.apply(X))
        assert leaves[:, col].max() < tree.n_leaves


def test_training_is_deterministic():
    X, y = _blobs(4)
    a, ra = train(X, y, BoostParams(max_rounds=20, seed=5))
    b, rb = train(X, y, BoostParams(max_rounds=20, seed=5))
    assert a.flat_trees() == b.flat_trees() and ra.train_loss == rb.train_loss


def test_threaded_kernels_match_serial():
    rng = np.random.default_rng(11)
    n, f = 3000, 21   # two full feature blocks plus a tail
    X = rng.normal(size=(n, f))
    edges = compute_bin_edges(X, 256)
    nbins = np.array([e.size + 1 for e in edges], dtype=np.int64)
    xb = apply_bins(X, edges)
    rows = np.sort(rng.choice(n, 1700, replace=False)).astype(np.int64)
    feats = np.arange(f, dtype=np.int64)
    gh = K.gather_gh(rows, rng.standard_normal(n), rng.uniform(0.01, 0.25, n))
    serial, threaded = K.node_kernels(False), K.node_kernels(True)
    hists = []
    for build, _, _ in (serial, threaded):
        hist = np.full((f, K.N_BINS_MAX, 3), np.nan)
        build(xb, feats, nbins, rows, gh, hist)
        hists.append(hist)
    assert np.array_equal(hists[0], hists[1], equal_nan=True)
    args = (nbins, gh[:, 0].sum(), gh[:, 1].sum(), float(rows.size), 1e-3, 20.0)
    assert serial[2](hists[0], *args) == threaded[2](hists[1], *args)
    child = hists[0] * 0.5
    for (_, subtract, _), hist in zip((serial, threaded), hists):
        subtract(hist, child, nbins)
    assert np.array_equal(hists[0], hists[1], equal_nan=True)


def test_threaded_training_matches_serial(monkeypatch):
    X, y = _blobs(5, n=600, f=12)
    params = BoostParams(max_rounds=8, num_leaves=8, min_samples_leaf=5, seed=2)
    serial, _ = train(X, y, params)
    threaded_kernels = K.node_kernels(True)
    monkeypatch.setattr(K, "node_kernels", lambda parallel: threaded_kernels)
    threaded, _ = train(X, y, params)
    assert serial.n_trees > 0 and serial.flat_trees() == threaded.flat_trees()


def test_early_stopping_truncates_to_best_round():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((400, 4))
    y = rng.integers(0, 3, 400)  # pure noise, validation loss rises quickly
    model, report = train(X, y, BoostParams(max_rounds=500, early_stop_patience=5, learning_rate=0.5))
    assert report.stopped_round < 500
    assert report.stopped_round - report.best_round == 5
    assert model.n_rounds == report.best_round
    assert report.valid_loss[report.best_round - 1] == min(report.valid_loss)


def test_validation_holds_out_whole_groups():
    labels = np.repeat([0, 1, 2], 40)
    groups = np.repeat(np.arange(12), 10)
    fit, val = validation_rows(labels, groups, 0.25, seed=3)
    assert set(groups[fit]).isdisjoint(groups[val])
    assert np.unique(groups[val]).size == 3  # one of four groups per class
    for c in range(3):
        assert np.any(labels[fit] == c)


def test_class_ids_map_to_positions():
    X, y = _blobs(5)
    ids = np.array([4, 9, 17])[y]
    model, _ = train(X, ids, BoostParams(max_rounds=10), classes=[4, 9, 17, 18])
    assert model.classes.tolist() == [4, 9, 17, 18]
    assert set(model.predict_label(X)) <= {4, 9, 17}


def test_single_class_gives_constant_model():
    X = np.zeros((30, 2))
    model, report = train(X, np.full(30, 6), BoostParams())
    assert report.single_class and model.n_rounds == 0
    assert model.predict_label(X).tolist() == [6] * 30


def test_non_finite_features_rejected():
    X, y = _blobs(6)
    X[3, 2] = np.nan
    with pytest.raises(NonFiniteFeature):
        train(X, y)


def test_layout_checks():
    X, y = _blobs(7)
    model, _ = train(X, y, BoostParams(max_rounds=3), layout_hash="aaaa")
    with pytest.raises(LayoutMismatch):
        model.predict_label(X, layout_hash="bbbb")
    with pytest.raises(LayoutMismatch):
        model.predict_label(X[:, :3])
    model.predict_label(X, layout_hash="aaaa")


def test_params_validation():
    with pytest.raises(ValueError):
        BoostParams(num_leaves=1)
    with pytest.raises(ValueError):
        BoostParams(feature_fraction=0.0)
    assert BoostParams.from_dict({"num_leaves": 8, "unknown": 1}).num_leaves == 8

"""numba kernels for histogram construction, split search and tree traversal.

Binned matrices are feature-major (``xb[f, i]``) uint8 so one histogram pass
streams a single feature column. The node kernels come in serial and
threaded forms; the threaded ones split work by feature, never by row, so
both give bit-identical results.
"""
import numpy as np
from numba import njit, prange

N_BINS_MAX = 256
# features sharing one pass over a node's rows
FEATURE_BLOCK = 8


@njit(cache=True, nogil=True)
def gather_gh(rows, g, h):
    """Gradients of ``rows`` interleaved as an (n, 2) array."""
    n = rows.shape[0]
    gh = np.empty((n, 2))
    for i in range(n):
        gh[i, 0] = g[rows[i]]
        gh[i, 1] = h[rows[i]]
    return gh


@njit(cache=True, nogil=True)
def _accumulate(col, rows, gh, o):
    for i in range(rows.shape[0]):
        b = col[rows[i]]
        o[b, 0] += gh[i, 0]
        o[b, 1] += gh[i, 1]
        o[b, 2] += 1.0


@njit(cache=True, nogil=True)
def _accumulate_block(xb, feats, j, rows, gh, out):
    """Features ``feats[j:j+8]`` in one pass over the rows.

    Loads each row index and gradient pair once and interleaves eight
    independent accumulation chains.
    """
    n = rows.shape[0]
    c0 = xb[feats[j]]
    c1 = xb[feats[j + 1]]
    c2 = xb[feats[j + 2]]
    c3 = xb[feats[j + 3]]
    c4 = xb[feats[j + 4]]
    c5 = xb[feats[j + 5]]
    c6 = xb[feats[j + 6]]
    c7 = xb[feats[j + 7]]
    o0 = out[j]
    o1 = out[j + 1]
    o2 = out[j + 2]
    o3 = out[j + 3]
    o4 = out[j + 4]
    o5 = out[j + 5]
    o6 = out[j + 6]
    o7 = out[j + 7]
    for i in range(n):
        r = rows[i]
        g = gh[i, 0]
        h = gh[i, 1]
        b = c0[r]
        o0[b, 0] += g
        o0[b, 1] += h
        o0[b, 2] += 1.0
        b = c1[r]
        o1[b, 0] += g
        o1[b, 1] += h
        o1[b, 2] += 1.0
        b = c2[r]
        o2[b, 0] += g
        o2[b, 1] += h
        o2[b, 2] += 1.0
        b = c3[r]
        o3[b, 0] += g
        o3[b, 1] += h
        o3[b, 2] += 1.0
        b = c4[r]
        o4[b, 0] += g
        o4[b, 1] += h
        o4[b, 2] += 1.0
        b = c5[r]
        o5[b, 0] += g
        o5[b, 1] += h
        o5[b, 2] += 1.0
        b = c6[r]
        o6[b, 0] += g
        o6[b, 1] += h
        o6[b, 2] += 1.0
        b = c7[r]
        o7[b, 0] += g
        o7[b, 1] += h
        o7[b, 2] += 1.0


@njit(cache=True, nogil=True)
def _histogram_block(xb, feats, nbins, rows, gh, out, blk):
    j0 = blk * FEATURE_BLOCK
    j1 = min(j0 + FEATURE_BLOCK, feats.shape[0])
    for j in range(j0, j1):
        out[j, :nbins[j]] = 0.0
    if j1 - j0 == FEATURE_BLOCK:
        _accumulate_block(xb, feats, j0, rows, gh, out)
    else:
        for j in range(j0, j1):
            _accumulate(xb[feats[j]], rows, gh, out[j])


@njit(cache=True, nogil=True)
def build_histogram(xb, feats, nbins, rows, gh, out):
    """out[j, b] = (sum g, sum h, count) over ``rows`` whose feature ``feats[j]`` has bin b.

    ``gh`` holds the gradients already gathered in ``rows`` order. Only the
    first ``nbins[j]`` bins of each feature are written. Within a feature
    every bin sums its rows in row order, so the result is deterministic.
    """
    for blk in range((feats.shape[0] + FEATURE_BLOCK - 1) // FEATURE_BLOCK):
        _histogram_block(xb, feats, nbins, rows, gh, out, blk)


@njit(cache=True, nogil=True, parallel=True)
def build_histogram_parallel(xb, feats, nbins, rows, gh, out):
    """:func:`build_histogram` with feature blocks spread over threads; same result."""
    for blk in prange((feats.shape[0] + FEATURE_BLOCK - 1) // FEATURE_BLOCK):
        _histogram_block(xb, feats, nbins, rows, gh, out, blk)


@njit(cache=True, nogil=True)
def _subtract_feature(parent, child, j, nb):
    for b in range(nb):
        for k in range(3):
            parent[j, b, k] -= child[j, b, k]


@njit(cache=True, nogil=True)
def subtract_histogram(parent, child, nbins):
    """In place: ``parent`` becomes the histogram of the sibling of ``child``."""
    for j in range(parent.shape[0]):
        _subtract_feature(parent, child, j, nbins[j])


@njit(cache=True, nogil=True, parallel=True)
def subtract_histogram_parallel(parent, child, nbins):
    for j in prange(parent.shape[0]):
        _subtract_feature(parent, child, j, nbins[j])


@njit(cache=True, nogil=True)
def _feature_best(hist, j, nb, sum_g, sum_h, count, lam, min_leaf, parent):
    best_gain = 0.0
    best_b = -1
    gl = 0.0
    hl = 0.0
    cl = 0.0
    for b in range(nb - 1):
        gl += hist[j, b, 0]
        hl += hist[j, b, 1]
        cl += hist[j, b, 2]
        if cl < min_leaf:
            continue
        cr = count - cl
        if cr < min_leaf:
            break
        gr = sum_g - gl
        hr = sum_h - hl
        gain = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
        if gain > best_gain:
            best_gain = gain
            best_b = b
    return best_gain, best_b


@njit(cache=True, nogil=True)
def best_split(hist, nbins, sum_g, sum_h, count, lam, min_leaf):
    """Best (gain, feature position, bin) over a node histogram.

    Left child takes bins ``<= bin``. Candidates leaving fewer than
    ``min_leaf`` rows on either side are skipped. Ties go to the lowest
    feature position, then the lowest bin. Returns gain 0 and position -1
    when no candidate has strictly positive gain.
    """
    parent = sum_g * sum_g / (sum_h + lam)
    best_gain = 0.0
    best_j = -1
    best_b = -1
    for j in range(hist.shape[0]):
        gain, b = _feature_best(hist, j, nbins[j], sum_g, sum_h, count, lam, min_leaf, parent)
        if gain > best_gain:
            best_gain = gain
            best_j = j
            best_b = b
    return best_gain, best_j, best_b


@njit(cache=True, nogil=True, parallel=True)
def best_split_parallel(hist, nbins, sum_g, sum_h, count, lam, min_leaf):
    """:func:`best_split` with the per-feature scans spread over threads; same result."""
    nf = hist.shape[0]
    parent = sum_g * sum_g / (sum_h + lam)
    gains = np.empty(nf)
    bins = np.empty(nf, dtype=np.int64)
    for j in prange(nf):
        gains[j], bins[j] = _feature_best(hist, j, nbins[j], sum_g, sum_h, count, lam,
                                          min_leaf, parent)
    # serial reduction in feature order keeps the tie rule
    best_gain = 0.0
    best_j = -1
    best_b = -1
    for j in range(nf):
        if gains[j] > best_gain:
            best_gain = gains[j]
            best_j = j
            best_b = bins[j]
    return best_gain, best_j, best_b


def node_kernels(parallel: bool):
    """``(build_histogram, subtract_histogram, best_split)``, threaded or serial.

    Both variants give bit-identical results; the threaded ones only pay off
    with more than one numba thread.
    """
    if parallel:
        return build_histogram_parallel, subtract_histogram_parallel, best_split_parallel
    return build_histogram, subtract_histogram, best_split


@njit(cache=True, nogil=True)
def partition_rows(xb, feature, threshold_bin, rows):
    """Stable split of ``rows`` into (bin <= threshold, bin > threshold)."""
    col = xb[feature]
    n = rows.shape[0]
    nl = 0
    for i in range(n):
        if col[rows[i]] <= threshold_bin:
            nl += 1
    left = np.empty(nl, dtype=rows.dtype)
    right = np.empty(n - nl, dtype=rows.dtype)
    a = 0
    c = 0
    for i in range(n):
        r = rows[i]
        if col[r] <= threshold_bin:
            left[a] = r
            a += 1
        else:
            right[c] = r
            c += 1
    return left, right


@njit(cache=True, nogil=True)
def sum_gh(gh):
    sg = 0.0
    sh = 0.0
    for i in range(gh.shape[0]):
        sg += gh[i, 0]
        sh += gh[i, 1]
    return sg, sh


@njit(cache=True, nogil=True)
def _route(x, feature, threshold, left, right, node_base, n_internal):
    if n_internal == 0:
        return 0
    node = 0
    while True:
        f = feature[node_base + node]
        if x[f] <= threshold[node_base + node]:
            nxt = left[node_base + node]
        else:
            nxt = right[node_base + node]
        if nxt < 0:
            return -nxt - 1
        node = nxt


@njit(cache=True, nogil=True)
def predict_raw(X, base, feature, threshold, left, right, leaf_value,
                node_off, leaf_off, n_internal, n_rounds, n_classes):
    """Accumulate base score plus every tree's leaf value, round by round."""
    n = X.shape[0]
    out = np.empty((n, n_classes))
    for i in range(n):
        x = X[i]
        for k in range(n_classes):
            out[i, k] = base[k]
        for m in range(n_rounds):
            for k in range(n_classes):
                t = m * n_classes + k
                leaf = _route(x, feature, threshold, left, right, node_off[t], n_internal[t])
                out[i, k] += leaf_value[leaf_off[t] + leaf]
    return out


@njit(cache=True, nogil=True)
def leaf_index_matrix(X, feature, threshold, left, right, node_off, n_internal, n_trees):
    n = X.shape[0]
    out = np.empty((n, n_trees), dtype=np.int32)
    for i in range(n):
        x = X[i]
        for t in range(n_trees):
            out[i, t] = _route(x, feature, threshold, left, right, node_off[t], n_internal[t])
    return out


@njit(cache=True, nogil=True)
def route_tree(X, feature, threshold, left, right):
    """Leaf ids of a single tree for every row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int32)
    for i in range(n):
        out[i] = _route(X[i], feature, threshold, left, right, 0, feature.shape[0])
    return out

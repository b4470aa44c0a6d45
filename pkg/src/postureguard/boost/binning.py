"""Equal-frequency feature binning.

Bin ``b`` of a feature holds values in ``(edges[b-1], edges[b]]``; the last
bin is open above. Edges are actual data values, so ``x <= edges[t]`` holds
exactly when ``bin(x) <= t`` and a split on bin ``t`` can be replayed on raw
features with threshold ``edges[t]``.
"""
import numpy as np


def column_edges(col, max_bins: int = 256) -> np.ndarray:
    """Upper bin edges for one column (at most ``max_bins - 1`` of them).

    Columns with at most ``max_bins`` distinct values get one bin per value;
    otherwise edge ``i`` is the order statistic at rank ``ceil(i * n / max_bins)``.
    """
    values = np.unique(col)
    if values.size <= max_bins:
        return values[:-1].copy()
    s = np.sort(col)
    n = s.size
    ranks = np.ceil(np.arange(1, max_bins) * n / max_bins).astype(np.int64) - 1
    edges = np.unique(s[ranks])
    if edges.size and edges[-1] >= s[-1]:
        edges = edges[:-1]
    return edges


def compute_bin_edges(X, max_bins: int = 256, rows=None) -> list[np.ndarray]:
    """Edges of every column, optionally using only the given rows."""
    X = np.asarray(X, dtype=float)
    return [column_edges(X[:, j] if rows is None else X[rows, j], max_bins)
            for j in range(X.shape[1])]


def apply_bins(X, edges, rows=None) -> np.ndarray:
    """Feature-major uint8 bin matrix of shape (F, N), optionally for a row subset.

    Works column by column so no second copy of ``X`` is made.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0] if rows is None else len(rows)
    out = np.empty((X.shape[1], n), dtype=np.uint8)
    for j, e in enumerate(edges):
        out[j] = np.searchsorted(e, X[:, j] if rows is None else X[rows, j], side="left")
    return out

"""Softmax cross-entropy with per-class gradients and diagonal hessians."""
import numpy as np

from ..core import PostureGuardError

LOG_CLIP = 1e-15


class LabelOutOfRange(PostureGuardError):
    pass


def softmax(scores):
    s = np.asarray(scores, dtype=float)
    z = s - s.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_logloss(raw_scores, labels):
    """Mean multiclass log loss of ``raw_scores`` (N, K) against class ids.

    Returns ``(loss, grad, hess)`` where ``grad = p - y`` and
    ``hess = p * (1 - p)`` element-wise; ``log p`` is clipped at 1e-15.
    """
    s = np.asarray(raw_scores, dtype=float)
    y = np.asarray(labels)
    if s.ndim != 2 or s.shape[1] < 2:
        raise ValueError("raw_scores must be (N, K) with K >= 2")
    n, k = s.shape
    if y.shape != (n,):
        raise ValueError("labels must have one entry per row")
    if n and (y.min() < 0 or y.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    p = softmax(s)
    rows = np.arange(n)
    loss = float(-np.mean(np.log(np.maximum(p[rows, y], LOG_CLIP)))) if n else 0.0
    grad = p.copy()
    grad[rows, y] -= 1.0
    hess = p * (1.0 - p)
    return loss, grad, hess


def logloss(raw_scores, labels) -> float:
    s = np.asarray(raw_scores, dtype=float)
    y = np.asarray(labels)
    if s.shape[0] == 0:
        return 0.0
    p = softmax(s)
    return float(-np.mean(np.log(np.maximum(p[np.arange(s.shape[0]), y], LOG_CLIP))))

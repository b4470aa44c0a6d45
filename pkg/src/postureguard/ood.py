"""Out-of-distribution detection on leaf embeddings.

A sample's embedding is the vector of leaf ids it reaches in every tree of
the booster. Two embeddings are compared through the fraction ``s`` of trees
in which they land in the same leaf, with kernel ``exp(-gamma * (1 - s))``.
A one-class SVM over training embeddings then marks the region of known
postures; negative decision values (beyond the solver tolerance) are
flagged as out of distribution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .boost.model import GbdtModel
from .core import PostureGuardError

DEFAULT_NU = 0.05
DEFAULT_GAMMA = 4.0
KKT_TOL = 1e-6
MAX_ITER = 100_000
# one-class fits on more points than this use a seeded subsample
DEFAULT_MAX_TRAIN = 2000
MIN_TRAIN = 10
# decision values within the solver tolerance of zero count as on the margin
MARGIN_TOL = KKT_TOL


class OodError(PostureGuardError):
    pass


class LengthMismatch(OodError):
    pass


class TooFewSamples(OodError):
    pass


class NonConvergence(OodError):
    pass


class ModelBindingMismatch(OodError):
    """Detector was fitted on embeddings of a different model."""


def _as_embeddings(e) -> np.ndarray:
    e = np.asarray(e)
    if e.ndim == 1:
        e = e[None, :]
    if e.ndim != 2:
        raise ValueError("embeddings must be 1-D or 2-D")
    return np.ascontiguousarray(e, dtype=np.int32)


@njit(cache=True, nogil=True)
def _agreement(a, b, symmetric):
    n, m, t = a.shape[0], b.shape[0], a.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        lo = i if symmetric else 0
        for j in range(lo, m):
            same = 0
            for c in range(t):
                if a[i, c] == b[j, c]:
                    same += 1
            out[i, j] = same / t if t else 1.0
            if symmetric:
                out[j, i] = out[i, j]
    return out


def agreement(a, b) -> np.ndarray:
    """Fraction of equal leaf ids for every pair of rows of ``a`` and ``b``."""
    a, b = _as_embeddings(a), _as_embeddings(b)
    if a.shape[1] != b.shape[1]:
        raise LengthMismatch(f"embedding lengths differ: {a.shape[1]} vs {b.shape[1]}")
    return _agreement(a, b, a is b)


def kernel_matrix(a, b=None, gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    a = _as_embeddings(a)
    b = a if b is None else _as_embeddings(b)
    if a.shape[1] != b.shape[1]:
        raise LengthMismatch(f"embedding lengths differ: {a.shape[1]} vs {b.shape[1]}")
    return np.exp(-gamma * (1.0 - _agreement(a, b, a is b)))


def embedding_kernel(a, b, gamma: float = DEFAULT_GAMMA) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise LengthMismatch(f"embedding lengths differ: {a.shape} vs {b.shape}")
    s = float(np.mean(a == b)) if a.size else 1.0
    return float(np.exp(-gamma * (1.0 - s)))


@njit(cache=True, nogil=True)
def _smo(Q, C, tol, max_iter):
    n = Q.shape[0]
    alpha = np.zeros(n)
    # as many points as fit at the upper bound, the remainder on the next one
    remaining = 1.0
    for i in range(n):
        a = min(C, remaining)
        alpha[i] = a
        remaining -= a
        if remaining <= 0.0:
            break
    G = Q @ alpha
    for it in range(max_iter):
        i = -1
        j = -1
        gmin = np.inf
        gmax = -np.inf
        for t in range(n):
            if alpha[t] < C and G[t] < gmin:
                gmin = G[t]
                i = t
            if alpha[t] > 0.0 and G[t] > gmax:
                gmax = G[t]
                j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            return alpha, G, it, True
        curv = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
        if curv <= 1e-12:
            curv = 1e-12
        delta = (gmax - gmin) / curv
        cap = min(C - alpha[i], alpha[j])
        if delta > cap:
            delta = cap
        alpha[i] += delta
        alpha[j] -= delta
        if C - alpha[i] < 1e-15:
            alpha[i] = C
        if alpha[j] < 1e-15:
            alpha[j] = 0.0
        for t in range(n):
            G[t] += delta * (Q[t, i] - Q[t, j])
    return alpha, G, max_iter, False


def solve_dual(Q, nu: float, tol: float = KKT_TOL, max_iter: int = MAX_ITER):
    """Minimize ``0.5 a'Qa`` subject to ``0 <= a_i <= 1/(nu n)`` and ``sum(a) = 1``.

    Pairwise updates on the maximal violating pair: the coordinate with the
    smallest gradient that can still grow gains what the coordinate with the
    largest gradient that can still shrink gives up. Stops once that
    gradient gap is below ``tol``. Returns ``(alpha, rho)`` where ``rho``
    puts the decision function at zero on the margin.
    """
    Q = np.ascontiguousarray(Q, dtype=float)
    n = Q.shape[0]
    if not 0.0 < nu <= 1.0:
        raise ValueError("nu must lie in (0, 1]")
    C = 1.0 / (nu * n)
    alpha, G, _, converged = _smo(Q, C, tol, max_iter)
    if not converged:
        raise NonConvergence(f"one-class solver did not reach tolerance {tol} in {max_iter} steps")
    free = (alpha > 0.0) & (alpha < C)
    if free.any():
        rho = float(G[free].mean())
    else:
        at_bound = G[alpha >= C]
        at_zero = G[alpha <= 0.0]
        hi = at_zero.min() if at_zero.size else at_bound.max()
        lo = at_bound.max() if at_bound.size else at_zero.min()
        rho = float(0.5 * (hi + lo))
    return alpha, rho


@dataclass(eq=False)
class OodDetector:
    support: np.ndarray      # int32 (n_support, n_trees)
    alphas: np.ndarray       # float64 (n_support,)
    rho: float
    nu: float
    kernel_gamma: float
    model_checksum: str
    n_train: int

    def decision_function(self, embeddings) -> np.ndarray:
        k = kernel_matrix(embeddings, self.support, self.kernel_gamma)
        return k @ self.alphas - self.rho

    def to_sections(self):
        meta = {"rho": self.rho, "nu": self.nu, "kernel_gamma": self.kernel_gamma,
                "model_checksum": self.model_checksum, "n_train": self.n_train}
        return meta, {"support": self.support.astype("<i4"), "alphas": self.alphas.astype("<f8")}

    @classmethod
    def from_sections(cls, meta, arrays) -> "OodDetector":
        return cls(arrays["support"].astype(np.int32), arrays["alphas"].astype(float),
                   float(meta["rho"]), float(meta["nu"]), float(meta["kernel_gamma"]),
                   str(meta["model_checksum"]), int(meta["n_train"]))


def model_fingerprint(model: GbdtModel) -> str:
    from .boost.serialize import fingerprint

    fp = getattr(model, "_fingerprint", None)
    if fp is None:
        fp = fingerprint(model)
        model._fingerprint = fp
    return fp


def fit_ood(train_embeddings, nu: float = DEFAULT_NU, gamma: float = DEFAULT_GAMMA,
            model: GbdtModel | None = None, *, max_train: int | None = DEFAULT_MAX_TRAIN,
            seed: int = 0, model_checksum: str | None = None) -> OodDetector:
    """Fit a one-class SVM over leaf embeddings.

    With more than ``max_train`` embeddings a seeded uniform subsample is
    used, which keeps the quadratic kernel matrix at desk scale. The
    detector is bound to ``model`` (or to an explicit ``model_checksum``).
    """
    E = _as_embeddings(train_embeddings)
    if E.shape[0] < MIN_TRAIN:
        raise TooFewSamples(f"need at least {MIN_TRAIN} embeddings, got {E.shape[0]}")
    if not 0.0 < nu <= 1.0:
        raise ValueError("nu must lie in (0, 1]")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if max_train is not None and E.shape[0] > max_train:
        rng = np.random.Generator(np.random.Philox(key=int(seed)))
        E = E[np.sort(rng.choice(E.shape[0], max_train, replace=False))]
    if model is not None:
        if E.shape[1] != model.n_trees:
            raise LengthMismatch(f"embeddings have {E.shape[1]} columns, model has {model.n_trees} trees")
        model_checksum = model_fingerprint(model)
    alpha, rho = solve_dual(kernel_matrix(E, gamma=gamma), nu)
    sv = alpha > 0.0
    return OodDetector(E[sv].copy(), alpha[sv], rho, float(nu), float(gamma),
                       model_checksum or "", int(E.shape[0]))


def score_ood(detector: OodDetector, embeddings, model: GbdtModel | None = None,
              model_checksum: str | None = None):
    """Decision values and OOD flags for one or more embeddings.

    A point is flagged when its decision value is below ``-MARGIN_TOL``;
    values inside that band are solver noise around the margin.

    The embeddings must come from the model the detector was fitted on; pass
    that ``model`` (or its checksum) and a mismatch raises instead of
    silently scoring against the wrong leaf geometry.
    """
    checksum = model_fingerprint(model) if model is not None else model_checksum
    if checksum is None or checksum != detector.model_checksum:
        raise ModelBindingMismatch("detector is bound to a different model")
    E = _as_embeddings(embeddings)
    if E.shape[1] != detector.support.shape[1]:
        raise LengthMismatch(
            f"embedding length {E.shape[1]} does not match the detector's {detector.support.shape[1]}")
    values = detector.decision_function(E)
    return values, values < -MARGIN_TOL

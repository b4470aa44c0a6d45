"""Frame feature extraction and temporal windowing.

Per-frame layout (F = 103 with the default 16-tap CIR window)::

    ranging (5) | RX1 metrics (12) | RX2 metrics (12) | RX1 CIR (37) | RX2 CIR (37)

Each CIR block holds 16 tap magnitudes and 16 tap phases starting at the tap
nearest the reported first-path index, then total energy, peak magnitude,
peak tap index, mean magnitude and magnitude standard deviation over all
taps.

A window of size ``tau`` turns each frame into ``F * (2*tau - 1)`` values::

    x_i | x_{i-1} ... x_{i-tau+1} | mean_2(x_i) ... mean_tau(x_i)

where ``mean_w`` averages the ``w`` most recent frames including ``x_i``.
Missing history at the start of a sequence repeats the first frame.
"""
from __future__ import annotations

import hashlib
from collections import deque
from typing import Sequence

import numpy as np

from .core import METRIC_FIELDS, RANGING_FIELDS, PostureGuardError, UwbFrame

TAP_PERIOD_NS = 1.0016  # 1 / (2 * 499.2 MHz)
K_CIR = 16
CIR_STATS = ("cir_energy", "cir_peak_mag", "cir_peak_index", "cir_mean_mag", "cir_std_mag")
LAYOUT_VERSION = 1


class TooFewFrames(PostureGuardError):
    pass


class EmptySequence(PostureGuardError):
    pass


def cir_polar(capture) -> tuple[np.ndarray, np.ndarray]:
    """Tap magnitudes and principal phases in (-pi, pi]; a zero tap has phase 0."""
    taps = getattr(capture, "taps", capture)
    taps = np.asarray(taps, dtype=np.complex128)
    return _polar(taps.real, taps.imag)


def _polar(re, im):
    mag = np.hypot(re, im)
    phase = np.arctan2(im, re)
    phase = np.where(mag == 0.0, 0.0, phase)
    phase = np.where(phase == -np.pi, np.pi, phase)
    return mag, phase


# ---------------------------------------------------------------------------
# layout

def frame_feature_names(k_cir: int = K_CIR) -> list[str]:
    names = [f"ranging.{n}" for n in RANGING_FIELDS]
    for rx in ("rx1", "rx2"):
        names += [f"{rx}.{n}" for n in METRIC_FIELDS]
    for rx in ("rx1", "rx2"):
        names += [f"{rx}.cir_mag_{j:02d}" for j in range(k_cir)]
        names += [f"{rx}.cir_phase_{j:02d}" for j in range(k_cir)]
        names += [f"{rx}.{n}" for n in CIR_STATS]
    return names


N_FRAME_FEATURES = len(frame_feature_names())


def windowed_feature_names(tau: int, k_cir: int = K_CIR) -> list[str]:
    base = frame_feature_names(k_cir)
    names = list(base)
    for k in range(1, tau):
        names += [f"lag{k}:{n}" for n in base]
    for w in range(2, tau + 1):
        names += [f"mean{w}:{n}" for n in base]
    return names


def layout_hash(tau: int, k_cir: int = K_CIR) -> str:
    """64-bit hash of the ordered windowed feature names, as 16 hex digits."""
    text = f"postureguard-layout-v{LAYOUT_VERSION}\n" + "\n".join(windowed_feature_names(tau, k_cir))
    return hashlib.blake2b(text.encode(), digest_size=8).hexdigest()


# ---------------------------------------------------------------------------
# per-frame assembly

def frames_feature_matrix(frames: Sequence[UwbFrame], k_cir: int = K_CIR) -> np.ndarray:
    """Feature rows for a run of frames; row ``i`` depends on ``frames[i]`` only."""
    n = len(frames)
    if n == 0:
        return np.empty((0, len(frame_feature_names(k_cir))))
    ranging = np.array([[getattr(f.ranging, k) for k in RANGING_FIELDS] for f in frames], dtype=float)
    metrics = np.array([[[getattr(m, k) for k in METRIC_FIELDS] for m in f.antenna_metrics]
                        for f in frames], dtype=float)
    taps = np.stack([np.stack([c.taps for c in f.cir]) for f in frames])  # (n, 2, T)
    n_taps = taps.shape[-1]

    blocks = [ranging, metrics[:, 0], metrics[:, 1]]
    fp_col = METRIC_FIELDS.index("first_path_index_ns")
    rows = np.arange(n)[:, None]
    for rx in range(2):
        mag, phase = _polar(taps[:, rx].real, taps[:, rx].imag)
        start = np.floor(metrics[:, rx, fp_col] / TAP_PERIOD_NS + 0.5).astype(np.int64)
        start = np.clip(start, 0, max(n_taps - k_cir, 0))
        cols = start[:, None] + np.arange(k_cir)[None, :]
        energy = np.sum(mag * mag, axis=1)
        stats = np.column_stack([
            energy,
            mag.max(axis=1),
            mag.argmax(axis=1).astype(float),
            mag.mean(axis=1),
            mag.std(axis=1),
        ])
        blocks += [mag[rows, cols], phase[rows, cols], stats]
    return np.hstack(blocks)


def assemble_frame_features(frame: UwbFrame, k_cir: int = K_CIR) -> np.ndarray:
    return frames_feature_matrix([frame], k_cir)[0]


def iqr_winsorize(matrix, fence: float = 1.5) -> np.ndarray:
    """Clamp each column to ``[Q1 - fence*IQR, Q3 + fence*IQR]``.

    Quartiles use linear interpolation between order statistics (numpy's
    default ``"linear"`` method). Values are clamped, never removed, so the
    frame count is preserved. A second pass is a no-op unless a clamped
    value sat directly next to a quartile's interpolation point.
    """
    x = np.asarray(matrix, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a (frames, features) matrix")
    if x.shape[0] < 4:
        raise TooFewFrames(f"IQR needs >= 4 frames, got {x.shape[0]}")
    if not fence > 0:
        raise ValueError("fence must be positive")
    q1, q3 = np.quantile(x, [0.25, 0.75], axis=0)
    iqr = q3 - q1
    return np.clip(x, q1 - fence * iqr, q3 + fence * iqr)


# ---------------------------------------------------------------------------
# windowing

def windowize(sequence, tau: int) -> np.ndarray:
    """Append lagged copies and trailing means to every row of ``sequence``."""
    x = np.asarray(sequence, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptySequence("windowize needs a non-empty (frames, features) matrix")
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if tau == 1:
        return x.copy()
    n, f = x.shape
    out = np.empty((n, f * (2 * tau - 1)))
    out[:, :f] = x
    idx = np.arange(n)
    acc = x.copy()
    for k in range(1, tau):
        lag = x[np.maximum(idx - k, 0)]
        out[:, k * f:(k + 1) * f] = lag
        acc = acc + lag
        m = tau + k - 1
        out[:, m * f:(m + 1) * f] = acc / (k + 1)
    return out


class StreamWindow:
    """Incremental :func:`windowize` for one contiguous stream.

    Produces exactly the rows batch ``windowize`` would produce for the
    same sequence, including the start-of-stream padding.
    """

    def __init__(self, tau: int):
        if tau < 1:
            raise ValueError("tau must be >= 1")
        self.tau = tau
        self._history: deque = deque(maxlen=tau)

    def __len__(self):
        return len(self._history)

    def push(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self._history:
            for _ in range(self.tau - 1):
                self._history.append(x)
        self._history.append(x)
        if self.tau == 1:
            return x.copy()
        hist = list(self._history)[::-1]  # hist[k] = x_{i-k}
        parts = [x]
        acc = x.copy()
        means = []
        for k in range(1, self.tau):
            parts.append(hist[k])
            acc = acc + hist[k]
            means.append(acc / (k + 1))
        return np.concatenate(parts + means)

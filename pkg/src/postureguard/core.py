"""Domain types for UWB captures, posture labels, samples and datasets.

Everything here is immutable after construction. Validation lives in
:func:`validate_frame` and in :func:`check_sample`; the constructors do not
validate so that the loader can collect every violation before failing.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1
DEFAULT_N_TAPS = 128
DEFAULT_INTERVAL_S = 0.2
INTERVAL_JITTER = 0.5


class PostureGuardError(Exception):
    """Base class for every error raised by this package."""


class FrameValidationError(PostureGuardError):
    """A frame broke one or more documented rules.

    ``violations`` holds one :class:`Violation` per broken rule.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        msg = "; ".join(str(v) for v in self.violations)
        super().__init__(msg)

    @property
    def kinds(self):
        return {v.kind for v in self.violations}


class RangeViolation(FrameValidationError):
    pass


class TapCountMismatch(FrameValidationError):
    pass


class NonFiniteValue(FrameValidationError):
    pass


class InvariantViolation(PostureGuardError):
    pass


class ClassTooSmall(PostureGuardError):
    pass


@dataclass(frozen=True)
class Violation:
    kind: str
    field: str
    message: str

    def __str__(self):
        return f"{self.kind} on {self.field}: {self.message}"


class PostureLabel(enum.IntEnum):
    """The 19 trained postures, ids in confusion-matrix order.

    ``Unknown`` (-1) marks out-of-distribution ground truth and is never a
    training class.
    """

    Unknown = -1
    Idle = 0
    Upright = 1
    LeanForward = 2
    LeanBack = 3
    LateralLeanLeft = 4
    CrossLegLeft = 5
    LateralLeanRight = 6
    CrossLegRight = 7
    Hunch = 8
    Tense = 9
    LieOnTable = 10
    RotateHead = 11
    VertLegShakeLeft = 12
    VertLegShakeRight = 13
    HorizLegShake = 14
    TapFinger = 15
    Stretch = 16
    Stand = 17
    Walk = 18

    @classmethod
    def classes(cls) -> tuple["PostureLabel", ...]:
        return tuple(p for p in cls if p >= 0)

    @classmethod
    def parse(cls, name: str) -> "PostureLabel":
        if name.lower() == "unknown":
            return cls.Unknown
        try:
            return cls[name]
        except KeyError:
            raise ValueError(f"unknown posture label {name!r}") from None

    @property
    def wire_name(self) -> str:
        return "unknown" if self is PostureLabel.Unknown else self.name


N_CLASSES = 19
STATIC_POSTURES = tuple(PostureLabel(i) for i in range(11))
DYNAMIC_POSTURES = tuple(PostureLabel(i) for i in range(11, 19))


class RxId(enum.Enum):
    RX1 = "rx1"
    RX2 = "rx2"


@dataclass(frozen=True)
class RangingRecord:
    distance_cm: float
    azimuth_deg: float
    elevation_deg: float
    aoa_fom: int
    pdoa_deg: float


@dataclass(frozen=True)
class AntennaFrameMetrics:
    nlos: bool
    first_path_index_ns: float
    main_path_index_ns: float
    snr_main_db: float
    snr_first_db: float
    snr_total_db: float
    rssi_db: float
    cir_main_power: int
    cir_first_path_power: int
    noise_variance: float
    cfo_ppm: float
    aoa_phase_deg: float


RANGING_FIELDS = tuple(f.name for f in fields(RangingRecord))
METRIC_FIELDS = tuple(f.name for f in fields(AntennaFrameMetrics))


@dataclass(frozen=True, eq=False)
class CirCapture:
    taps: np.ndarray  # complex128, read-only
    rx_id: RxId

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.complex128)
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    def __eq__(self, other):
        if not isinstance(other, CirCapture):
            return NotImplemented
        return self.rx_id == other.rx_id and np.array_equal(self.taps, other.taps, equal_nan=True)

    __hash__ = None


@dataclass(frozen=True)
class UwbFrame:
    timestamp_s: float
    ranging: RangingRecord
    antenna_metrics: tuple[AntennaFrameMetrics, AntennaFrameMetrics]
    cir: tuple[CirCapture, CirCapture]


@dataclass(frozen=True)
class Sample:
    sample_id: str
    subject_id: str
    label: PostureLabel
    frames: tuple[UwbFrame, ...]
    scenario_tags: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "scenario_tags", frozenset(self.scenario_tags))
        object.__setattr__(self, "label", PostureLabel(self.label))


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...]
    schema_version: int = SCHEMA_VERSION
    n_taps: int = DEFAULT_N_TAPS

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self):
        return len(self.samples)

    @property
    def n_frames(self) -> int:
        return sum(len(s.frames) for s in self.samples)

    def labels(self) -> np.ndarray:
        return np.array([int(s.label) for s in self.samples], dtype=np.int64)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.samples[i] for i in indices), self.schema_version, self.n_taps)


# ---------------------------------------------------------------------------
# validation

_RANGING_BOUNDS = {
    "distance_cm": (0.0, math.inf),
    "azimuth_deg": (-180.0, 180.0),
    "elevation_deg": (-90.0, 90.0),
    "aoa_fom": (0, 100),
    "pdoa_deg": (-180.0, 180.0),
}
_METRIC_BOUNDS = {
    "first_path_index_ns": (0.0, math.inf),
    "main_path_index_ns": (0.0, math.inf),
    "noise_variance": (0.0, math.inf),
    "aoa_phase_deg": (-180.0, 180.0),
    "cir_main_power": (0, 2**32 - 1),
    "cir_first_path_power": (0, 2**32 - 1),
}
_INTEGER_FIELDS = {"aoa_fom", "cir_main_power", "cir_first_path_power"}


def _check_scalar(prefix, name, value, bounds, out):
    where = f"{prefix}.{name}"
    if name in _INTEGER_FIELDS:
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            out.append(Violation("RangeViolation", where, f"expected integer, got {value!r}"))
            return
    elif name == "nlos":
        if not isinstance(value, (bool, np.bool_)):
            out.append(Violation("RangeViolation", where, f"expected boolean, got {value!r}"))
        return
    else:
        try:
            value = float(value)
        except (TypeError, ValueError):
            out.append(Violation("RangeViolation", where, f"expected real, got {value!r}"))
            return
        if not math.isfinite(value):
            out.append(Violation("NonFiniteValue", where, f"{value!r}"))
            return
    if bounds is not None:
        lo, hi = bounds
        if not lo <= value <= hi:
            out.append(Violation("RangeViolation", where, f"{value!r} outside [{lo}, {hi}]"))


def frame_violations(frame: UwbFrame, n_taps: int) -> list[Violation]:
    out: list[Violation] = []
    ts = frame.timestamp_s
    if not isinstance(ts, (int, float, np.floating)) or not math.isfinite(ts):
        out.append(Violation("NonFiniteValue", "timestamp_s", f"{ts!r}"))
    for name in RANGING_FIELDS:
        _check_scalar("ranging", name, getattr(frame.ranging, name), _RANGING_BOUNDS.get(name), out)
    if len(frame.antenna_metrics) != 2 or len(frame.cir) != 2:
        out.append(Violation("RangeViolation", "rx", "exactly two RX chains (RX1, RX2) are required"))
        return out
    for rx, m in zip(RxId, frame.antenna_metrics):
        for name in METRIC_FIELDS:
            _check_scalar(rx.value, name, getattr(m, name), _METRIC_BOUNDS.get(name), out)
        try:
            if float(m.first_path_index_ns) > float(m.main_path_index_ns):
                out.append(Violation("RangeViolation", f"{rx.value}.first_path_index_ns",
                                     "first path index exceeds main path index"))
        except (TypeError, ValueError):
            pass
    for rx, cap in zip(RxId, frame.cir):
        if cap.rx_id is not rx:
            out.append(Violation("RangeViolation", f"{rx.value}.rx_id", f"got {cap.rx_id}"))
        if cap.taps.shape != (n_taps,):
            out.append(Violation("TapCountMismatch", f"{rx.value}.cir",
                                 f"expected {n_taps} taps, got {cap.taps.shape[0] if cap.taps.ndim else 0}"))
        if not np.all(np.isfinite(cap.taps)):
            out.append(Violation("NonFiniteValue", f"{rx.value}.cir", "non-finite tap value"))
    return out


def validation_error(violations, context: str = "") -> FrameValidationError:
    """Most specific error class for ``violations``."""
    kinds = {v.kind for v in violations}
    cls = FrameValidationError
    if len(kinds) == 1:
        cls = {"RangeViolation": RangeViolation, "TapCountMismatch": TapCountMismatch,
               "NonFiniteValue": NonFiniteValue}[kinds.pop()]
    err = cls(violations)
    if context:
        err.args = (f"{context}: {err.args[0]}",)
    return err


def validate_frame(frame: UwbFrame, n_taps: int = DEFAULT_N_TAPS) -> UwbFrame:
    """Return ``frame`` unchanged if every invariant holds.

    Raises a :class:`FrameValidationError` subclass listing all violations;
    the subclass is specific (e.g. :class:`RangeViolation`) when all
    violations share one kind.
    """
    violations = frame_violations(frame, n_taps)
    if violations:
        raise validation_error(violations)
    return frame


def check_sample(sample: Sample, interval_s: float | None = DEFAULT_INTERVAL_S) -> None:
    """Check sample-level invariants: non-empty, strictly increasing timestamps
    spaced by ``interval_s`` within +-50%. ``interval_s=None`` skips spacing."""
    if not sample.frames:
        raise InvariantViolation(f"sample {sample.sample_id}: no frames")
    ts = np.array([f.timestamp_s for f in sample.frames], dtype=float)
    dt = np.diff(ts)
    if np.any(dt <= 0):
        raise InvariantViolation(f"sample {sample.sample_id}: timestamps not strictly increasing")
    if interval_s is not None and dt.size:
        lo, hi = interval_s * (1 - INTERVAL_JITTER), interval_s * (1 + INTERVAL_JITTER)
        bad = np.flatnonzero((dt < lo - 1e-9) | (dt > hi + 1e-9))
        if bad.size:
            raise InvariantViolation(
                f"sample {sample.sample_id}: frame spacing {dt[bad[0]]:.4f}s at frame {bad[0] + 1} "
                f"outside {interval_s}s +-{INTERVAL_JITTER:.0%}")


# ---------------------------------------------------------------------------
# splitting

def stratified_split(dataset: Dataset, train_fraction: float = 0.6, seed: int = 0):
    """Split by sample, preserving per-class proportions.

    Each class gets ``floor(n_c * train_fraction)`` training samples; the
    leftover quota ``round(N * train_fraction) - sum(floor(...))`` goes to the
    classes with the largest fractional remainders (ties in seeded random
    order). Every class keeps at least one sample on each side. Sample choice
    comes from a Philox stream keyed by ``seed``.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    train_idx, test_idx = stratified_indices(dataset.labels(), train_fraction, seed)
    return dataset.subset(train_idx), dataset.subset(test_idx)


def stratified_indices(labels: Sequence[int], train_fraction: float, seed: int):
    """Index-level version of :func:`stratified_split`."""
    labels = np.asarray(labels)
    rng = np.random.Generator(np.random.Philox(key=seed))
    classes, counts = np.unique(labels, return_counts=True)
    small = classes[counts < 2]
    if small.size:
        raise ClassTooSmall(f"class {small[0]} has fewer than 2 samples")
    exact = counts * train_fraction
    quota = np.floor(exact).astype(int)
    extra = int(np.floor(labels.size * train_fraction + 0.5)) - int(quota.sum())
    tiebreak = rng.permutation(classes.size)
    order = sorted(range(classes.size), key=lambda c: (-(exact[c] - quota[c]), tiebreak[c]))
    for c in order[:max(extra, 0)]:
        quota[c] += 1
    quota = np.clip(quota, 1, counts - 1)

    train_idx, test_idx = [], []
    for cls, n_train in zip(classes, quota):
        perm = rng.permutation(np.flatnonzero(labels == cls))
        train_idx.extend(perm[:n_train].tolist())
        test_idx.extend(perm[n_train:].tolist())
    return sorted(train_idx), sorted(test_idx)

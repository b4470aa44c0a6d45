"""Continuous posture monitoring over a live frame stream.

Each frame is assembled, pushed through an incremental window, classified
and scored against the OOD detector. The OOD flag is smoothed by a majority
over the last three frames; a smoothed-OOD frame is reported as ``unknown``.
An alert fires once the user has held unhealthy postures without a break
for ``alert_after_s`` seconds.
"""
from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np

from .boost import GbdtModel
from .core import PostureGuardError, PostureLabel, UwbFrame, frame_violations, validation_error
from .features import StreamWindow, assemble_frame_features, frames_feature_matrix, windowize
from .io import frame_from_record, read_header
from .ood import model_fingerprint, score_ood

log = logging.getLogger(__name__)

DEFAULT_UNHEALTHY = frozenset({
    PostureLabel.Hunch, PostureLabel.Tense, PostureLabel.LieOnTable, PostureLabel.LeanForward,
    PostureLabel.LateralLeanLeft, PostureLabel.LateralLeanRight,
})
# slack on the alert threshold so 0.2 s steps summing to 30 s still count as 30 s
ALERT_EPS = 1e-9


@dataclass(frozen=True)
class MonitorConfig:
    unhealthy_classes: frozenset = DEFAULT_UNHEALTHY
    alert_after_s: float = 30.0
    smoothing: int = 3

    def __post_init__(self):
        if self.alert_after_s < 0:
            raise ValueError("alert_after_s must be >= 0")
        if self.smoothing < 1:
            raise ValueError("smoothing must be >= 1")


@dataclass(frozen=True)
class TimelineRecord:
    timestamp_s: float
    predicted: PostureLabel       # Unknown when the smoothed OOD flag is set
    is_ood: bool                  # smoothed flag
    decision_value: float
    alert_active: bool
    raw_label: PostureLabel       # classifier output before OOD gating
    raw_ood: bool

    def to_record(self) -> dict:
        return {"timestamp_s": self.timestamp_s, "predicted": self.predicted.wire_name,
                "is_ood": self.is_ood, "decision_value": self.decision_value,
                "alert_active": self.alert_active, "raw_label": self.raw_label.wire_name,
                "raw_ood": self.raw_ood}


@dataclass
class SessionTimeline:
    records: list = field(default_factory=list)
    acks: list = field(default_factory=list)   # (timestamp_s, payload) alert acknowledgements

    def __len__(self):
        return len(self.records)

    def append(self, rec: TimelineRecord) -> None:
        if self.records and not rec.timestamp_s > self.records[-1].timestamp_s:
            raise ValueError("timeline timestamps must be strictly increasing")
        self.records.append(rec)

    def labels(self) -> np.ndarray:
        return np.array([int(r.predicted) for r in self.records], dtype=np.int64)

    def raw_labels(self) -> np.ndarray:
        return np.array([int(r.raw_label) for r in self.records], dtype=np.int64)

    def ood_flags(self) -> np.ndarray:
        return np.array([r.is_ood for r in self.records], dtype=bool)

    def write(self, fh: IO[str]) -> None:
        for r in self.records:
            fh.write(json.dumps(r.to_record(), sort_keys=True) + "\n")


class StreamState:
    """Per-stream monitor state: window buffer, recent decisions, alert accumulator."""

    def __init__(self, model: GbdtModel, config: MonitorConfig | None = None):
        self.model = model
        self.config = config or MonitorConfig()
        self.window = StreamWindow(model.tau)
        self.recent: deque = deque(maxlen=self.config.smoothing)
        self.unhealthy_since: float | None = None
        self.last_timestamp: float | None = None
        self._checksum = model_fingerprint(model) if model.ood is not None else None

    def step(self, frame: UwbFrame) -> TimelineRecord:
        if self.last_timestamp is not None and not frame.timestamp_s > self.last_timestamp:
            raise ValueError(f"timestamp {frame.timestamp_s} does not advance the stream")
        x = self.window.push(assemble_frame_features(frame))[None, :]
        label = PostureLabel(int(self.model.predict_label(x)[0]))
        if self.model.ood is not None:
            values, flags = score_ood(self.model.ood, self.model.leaf_indices(x),
                                      model_checksum=self._checksum)
            value, raw_ood = float(values[0]), bool(flags[0])
        else:
            value, raw_ood = float("inf"), False
        self.recent.append((label, raw_ood))
        votes = sum(flag for _, flag in self.recent)
        is_ood = 2 * votes > len(self.recent)

        t = float(frame.timestamp_s)
        if not is_ood and label in self.config.unhealthy_classes:
            if self.unhealthy_since is None:
                self.unhealthy_since = t
            alert = t - self.unhealthy_since >= self.config.alert_after_s - ALERT_EPS
        else:
            self.unhealthy_since = None
            alert = False
        self.last_timestamp = t
        return TimelineRecord(t, PostureLabel.Unknown if is_ood else label, is_ood, value, alert,
                              label, raw_ood)


def monitor(model: GbdtModel, frames: Iterable[UwbFrame],
            config: MonitorConfig | None = None) -> SessionTimeline:
    """Run the stream monitor over in-memory frames."""
    state = StreamState(model, config)
    timeline = SessionTimeline()
    for frame in frames:
        timeline.append(state.step(frame))
    return timeline


def batch_predict(model: GbdtModel, frames) -> np.ndarray:
    """Frame-wise labels of one contiguous session computed in batch.

    Uses the stream's feature path (no per-sample winsorizing) so that the
    result is comparable with :func:`monitor`.
    """
    x = windowize(frames_feature_matrix(frames), model.tau)
    return model.predict_label(x)


class StreamHeaderError(PostureGuardError):
    pass


def iter_stream(lines: Iterable[str], n_taps: int | None = None, accept_acks: bool = False,
                on_ack=None) -> Iterator[UwbFrame]:
    """Decode a line-delimited frame stream, skipping bad lines.

    The first non-blank line must be a dataset header; an unusable header
    raises :class:`StreamHeaderError`. Any later line that fails to parse
    or validate is logged and skipped. With ``accept_acks``, lines of the
    form ``{"ack": ...}`` are passed to ``on_ack`` instead of being treated
    as frames.
    """
    it = iter(lines)
    header = None
    lineno = 0
    for line in it:
        lineno += 1
        if line.strip():
            try:
                header = read_header(line)
            except PostureGuardError as exc:
                raise StreamHeaderError(str(exc)) from exc
            break
    if header is None:
        return
    n_taps = n_taps or header.get("n_taps")
    for line in it:
        lineno += 1
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict):
                raise TypeError("record is not an object")
            if "ack" in rec:
                if not accept_acks:
                    raise ValueError("acknowledgement marker while acknowledgements are disabled")
                if on_ack is not None:
                    on_ack(rec)
                continue
            frame = frame_from_record(rec)
            violations = frame_violations(frame, n_taps)
            if violations:
                raise validation_error(violations)
        except (ValueError, TypeError, KeyError, PostureGuardError) as exc:
            log.warning("line %d skipped: %s", lineno, exc)
            continue
        yield frame


def monitor_lines(model: GbdtModel, lines: Iterable[str], config: MonitorConfig | None = None,
                  accept_acks: bool = False, on_record=None) -> SessionTimeline:
    """Stream monitor over raw lines; fault tolerant past the header."""
    state = StreamState(model, config)
    timeline = SessionTimeline()

    def ack(rec):
        ts = state.last_timestamp
        timeline.acks.append((ts, rec.get("ack")))
        log.info("alert acknowledgement at t=%s: %r", ts, rec.get("ack"))

    for frame in iter_stream(lines, accept_acks=accept_acks, on_ack=ack):
        try:
            rec = state.step(frame)
        except ValueError as exc:
            log.warning("frame at t=%s skipped: %s", frame.timestamp_s, exc)
            continue
        timeline.append(rec)
        if on_record is not None:
            on_record(rec)
    return timeline

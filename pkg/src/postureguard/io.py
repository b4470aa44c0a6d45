"""JSON Lines dataset files.

Layout::

    {"schema_version": 1, "n_taps": 128}              <- header, line 1
    {"sample_id": ..., "subject_id": ..., "label": "Upright",
     "scenario_tags": [...], "timestamp_s": 0.0,
     "ranging": {"distance_cm": ..., ...},
     "rx1": {"nlos": false, ..., "cir_re": [...], "cir_im": [...]},
     "rx2": {...}}                                     <- one line per frame

Floats are written with ``repr`` precision so values survive a round trip
bit for bit.
"""
from __future__ import annotations

import json
import os
from collections import OrderedDict
from typing import IO, Iterable, Iterator

import numpy as np

from .core import (
    DEFAULT_INTERVAL_S,
    DEFAULT_N_TAPS,
    METRIC_FIELDS,
    RANGING_FIELDS,
    SCHEMA_VERSION,
    AntennaFrameMetrics,
    CirCapture,
    Dataset,
    InvariantViolation,
    PostureGuardError,
    PostureLabel,
    RangingRecord,
    RxId,
    Sample,
    UwbFrame,
    check_sample,
    frame_violations,
    validation_error,
)


class ParseError(PostureGuardError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class SchemaVersionMismatch(PostureGuardError):
    pass


def header_record(n_taps: int = DEFAULT_N_TAPS) -> dict:
    return {"schema_version": SCHEMA_VERSION, "n_taps": n_taps}


def frame_to_record(frame: UwbFrame, sample: Sample | None = None) -> dict:
    rec: dict = {}
    if sample is not None:
        rec["sample_id"] = sample.sample_id
        rec["subject_id"] = sample.subject_id
        rec["label"] = sample.label.wire_name
        rec["scenario_tags"] = sorted(sample.scenario_tags)
    rec["timestamp_s"] = float(frame.timestamp_s)
    r = frame.ranging
    rec["ranging"] = {
        "distance_cm": float(r.distance_cm),
        "azimuth_deg": float(r.azimuth_deg),
        "elevation_deg": float(r.elevation_deg),
        "aoa_fom": int(r.aoa_fom),
        "pdoa_deg": float(r.pdoa_deg),
    }
    for m, cap in zip(frame.antenna_metrics, frame.cir):
        block = {}
        for name in METRIC_FIELDS:
            v = getattr(m, name)
            if name == "nlos":
                v = bool(v)
            elif name in ("cir_main_power", "cir_first_path_power"):
                v = int(v)
            else:
                v = float(v)
            block[name] = v
        block["cir_re"] = cap.taps.real.tolist()
        block["cir_im"] = cap.taps.imag.tolist()
        rec[cap.rx_id.value] = block
    return rec


def frame_from_record(rec: dict) -> UwbFrame:
    """Build a frame from a decoded record. Raises ``KeyError``/``TypeError``
    on structurally broken input; range checks are left to validation."""
    rg = rec["ranging"]
    ranging = RangingRecord(**{k: rg[k] for k in RANGING_FIELDS})
    metrics, caps = [], []
    for rx in RxId:
        block = rec[rx.value]
        metrics.append(AntennaFrameMetrics(**{k: block[k] for k in METRIC_FIELDS}))
        re = np.asarray(block["cir_re"], dtype=np.float64)
        im = np.asarray(block["cir_im"], dtype=np.float64)
        if re.ndim != 1 or re.shape != im.shape:
            raise TypeError(f"{rx.value}: cir_re/cir_im must be equal-length arrays")
        caps.append(CirCapture(re + 1j * im, rx))
    ts = rec["timestamp_s"]
    if isinstance(ts, bool) or not isinstance(ts, (int, float)):
        raise TypeError("timestamp_s must be a number")
    return UwbFrame(float(ts), ranging, tuple(metrics), tuple(caps))


def _parse_header(line: str, lineno: int = 1) -> dict:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(lineno, f"malformed header: {exc.msg}") from None
    if not isinstance(header, dict) or "schema_version" not in header:
        raise ParseError(lineno, "first line must be a header object with schema_version")
    if header["schema_version"] != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"file schema_version {header['schema_version']!r}, expected {SCHEMA_VERSION}")
    n_taps = header.get("n_taps", DEFAULT_N_TAPS)
    if isinstance(n_taps, bool) or not isinstance(n_taps, int) or n_taps < 1:
        raise ParseError(lineno, f"invalid n_taps {n_taps!r}")
    return header


def read_header(line: str) -> dict:
    return _parse_header(line)


def load_dataset(path: str | os.PathLike, interval_s: float | None = DEFAULT_INTERVAL_S) -> Dataset:
    """Read and validate a dataset file.

    Samples come back ordered by ``sample_id`` and frames by timestamp.
    ``interval_s`` is the nominal frame spacing checked per sample
    (``None`` disables the spacing check).
    """
    with open(path, encoding="utf-8") as fh:
        return read_dataset(fh, interval_s=interval_s)


def read_dataset(fh: IO[str], interval_s: float | None = DEFAULT_INTERVAL_S) -> Dataset:
    n_taps = DEFAULT_N_TAPS
    groups: "OrderedDict[str, dict]" = OrderedDict()
    header_seen = False
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        if not header_seen:
            n_taps = _parse_header(line, lineno)["n_taps"]
            header_seen = True
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, exc.msg) from None
        if not isinstance(rec, dict):
            raise ParseError(lineno, "frame record must be an object")
        try:
            frame = frame_from_record(rec)
            sid, subj = rec["sample_id"], rec["subject_id"]
            label = PostureLabel.parse(rec["label"])
            tags = frozenset(rec.get("scenario_tags", ()))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ParseError(lineno, f"bad frame record: {exc!r}") from None
        violations = frame_violations(frame, n_taps)
        if violations:
            raise validation_error(violations, f"line {lineno}")
        g = groups.get(sid)
        if g is None:
            groups[sid] = {"subject_id": subj, "label": label, "tags": tags, "frames": [frame]}
        else:
            if (g["subject_id"], g["label"], g["tags"]) != (subj, label, tags):
                raise InvariantViolation(
                    f"line {lineno}: sample {sid} frames disagree on subject/label/tags")
            g["frames"].append(frame)

    samples = []
    for sid in sorted(groups):
        g = groups[sid]
        frames = sorted(g["frames"], key=lambda f: f.timestamp_s)
        s = Sample(sid, g["subject_id"], g["label"], tuple(frames), g["tags"])
        check_sample(s, interval_s)
        samples.append(s)
    return Dataset(tuple(samples), SCHEMA_VERSION, n_taps)


def iter_dataset_lines(dataset: Dataset) -> Iterator[str]:
    yield json.dumps(header_record(dataset.n_taps))
    for s in dataset.samples:
        for f in s.frames:
            yield json.dumps(frame_to_record(f, s))


def save_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_lines(fh, iter_dataset_lines(dataset))


def write_lines(fh: IO[str], lines: Iterable[str]) -> None:
    for line in lines:
        fh.write(line)
        fh.write("\n")

import json
import math

import numpy as np
import pytest

from postureguard.boost import BoostParams, GbdtModel
from postureguard.core import PostureLabel
from postureguard.features import N_FRAME_FEATURES
from postureguard.io import frame_to_record, header_record
from postureguard.ood import OodDetector, model_fingerprint
from postureguard.pipeline import PipelineConfig, run_pipeline
from postureguard.stream import (
    MonitorConfig, SessionTimeline, StreamHeaderError, batch_predict, monitor, monitor_lines,
)
from postureguard.synth import MONITORING_SEQUENCE, SimulatorConfig, synth_ood_session


@pytest.fixture(scope="module")
def small_model(tiny_dataset):
    cfg = PipelineConfig(tau=3, seed=1, params=BoostParams(max_rounds=15, num_leaves=8, min_samples_leaf=5))
    return run_pipeline(tiny_dataset, cfg, keep_test=False).model


@pytest.fixture(scope="module")
def session():
    return synth_ood_session(SimulatorConfig(seed=3, subjects=2), MONITORING_SEQUENCE[:3])


def constant_model(label, tau=1, ood=None):
    """A tree-less model that always predicts ``label``."""
    classes = [int(PostureLabel.Upright), int(label)] if label != PostureLabel.Upright else [1, 2]
    base = [0.0, 1.0] if label != PostureLabel.Upright else [1.0, 0.0]
    return GbdtModel(classes, base, [], BoostParams(), N_FRAME_FEATURES * (2 * tau - 1), tau=tau, ood=ood)


def test_alert_after_thirty_seconds_of_hunch():
    frames = synth_ood_session(SimulatorConfig(), [(PostureLabel.Hunch, 35.0)]).frames
    tl = monitor(constant_model(PostureLabel.Hunch), frames, MonitorConfig(alert_after_s=30.0))
    times = np.array([r.timestamp_s for r in tl.records])
    alerts = np.array([r.alert_active for r in tl.records])
    assert len(tl) == 175
    assert not alerts[times < 30.0 - 1e-6].any()
    assert alerts[times >= 30.0 - 1e-6].all() and alerts.sum() == 25


def test_healthy_postures_never_alert():
    frames = synth_ood_session(SimulatorConfig(), [(PostureLabel.Upright, 40.0)]).frames
    tl = monitor(constant_model(PostureLabel.Upright), frames, MonitorConfig(alert_after_s=5.0))
    assert not any(r.alert_active for r in tl.records)


def _detector(model, rho):
    return OodDetector(np.zeros((1, max(model.n_trees, 1)), np.int32), np.ones(1), rho, 0.05, 4.0,
                       model_fingerprint(model), 10)


def test_smoothed_ood_suppresses_labels_and_alerts(small_model, session):
    flagged = GbdtModel(small_model.classes, small_model.base_score, small_model.trees, small_model.params,
                        small_model.n_features, small_model.bin_edges, small_model.layout_hash, small_model.tau)
    flagged.ood = _detector(flagged, rho=5.0)  # every decision value is negative
    tl = monitor(flagged, session.frames, MonitorConfig(alert_after_s=0.0))
    assert all(r.raw_ood for r in tl.records)
    assert tl.ood_flags().all()
    assert all(r.predicted == PostureLabel.Unknown for r in tl.records)
    assert not any(r.alert_active for r in tl.records)


def test_ood_flag_is_a_three_frame_majority(small_model, session, monkeypatch):
    import postureguard.stream as stream_mod
    raw = iter([True, False, True, False, False, True, True, False, False, False])

    def fake_score(detector, emb, model_checksum=None):
        return np.array([-1.0]), np.array([next(raw)])
    monkeypatch.setattr(stream_mod, "score_ood", fake_score)
    model = constant_model(PostureLabel.Hunch, ood=object())
    model._fingerprint = "x"
    tl = monitor(model, session.frames[:10], MonitorConfig(alert_after_s=0.0))
    # windows: [T] [T,F] [T,F,T] [F,T,F] [T,F,F] [F,F,T] [F,T,T] [T,T,F] [T,F,F] [F,F,F]
    assert tl.ood_flags().tolist() == [True, False, True, False, False, False, True, True, False, False]
    assert [r.alert_active for r in tl.records] == [not f for f in tl.ood_flags()]


def test_stream_matches_batch(small_model, session):
    tl = monitor(small_model, session.frames)
    assert np.array_equal(tl.raw_labels(), batch_predict(small_model, session.frames))


def _lines(session):
    yield json.dumps(header_record())
    for f in session.frames:
        yield json.dumps(frame_to_record(f))


def test_bad_lines_are_skipped(small_model, session, caplog):
    lines = list(_lines(session))
    broken = json.loads(lines[5])
    broken["ranging"]["aoa_fom"] = 250
    noisy = (lines[:3] + ["{not json", "[1, 2]", "", json.dumps(broken)] + lines[3:5] + lines[6:9]
             + [lines[8]] + lines[9:])  # lines[8] repeats a timestamp
    tl = monitor_lines(small_model, noisy)
    kept = [f for i, f in enumerate(session.frames) if i != 4]
    assert len(tl) == len(kept)
    assert np.array_equal(tl.raw_labels(), monitor(small_model, kept).raw_labels())
    assert sum("skipped" in r.message for r in caplog.records) >= 4


def test_acks_are_recorded_only_when_enabled(small_model, session):
    lines = list(_lines(session))[:6]
    lines.insert(3, json.dumps({"ack": "user-ok"}))
    tl = monitor_lines(small_model, lines, accept_acks=True)
    assert tl.acks == [(session.frames[1].timestamp_s, "user-ok")] and len(tl) == 5
    tl = monitor_lines(small_model, lines)
    assert tl.acks == [] and len(tl) == 5


def test_bad_header_raises(small_model):
    with pytest.raises(StreamHeaderError):
        monitor_lines(small_model, ['{"schema_version": 99}'])


def test_timeline_io(small_model, session, tmp_path):
    tl = monitor(small_model, session.frames[:10])
    with open(tmp_path / "t.jsonl", "w") as fh:
        tl.write(fh)
    rows = [json.loads(l) for l in (tmp_path / "t.jsonl").read_text().splitlines()]
    assert len(rows) == 10 and rows[0]["predicted"] == tl.records[0].predicted.wire_name
    assert all(math.isfinite(r["decision_value"]) for r in rows)
    with pytest.raises(ValueError):
        tl.append(tl.records[0])
    assert isinstance(SessionTimeline(), SessionTimeline)

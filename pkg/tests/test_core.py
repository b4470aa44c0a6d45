import dataclasses
import math

import numpy as np
import pytest

from postureguard.core import (
    ClassTooSmall,
    Dataset,
    InvariantViolation,
    NonFiniteValue,
    PostureLabel,
    RangeViolation,
    Sample,
    TapCountMismatch,
    check_sample,
    stratified_indices,
    stratified_split,
    validate_frame,
)
from postureguard.synth import PROFILES, draw_subject, make_rng, synth_frame


@pytest.fixture
def frame():
    return synth_frame(PROFILES[PostureLabel.Upright], draw_subject(1, 0), 0.0, make_rng(1, 0))


def _with_ranging(frame, **kw):
    return dataclasses.replace(frame, ranging=dataclasses.replace(frame.ranging, **kw))


def _with_metric(frame, rx, **kw):
    ms = list(frame.antenna_metrics)
    ms[rx] = dataclasses.replace(ms[rx], **kw)
    return dataclasses.replace(frame, antenna_metrics=tuple(ms))


def _with_taps(frame, rx, taps):
    caps = list(frame.cir)
    caps[rx] = dataclasses.replace(caps[rx], taps=taps)
    return dataclasses.replace(frame, cir=tuple(caps))


def test_label_ids_follow_confusion_matrix_order():
    names = [p.name for p in PostureLabel.classes()]
    assert names == ["Idle", "Upright", "LeanForward", "LeanBack", "LateralLeanLeft", "CrossLegLeft",
                     "LateralLeanRight", "CrossLegRight", "Hunch", "Tense", "LieOnTable", "RotateHead",
                     "VertLegShakeLeft", "VertLegShakeRight", "HorizLegShake", "TapFinger", "Stretch",
                     "Stand", "Walk"]
    assert [int(p) for p in PostureLabel.classes()] == list(range(19))
    assert PostureLabel.Unknown not in PostureLabel.classes()
    assert PostureLabel.parse("unknown") is PostureLabel.Unknown
    assert PostureLabel.parse("Hunch") is PostureLabel.Hunch
    with pytest.raises(ValueError):
        PostureLabel.parse("Slouch")


def test_fom_boundary_accepted(frame):
    f = _with_ranging(frame, aoa_fom=100)
    assert validate_frame(f) is f


def test_fom_past_boundary_rejected(frame):
    with pytest.raises(RangeViolation) as exc:
        validate_frame(_with_ranging(frame, aoa_fom=101))
    assert [v.field for v in exc.value.violations] == ["ranging.aoa_fom"]


def test_nan_tap_rejected(frame):
    taps = frame.cir[0].taps.copy()
    taps[5] = complex(np.nan, 0.0)
    with pytest.raises(NonFiniteValue):
        validate_frame(_with_taps(frame, 0, taps))


def test_tap_count_mismatch(frame):
    with pytest.raises(TapCountMismatch):
        validate_frame(frame, n_taps=64)


def test_all_violations_enumerated(frame):
    bad = _with_ranging(frame, azimuth_deg=181.0, elevation_deg=-91.0)
    bad = _with_metric(bad, 1, first_path_index_ns=9.0, main_path_index_ns=3.0, noise_variance=-1.0)
    with pytest.raises(RangeViolation) as exc:
        validate_frame(bad)
    fields = {v.field for v in exc.value.violations}
    assert fields == {"ranging.azimuth_deg", "ranging.elevation_deg", "rx2.first_path_index_ns",
                      "rx2.noise_variance"}


def test_mixed_violations_use_base_class(frame):
    bad = _with_ranging(frame, distance_cm=math.inf, aoa_fom=-1)
    with pytest.raises(Exception) as exc:
        validate_frame(bad)
    assert exc.value.kinds == {"NonFiniteValue", "RangeViolation"}


def test_validation_is_pure(frame):
    bad = _with_ranging(frame, pdoa_deg=200.0)
    msgs = []
    for _ in range(2):
        with pytest.raises(RangeViolation) as exc:
            validate_frame(bad)
        msgs.append(str(exc.value))
    assert msgs[0] == msgs[1]


def test_check_sample_spacing(frame):
    frames = [dataclasses.replace(frame, timestamp_s=t) for t in (0.0, 0.2, 0.4)]
    check_sample(Sample("a", "s", PostureLabel.Upright, frames))
    jittered = [dataclasses.replace(frame, timestamp_s=t) for t in (0.0, 0.29, 0.4)]
    check_sample(Sample("a", "s", PostureLabel.Upright, jittered))
    gap = [dataclasses.replace(frame, timestamp_s=t) for t in (0.0, 0.2, 0.6)]
    with pytest.raises(InvariantViolation):
        check_sample(Sample("a", "s", PostureLabel.Upright, gap))
    check_sample(Sample("a", "s", PostureLabel.Upright, gap), interval_s=None)
    backwards = [dataclasses.replace(frame, timestamp_s=t) for t in (0.0, 0.2, 0.2)]
    with pytest.raises(InvariantViolation):
        check_sample(Sample("a", "s", PostureLabel.Upright, backwards))
    with pytest.raises(InvariantViolation):
        check_sample(Sample("a", "s", PostureLabel.Upright, []))


def _labels(n_classes, per_class):
    return np.repeat(np.arange(n_classes), per_class)


def test_split_divisible_counts():
    tr, te = stratified_indices(_labels(19, 10), 0.6, seed=0)
    y = _labels(19, 10)
    assert np.all(np.bincount(y[tr]) == 6)
    assert np.all(np.bincount(y[te]) == 4)


def test_split_indivisible_counts():
    y = _labels(19, 7)
    tr, te = stratified_indices(y, 0.6, seed=5)
    per_class = np.bincount(y[tr])
    assert set(per_class.tolist()) <= {4, 5}
    assert abs(len(tr) - 0.6 * y.size) <= 1
    # each class within one sample of its own proportional share
    assert np.all(np.abs(per_class - 0.6 * 7) <= 1)


def test_split_deterministic_and_disjoint():
    y = np.random.default_rng(0).integers(0, 5, 60)
    a = stratified_indices(y, 0.6, seed=11)
    b = stratified_indices(y, 0.6, seed=11)
    assert a == b
    tr, te = a
    assert not set(tr) & set(te)
    assert sorted(tr + te) == list(range(60))


def test_split_dataset_by_sample(tiny_dataset):
    train, test = stratified_split(tiny_dataset, 0.6, seed=2)
    ids_tr = {s.sample_id for s in train.samples}
    ids_te = {s.sample_id for s in test.samples}
    assert not ids_tr & ids_te
    assert ids_tr | ids_te == {s.sample_id for s in tiny_dataset.samples}
    assert isinstance(train, Dataset)


def test_split_rejects_singleton_class():
    with pytest.raises(ClassTooSmall):
        stratified_indices([0, 0, 1], 0.6, seed=0)

"""Continuous monitoring with out-of-distribution gating and alerts.

Trains a windowed model with its leaf-embedding detector, then replays a
session that walks through five postures and ends in a posture the model
has never seen. The monitor prints one line per two seconds of stream: the
reported label (``unknown`` when the detector fires) and whether the
bad-posture alert is active. The alert threshold is shortened to 10 s so
the 20 s hunched segment at the start triggers it.

The reduced default dataset trains a visibly weaker model (expect confusion
between Upright and TapFinger and some spurious OOD frames); ``--full``
trains on the acceptance dataset and takes about 15 minutes on one core.

    python3 demos/03_live_monitoring.py
"""
import argparse
import itertools

import numpy as np

from postureguard.core import PostureLabel
from postureguard.pipeline import PipelineConfig, run_pipeline
from postureguard.stream import MonitorConfig, monitor
from postureguard.synth import MONITORING_SEQUENCE, SimulatorConfig, synth_dataset, synth_ood_session


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--full", action="store_true", help="train on the default 10-subject dataset")
    ap.add_argument("--alert-after", type=float, default=10.0)
    args = ap.parse_args()
    sim = SimulatorConfig() if args.full else SimulatorConfig(subjects=3, samples_per_class=4)

    model = run_pipeline(synth_dataset(sim), PipelineConfig(tau=5, seed=sim.seed), keep_test=False).model
    print(f"model: {model.n_rounds} rounds x {model.n_classes} classes, "
          f"detector with {len(model.ood.alphas)} support vectors")

    sequence = list(MONITORING_SEQUENCE) + [(PostureLabel.Unknown, 20.0)]
    session = synth_ood_session(sim, sequence)
    timeline = monitor(model, session.frames, MonitorConfig(alert_after_s=args.alert_after))

    for rec, truth in itertools.islice(zip(timeline.records, session.labels), 0, None, 10):
        flag = "OOD  " if rec.is_ood else "     "
        alert = "ALERT" if rec.alert_active else ""
        print(f"t={rec.timestamp_s:6.1f}s  truth {truth.wire_name:<18} -> {rec.predicted.wire_name:<18} {flag}{alert}")

    truth = np.array([int(l) for l in session.labels])
    pred = timeline.labels()
    known = truth != int(PostureLabel.Unknown)
    print(f"\nframe accuracy on known postures: {np.mean(pred[known] == truth[known]):.3f}")
    print(f"unknown frames flagged: {timeline.ood_flags()[~known].mean():.3f}")


if __name__ == "__main__":
    main()

"""Frame-wise versus windowed classification on synthetic UWB data.

Simulates a posture dataset, trains one booster on single frames (tau=1)
and one on five-frame windows (tau=5) over the same sample split, then
compares their per-class F1. Oscillating postures (head rotation, leg
shaking, finger tapping) are where the window pays off: a single frame
only sees one phase of the motion.

    python3 demos/01_temporal_windows.py            # 3 subjects, a few minutes
    python3 demos/01_temporal_windows.py --full     # the default 10-subject dataset
"""
import argparse
import time

from postureguard.core import DYNAMIC_POSTURES
from postureguard.evaluation import compare_temporal
from postureguard.pipeline import PipelineConfig, PreparedDataset
from postureguard.synth import SimulatorConfig, synth_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--full", action="store_true", help="use 10 subjects x 9 samples per class")
    args = ap.parse_args()
    sim = SimulatorConfig() if args.full else SimulatorConfig(subjects=3, samples_per_class=4)

    t0 = time.perf_counter()
    dataset = synth_dataset(sim)
    print(f"simulated {len(dataset.samples)} samples / {dataset.n_frames} frames "
          f"in {time.perf_counter() - t0:.1f}s")
    prep = PreparedDataset(dataset)
    del dataset

    cmp = compare_temporal(prep, 1, 5, PipelineConfig(seed=sim.seed))
    for run in (cmp.baseline, cmp.ours):
        m = run.metrics
        print(f"tau={run.tau}: weighted F1 {m.weighted['f1']:.4f}, accuracy {m.accuracy:.4f}, "
              f"{run.best_round} rounds, {run.seconds:.0f}s")

    dynamic = {p.wire_name for p in DYNAMIC_POSTURES}
    print("\nper-class F1 (tau=1 -> tau=5)")
    for name, before, after in zip(cmp.ours.metrics.class_names, cmp.baseline.metrics.f1, cmp.ours.metrics.f1):
        tag = "dynamic" if name in dynamic else ""
        print(f"  {name:<20} {before:.3f} -> {after:.3f}  {tag}")
    print(f"\nmean F1 gain: dynamic {cmp.dynamic_delta:+.4f}, static {cmp.static_delta:+.4f}")


if __name__ == "__main__":
    main()

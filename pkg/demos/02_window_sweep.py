"""How accuracy moves with the window size.

Trains one model per window size on a fixed split and writes the table as
CSV and JSON (ready for plotting) into ``--out-dir``.

    python3 demos/02_window_sweep.py --taus 1,3,5,7,9
"""
import argparse

from postureguard.evaluation import sweep_window, write_sweep
from postureguard.pipeline import PipelineConfig, PreparedDataset
from postureguard.synth import SimulatorConfig, synth_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--taus", default="1,3,5,7,9")
    ap.add_argument("--full", action="store_true", help="use the default 10-subject dataset")
    ap.add_argument("--out-dir", default="sweep-out")
    args = ap.parse_args()
    sim = SimulatorConfig() if args.full else SimulatorConfig(subjects=3, samples_per_class=4)
    prep = PreparedDataset(synth_dataset(sim))

    rows = sweep_window(prep, [int(t) for t in args.taus.split(",")], PipelineConfig(seed=sim.seed))
    print("tau  accuracy  weighted F1  rounds  seconds")
    for r in rows:
        print(f"{r.tau:>3}  {r.accuracy:.4f}    {r.weighted_f1:.4f}      {r.best_round:>4}  {r.seconds:7.1f}")
    csv_path, json_path = write_sweep(rows, args.out_dir, sim.seed)
    print(f"wrote {csv_path} and {json_path}")


if __name__ == "__main__":
    main()

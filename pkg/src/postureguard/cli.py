"""``postureguard`` command line.

Exit codes: 0 success, 1 usage error, 2 data error, 3 model error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields, replace

import numpy as np

from . import io as dsio
from .boost import BoostParams, LayoutMismatch
from .boost.serialize import ModelFileError, load_model, save_model
from .core import FrameValidationError, PostureGuardError, PostureLabel
from .evaluation import compare_temporal, evaluate_model, sweep_window, write_report, write_sweep
from .features import layout_hash, windowed_feature_names
from .ood import ModelBindingMismatch, OodError
from .pipeline import PipelineConfig, PreparedDataset, WindowedData, run_pipeline
from .stream import MonitorConfig, StreamHeaderError, monitor_lines
from .synth import ScenarioPerturbation, SimulatorConfig, synth_dataset

log = logging.getLogger("postureguard")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _tau_list(text):
    try:
        taus = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not taus or min(taus) < 1:
        raise argparse.ArgumentTypeError("window sizes must be >= 1")
    return taus


def _label_list(text):
    try:
        return frozenset(PostureLabel.parse(t.strip()) for t in text.split(",") if t.strip())
    except (KeyError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# ---------------------------------------------------------------------------
# simulate

_PERTURBATION_FLAGS = [f.name for f in fields(ScenarioPerturbation)]


def cmd_simulate(args) -> int:
    knobs = {name: getattr(args, name) for name in _PERTURBATION_FLAGS}
    try:
        config = SimulatorConfig(seed=args.seed, subjects=args.subjects,
                                 samples_per_class=args.samples_per_class,
                                 frames_per_sample=args.frames,
                                 perturbation=ScenarioPerturbation(**knobs))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ds = synth_dataset(config)
    dsio.save_dataset(ds, args.out)
    print(f"wrote {len(ds.samples)} samples ({ds.n_frames} frames) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train

def _pipeline_config(args) -> PipelineConfig:
    try:
        params = BoostParams(num_leaves=args.num_leaves, learning_rate=args.learning_rate,
                             feature_fraction=args.feature_fraction, max_rounds=args.max_rounds,
                             early_stop_patience=args.patience, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return PipelineConfig(tau=args.tau, seed=args.seed, params=params, fit_ood=not args.no_ood,
                          nu=args.nu, gamma=args.gamma)


def _save_windowed(data: WindowedData, path) -> None:
    np.savez(path, X=data.X, y=data.y, groups=data.groups, tau=data.tau,
             layout_hash=data.layout_hash)


def _load_windowed(path) -> WindowedData:
    try:
        with np.load(path, allow_pickle=False) as z:
            return WindowedData(z["X"], z["y"], z["groups"], int(z["tau"]), str(z["layout_hash"]))
    except (OSError, KeyError, ValueError) as exc:
        raise dsio.ParseError(0, f"unreadable feature file {path}: {exc}") from exc


def cmd_train(args) -> int:
    config = _pipeline_config(args)
    ds = dsio.load_dataset(args.dataset)
    res = run_pipeline(ds, config)
    cm, report = evaluate_model(res.model, res.test)
    digest = save_model(res.model, args.model)
    out = {"train": res.report.to_dict(), "test": report.to_dict(), "model_checksum": digest,
           "tau": config.tau, "seed": config.seed,
           "train_samples": [ds.samples[i].sample_id for i in res.train_idx],
           "test_samples": [ds.samples[i].sample_id for i in res.test_idx]}
    report_path = args.report or os.path.splitext(args.model)[0] + ".report.json"
    with open(report_path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
    if args.export_test:
        _save_windowed(res.test, args.export_test)
    print(f"rounds {res.report.best_round} (stopped at {res.report.stopped_round}); "
          f"test weighted F1 {report.weighted['f1']:.4f}, accuracy {report.accuracy:.4f}")
    print(f"model {args.model} checksum {digest}; report {report_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate

def cmd_evaluate(args) -> int:
    if args.sweep or args.compare_tau:
        if not args.dataset:
            raise UsageError("--sweep and --compare-tau need --dataset")
        ds = dsio.load_dataset(args.dataset)
        prep = PreparedDataset(ds)
        config = PipelineConfig(seed=args.seed)
        if args.model:
            m = load_model(args.model)
            config = replace(config, params=replace(m.params, seed=args.seed))
        if args.compare_tau:
            base, ours = args.compare_tau
            cmp = compare_temporal(prep, base, ours, config)
            for run in (cmp.baseline, cmp.ours):
                write_report(run.confusion, run.metrics, args.out_dir, args.seed, run.tau)
                print(f"tau={run.tau}: weighted F1 {run.metrics.weighted['f1']:.4f} "
                      f"accuracy {run.metrics.accuracy:.4f}")
            print(f"mean F1 delta: dynamic {cmp.dynamic_delta:+.4f}, static {cmp.static_delta:+.4f}")
        if args.sweep:
            rows = sweep_window(prep, args.sweep, config)
            csv_path, _ = write_sweep(rows, args.out_dir, args.seed)
            print("tau  accuracy  weighted_f1")
            for r in rows:
                print(f"{r.tau:>3}  {r.accuracy:.4f}    {r.weighted_f1:.4f}")
            print(f"table {csv_path}")
        return EXIT_OK

    if not args.model:
        raise UsageError("evaluate needs --model (or --sweep/--compare-tau with --dataset)")
    model = load_model(args.model)
    if args.features:
        data = _load_windowed(args.features)
    elif args.dataset:
        prep = PreparedDataset(dsio.load_dataset(args.dataset))
        data = prep.windowed(model.tau, range(len(prep.frame_features)))
    else:
        raise UsageError("evaluate needs --dataset or --features")
    if data.layout_hash != model.layout_hash:
        raise LayoutMismatch(
            f"features were windowed with tau={data.tau} (layout {data.layout_hash}) but the model "
            f"expects tau={model.tau} (layout {model.layout_hash}); retrain the model or re-export "
            "the features with export-schema")
    cm, report = evaluate_model(model, data)
    paths = write_report(cm, report, args.out_dir, model.params.seed, model.tau)
    print(f"weighted F1 {report.weighted['f1']:.4f}, accuracy {report.accuracy:.4f}")
    print(f"wrote {paths[0]} and {paths[1]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict

def cmd_predict(args) -> int:
    model = load_model(args.model)
    ds = dsio.load_dataset(args.dataset)
    prep = PreparedDataset(ds)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write("sample_id,timestamp_s,predicted\n")
        for i, sample in enumerate(ds.samples):
            data = prep.windowed(model.tau, [i])
            pred = model.predict_label(data.X, data.layout_hash)
            for frame, p in zip(sample.frames, pred):
                out.write(f"{sample.sample_id},{frame.timestamp_s!r},{PostureLabel(int(p)).wire_name}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# stream

def cmd_stream(args) -> int:
    model = load_model(args.model)
    config = MonitorConfig(
        unhealthy_classes=args.unhealthy if args.unhealthy is not None else MonitorConfig().unhealthy_classes,
        alert_after_s=args.alert_after)
    src = sys.stdin if args.input in (None, "-") else open(args.input)

    def live(rec):
        if not args.quiet:
            flag = " OOD" if rec.is_ood else ""
            alert = " ALERT" if rec.alert_active else ""
            print(f"{rec.timestamp_s:9.2f}  {rec.predicted.wire_name:<18}{flag}{alert}", flush=True)

    try:
        timeline = monitor_lines(model, src, config, accept_acks=args.accept_acks, on_record=live)
    finally:
        if src is not sys.stdin:
            src.close()
    if args.timeline:
        with open(args.timeline, "w") as fh:
            timeline.write(fh)
    print(f"{len(timeline)} frames, {int(timeline.ood_flags().sum())} flagged OOD, "
          f"{len(timeline.acks)} acknowledgements", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# export-schema

def cmd_export_schema(args) -> int:
    schema = {"tau": args.tau, "layout_hash": layout_hash(args.tau),
              "feature_names": windowed_feature_names(args.tau)}
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(schema, fh, indent=2)
    else:
        json.dump(schema, sys.stdout, indent=2)
        sys.stdout.write("\n")
    if args.dataset:
        if not args.features_out:
            raise UsageError("--dataset needs --features-out")
        prep = PreparedDataset(dsio.load_dataset(args.dataset))
        _save_windowed(prep.windowed(args.tau, range(len(prep.frame_features))), args.features_out)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="postureguard", description="UWB posture classification and monitoring")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="write a synthetic dataset")
    s.add_argument("--seed", type=_nonneg_int, default=7)
    s.add_argument("--subjects", type=_positive_int, default=10)
    s.add_argument("--samples-per-class", type=_positive_int, default=9)
    s.add_argument("--frames", type=_positive_int, default=100)
    s.add_argument("--out", required=True)
    defaults = ScenarioPerturbation()
    for name in _PERTURBATION_FLAGS:
        s.add_argument("--" + name.replace("_", "-"), dest=name, type=float,
                       default=getattr(defaults, name))
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train a model on a dataset file")
    t.add_argument("dataset")
    t.add_argument("--model", required=True, help="output model file")
    t.add_argument("--report", help="output report (default: next to the model)")
    d = BoostParams()
    t.add_argument("--tau", type=_positive_int, default=5)
    t.add_argument("--num-leaves", type=int, default=d.num_leaves)
    t.add_argument("--learning-rate", type=float, default=d.learning_rate)
    t.add_argument("--feature-fraction", type=float, default=d.feature_fraction)
    t.add_argument("--max-rounds", type=_nonneg_int, default=d.max_rounds)
    t.add_argument("--patience", type=_positive_int, default=d.early_stop_patience)
    t.add_argument("--seed", type=_nonneg_int, default=0)
    t.add_argument("--no-ood", action="store_true", help="skip fitting the OOD detector")
    t.add_argument("--nu", type=float, default=0.05)
    t.add_argument("--gamma", type=float, default=4.0)
    t.add_argument("--export-test", help="also write the windowed test partition (.npz)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="metrics, window comparison and window sweep")
    e.add_argument("--model")
    e.add_argument("--dataset")
    e.add_argument("--features", help="windowed feature file (.npz)")
    e.add_argument("--out-dir", default=".")
    e.add_argument("--seed", type=_nonneg_int, default=0)
    e.add_argument("--compare-tau", type=_tau_list, metavar="BASE,OURS")
    e.add_argument("--sweep", type=_tau_list, metavar="T1,T2,...")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("predict", help="per-frame labels for a dataset file")
    r.add_argument("--model", required=True)
    r.add_argument("--dataset", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_predict)

    m = sub.add_parser("stream", help="monitor a live frame stream")
    m.add_argument("--model", required=True)
    m.add_argument("--input", help="frame stream file (default: standard input)")
    m.add_argument("--timeline", help="write the session timeline here")
    m.add_argument("--alert-after", type=float, default=30.0)
    m.add_argument("--unhealthy", type=_label_list, help="comma-separated unhealthy postures")
    m.add_argument("--accept-acks", action="store_true",
                   help='log {"ack": ...} lines as alert acknowledgements')
    m.add_argument("--quiet", action="store_true")
    m.set_defaults(func=cmd_stream)

    x = sub.add_parser("export-schema", help="write the windowed feature layout")
    x.add_argument("--tau", type=_positive_int, default=5)
    x.add_argument("--out")
    x.add_argument("--dataset", help="also window this dataset ...")
    x.add_argument("--features-out", help="... into this feature file (.npz)")
    x.set_defaults(func=cmd_export_schema)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "compare_tau", None) and len(args.compare_tau) != 2:
        parser.error("--compare-tau takes exactly two window sizes")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"postureguard: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelFileError, LayoutMismatch, ModelBindingMismatch, OodError) as exc:
        print(f"postureguard: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (StreamHeaderError, FrameValidationError, PostureGuardError, OSError) as exc:
        print(f"postureguard: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""Classification metrics, the temporal-window comparison and the window sweep."""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .boost import GbdtModel
from .core import DYNAMIC_POSTURES, PostureGuardError, PostureLabel, STATIC_POSTURES
from .pipeline import PipelineConfig, PreparedDataset, WindowedData, run_pipeline

log = logging.getLogger(__name__)


class LengthMismatch(PostureGuardError):
    pass


@dataclass
class ConfusionMatrix:
    counts: np.ndarray              # (K, K) int64, rows = true, columns = predicted
    class_names: list[str]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\pred"] + self.class_names)
            for name, row in zip(self.class_names, self.counts):
                w.writerow([name] + [int(v) for v in row])


@dataclass
class MetricsReport:
    class_names: list[str]
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    macro: dict
    weighted: dict
    precision_undefined: np.ndarray   # no predictions for the class; precision reported as 0
    recall_undefined: np.ndarray      # no support for the class; recall reported as 0
    sample_accuracy: float | None = None

    def to_dict(self) -> dict:
        per_class = [
            {"class": n, "precision": float(p), "recall": float(r), "f1": float(f),
             "support": int(s), "precision_undefined": bool(pu), "recall_undefined": bool(ru)}
            for n, p, r, f, s, pu, ru in zip(self.class_names, self.precision, self.recall, self.f1,
                                             self.support, self.precision_undefined,
                                             self.recall_undefined)]
        return {"accuracy": self.accuracy, "macro": self.macro, "weighted": self.weighted,
                "sample_accuracy": self.sample_accuracy, "per_class": per_class}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _default_names(k: int) -> list[str]:
    names = []
    for i in range(k):
        try:
            names.append(PostureLabel(i).wire_name)
        except ValueError:
            names.append(str(i))
    return names


def compute_metrics(true_labels, predicted_labels, n_classes: int, class_names=None):
    """Confusion matrix and per-class / averaged precision, recall and F1.

    Labels are class positions in ``[0, n_classes)``. Zero denominators give
    0 with the matching ``*_undefined`` flag set. Macro averages run over
    classes with nonzero support; weighted averages weight by support.
    """
    y = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if y.shape != p.shape:
        raise LengthMismatch(f"{y.size} true labels vs {p.size} predictions")
    for arr in (y, p):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"labels must lie in [0, {n_classes})")
    names = list(class_names) if class_names is not None else _default_names(n_classes)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y, p), 1)

    tp = np.diagonal(counts).astype(float)
    support = counts.sum(axis=1)
    predicted = counts.sum(axis=0)
    p_undef = predicted == 0
    r_undef = support == 0
    precision = np.divide(tp, predicted, out=np.zeros(n_classes), where=~p_undef)
    recall = np.divide(tp, support, out=np.zeros(n_classes), where=~r_undef)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(n_classes), where=denom > 0)

    n = int(support.sum())
    present = support > 0
    macro = {k: float(v[present].mean()) if present.any() else 0.0
             for k, v in (("precision", precision), ("recall", recall), ("f1", f1))}
    if n:
        # support * recall is TP by definition, so weighted recall is the exact TP total over N
        weighted = {"precision": float(np.dot(support, precision) / n),
                    "recall": float(tp.sum() / n),
                    "f1": float(np.dot(support, f1) / n)}
        accuracy = float(tp.sum() / n)
    else:
        weighted = {"precision": 0.0, "recall": 0.0, "f1": 0.0}
        accuracy = 0.0
    report = MetricsReport(names, precision, recall, f1, support, accuracy, macro, weighted,
                           p_undef, r_undef)
    return ConfusionMatrix(counts, names), report


def sample_vote_accuracy(true_labels, predicted_labels, groups) -> float:
    """Accuracy of per-group majority votes (ties to the lowest label)."""
    y = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    g = np.asarray(groups)
    ids = np.unique(g)
    if not ids.size:
        return 0.0
    hits = 0
    for gid in ids:
        sel = g == gid
        votes = np.bincount(p[sel])
        hits += int(np.argmax(votes) == y[sel][0])
    return hits / ids.size


def class_positions(model: GbdtModel, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    pos = np.searchsorted(model.classes, labels)
    pos = np.minimum(pos, model.n_classes - 1)
    if labels.size and np.any(model.classes[pos] != labels):
        raise ValueError("evaluation labels include classes the model was not trained on")
    return pos


def evaluate_model(model: GbdtModel, data: WindowedData):
    """Frame-level metrics of ``model`` on windowed data (plus per-sample vote accuracy)."""
    pred = model.predict_label(data.X, data.layout_hash)
    names = [PostureLabel(int(c)).wire_name for c in model.classes]
    cm, report = compute_metrics(class_positions(model, data.y), class_positions(model, pred),
                                 model.n_classes, names)
    report.sample_accuracy = sample_vote_accuracy(data.y, pred, data.groups)
    return cm, report


@dataclass
class RunSummary:
    tau: int
    confusion: ConfusionMatrix
    metrics: MetricsReport
    best_round: int
    stopped_round: int
    seconds: float
    model: GbdtModel | None = None


@dataclass
class TemporalComparison:
    baseline: RunSummary
    ours: RunSummary
    f1_delta: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def group_delta(self, labels) -> float:
        names = self.ours.metrics.class_names
        wanted = {PostureLabel(int(l)).wire_name for l in labels}
        idx = [i for i, n in enumerate(names) if n in wanted]
        return float(self.f1_delta[idx].mean()) if idx else 0.0

    @property
    def dynamic_delta(self) -> float:
        return self.group_delta(DYNAMIC_POSTURES)

    @property
    def static_delta(self) -> float:
        return self.group_delta(STATIC_POSTURES)


def _run(prep: PreparedDataset, config: PipelineConfig, keep_model: bool) -> RunSummary:
    t0 = time.perf_counter()
    res = run_pipeline(prep, config)
    cm, report = evaluate_model(res.model, res.test)
    return RunSummary(config.tau, cm, report, res.report.best_round, res.report.stopped_round,
                      time.perf_counter() - t0, res.model if keep_model else None)


def _prepare(dataset) -> PreparedDataset:
    return dataset if isinstance(dataset, PreparedDataset) else PreparedDataset(dataset)


def compare_temporal(dataset, tau_baseline: int = 1, tau_ours: int = 5,
                     config: PipelineConfig | None = None, seed: int | None = None,
                     keep_models: bool = False) -> TemporalComparison:
    """Train frame-wise and windowed models on one split and compare them."""
    config = config or PipelineConfig()
    if seed is not None:
        config = replace(config, seed=seed)
    config = replace(config, fit_ood=False)
    prep = _prepare(dataset)
    base = _run(prep, replace(config, tau=tau_baseline), keep_models)
    ours = _run(prep, replace(config, tau=tau_ours), keep_models)
    return TemporalComparison(base, ours, ours.metrics.f1 - base.metrics.f1)


@dataclass
class SweepRow:
    tau: int
    accuracy: float
    weighted_f1: float
    macro_f1: float
    best_round: int
    seconds: float


def sweep_window(dataset, taus, config: PipelineConfig | None = None,
                 seed: int | None = None) -> list[SweepRow]:
    """One train/evaluate run per window size on a fixed split."""
    config = config or PipelineConfig()
    if seed is not None:
        config = replace(config, seed=seed)
    config = replace(config, fit_ood=False)
    taus = sorted({int(t) for t in taus})
    if not taus or taus[0] < 1:
        raise ValueError("window sizes must be >= 1")
    prep = _prepare(dataset)
    rows = []
    for tau in taus:
        run = _run(prep, replace(config, tau=tau), keep_model=False)
        m = run.metrics
        rows.append(SweepRow(tau, m.accuracy, m.weighted["f1"], m.macro["f1"], run.best_round,
                             run.seconds))
        log.info("sweep tau=%d accuracy=%.4f (%.0fs)", tau, m.accuracy, run.seconds)
    return rows


def write_sweep(rows: list[SweepRow], out_dir, seed: int) -> tuple[str, str]:
    """Write the sweep as CSV and as a JSON series for plotting; returns both paths."""
    os.makedirs(out_dir, exist_ok=True)
    taus = "-".join(str(r.tau) for r in rows)
    csv_path = os.path.join(out_dir, f"sweep_seed{seed}_tau{taus}.csv")
    json_path = os.path.join(out_dir, f"sweep_seed{seed}_tau{taus}.json")
    cols = ["tau", "accuracy", "weighted_f1", "macro_f1", "best_round", "seconds"]
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([getattr(r, c) for c in cols])
    with open(json_path, "w") as fh:
        json.dump({c: [getattr(r, c) for r in rows] for c in cols}, fh, indent=2)
    return csv_path, json_path


def write_report(cm: ConfusionMatrix, report: MetricsReport, out_dir, seed: int, tau: int):
    """Write ``confusion_seed{S}_tau{T}.csv`` and ``metrics_seed{S}_tau{T}.json``."""
    os.makedirs(out_dir, exist_ok=True)
    cm_path = os.path.join(out_dir, f"confusion_seed{seed}_tau{tau}.csv")
    js_path = os.path.join(out_dir, f"metrics_seed{seed}_tau{tau}.json")
    cm.to_csv(cm_path)
    report.to_json(js_path)
    return cm_path, js_path

"""End-to-end training pipeline: frames to windowed matrices to a fitted model."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .boost import BoostParams, GbdtModel, TrainReport, train
from .core import Dataset, Sample, stratified_indices
from .features import frames_feature_matrix, iqr_winsorize, layout_hash, windowize
from .ood import DEFAULT_GAMMA, DEFAULT_MAX_TRAIN, DEFAULT_NU, fit_ood

log = logging.getLogger(__name__)

IQR_MIN_FRAMES = 4


def sample_frame_features(sample: Sample, winsorize: bool = True) -> np.ndarray:
    """Per-frame feature matrix of one sample, winsorized within the sample.

    Samples shorter than four frames have no meaningful quartiles and are
    passed through unclipped.
    """
    m = frames_feature_matrix(sample.frames)
    if winsorize and m.shape[0] >= IQR_MIN_FRAMES:
        m = iqr_winsorize(m)
    return m


@dataclass
class WindowedData:
    X: np.ndarray        # (n_frames, tau * F) float64
    y: np.ndarray        # label id per row
    groups: np.ndarray   # index of the source sample per row
    tau: int
    layout_hash: str


def windowed_data(frame_features, labels, tau: int, indices=None) -> WindowedData:
    """Stack windowed matrices of the selected samples."""
    indices = range(len(frame_features)) if indices is None else indices
    blocks, ys, gs = [], [], []
    for i in indices:
        w = windowize(frame_features[i], tau)
        blocks.append(w)
        ys.append(np.full(w.shape[0], int(labels[i]), dtype=np.int64))
        gs.append(np.full(w.shape[0], int(i), dtype=np.int64))
    if not blocks:
        width = tau * frame_features[0].shape[1] if len(frame_features) else 0
        return WindowedData(np.zeros((0, width)), np.zeros(0, np.int64), np.zeros(0, np.int64),
                            tau, layout_hash(tau))
    return WindowedData(np.vstack(blocks), np.concatenate(ys), np.concatenate(gs), tau,
                        layout_hash(tau))


@dataclass
class PipelineConfig:
    tau: int = 5
    train_fraction: float = 0.6
    seed: int = 0
    params: BoostParams = field(default_factory=BoostParams)
    fit_ood: bool = True
    nu: float = DEFAULT_NU
    gamma: float = DEFAULT_GAMMA
    ood_max_train: int = DEFAULT_MAX_TRAIN

    def boost_params(self) -> BoostParams:
        d = dict(vars(self.params))
        d["seed"] = self.seed
        return BoostParams(**d)


@dataclass
class PipelineResult:
    model: GbdtModel
    report: TrainReport
    train_idx: list
    test_idx: list
    test: WindowedData | None = None


class PreparedDataset:
    """Frame features of every sample, computed once and reused across window sizes.

    Raw frames are not retained, so the source dataset can be released.
    """

    def __init__(self, dataset: Dataset, winsorize: bool = True):
        self.sample_ids = [s.sample_id for s in dataset.samples]
        self.labels = dataset.labels()
        self.frame_features = [sample_frame_features(s, winsorize) for s in dataset.samples]

    def subset(self, indices) -> "PreparedDataset":
        """The selected samples only, renumbered from zero."""
        out = object.__new__(PreparedDataset)
        out.sample_ids = [self.sample_ids[i] for i in indices]
        out.labels = self.labels[np.asarray(indices, dtype=np.int64)]
        out.frame_features = [self.frame_features[i] for i in indices]
        return out

    def split(self, train_fraction: float, seed: int):
        return stratified_indices(self.labels, train_fraction, seed)

    def windowed(self, tau: int, indices) -> WindowedData:
        return windowed_data(self.frame_features, self.labels, tau, indices)


def run_pipeline(data: Dataset | PreparedDataset, config: PipelineConfig, *,
                 classes=None, keep_test: bool = True) -> PipelineResult:
    """Split, window, train and optionally fit the OOD detector.

    ``classes`` fixes the model's label set; by default it is every label
    present in the training partition.
    """
    prep = data if isinstance(data, PreparedDataset) else PreparedDataset(data)
    train_idx, test_idx = prep.split(config.train_fraction, config.seed)
    tr = prep.windowed(config.tau, train_idx)
    model, report = train(tr.X, tr.y, config.boost_params(), groups=tr.groups,
                          layout_hash=tr.layout_hash, tau=config.tau, classes=classes)
    log.info("tau=%d trained %d rounds (best %d) in %.1fs", config.tau, report.stopped_round,
             report.best_round, report.seconds)
    if config.fit_ood and model.n_trees > 0:
        emb = model.leaf_indices(tr.X)
        model.ood = fit_ood(emb, config.nu, config.gamma, model, max_train=config.ood_max_train,
                            seed=config.seed)
    del tr
    test = prep.windowed(config.tau, test_idx) if keep_test else None
    return PipelineResult(model, report, train_idx, test_idx, test)

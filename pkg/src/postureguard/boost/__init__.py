"""Gradient-boosted decision trees for multiclass posture classification."""
from .binning import apply_bins, compute_bin_edges
from .loss import LabelOutOfRange, logloss, softmax, softmax_logloss
from .model import BoostParams, GbdtModel, LayoutMismatch, NonFiniteFeature, TrainReport, train
from .tree import Tree

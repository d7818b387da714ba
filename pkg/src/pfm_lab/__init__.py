"""Pre-defined Filter Modules: convolutions restricted to fixed edge and
line kernels, followed by ReLU and learned 1x1 mixing."""

from .autograd import Tensor
from .dashes import DashDataset, DashImage, generate, oracle_accuracy, oracle_classify
from .estimator import FilterResponseTransformer, PFMClassifier
from .filters import (FilterBank, Kernel3x3, bank_from_spec, make_edge_line_bank, make_random_bank,
                      make_translating_bank, select_subset, spanned_dimensions)
from .layers import PFM, SmoothedSkip, smoothed_skip, switch_eval
from .models import (build_counting_graph, build_mini_pfnet, build_toy, make_model,
                     trainable_count)
from .training import TrainConfig, evaluate, kaiming_init, train

__version__ = "0.1.0"

__all__ = [
    "DashDataset", "DashImage", "FilterBank", "FilterResponseTransformer", "Kernel3x3", "PFM",
    "PFMClassifier", "SmoothedSkip", "Tensor", "TrainConfig", "bank_from_spec",
    "build_counting_graph", "build_mini_pfnet", "build_toy", "evaluate", "generate",
    "kaiming_init", "make_edge_line_bank", "make_model", "make_random_bank",
    "make_translating_bank", "oracle_accuracy", "oracle_classify", "select_subset",
    "smoothed_skip", "spanned_dimensions", "switch_eval", "train", "trainable_count",
]

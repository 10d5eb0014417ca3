"""Multi-classifier maximum-discrepancy adversarial domain adaptation in numpy."""

from .autodiff import ParamBlock, Tensor, backward, sgd_step
from .data import DatasetSplit, ToySpec, boundary_grid, load_csv, make_toy
from .losses import (
    LossVariant,
    cross_entropy,
    loss_step1,
    loss_step2,
    loss_step3,
    multi_discrepancy,
    pair_discrepancy,
)
from .model import (
    ModelSpec,
    MultiClassifierModel,
    classify_all,
    extract_features,
    init_model,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .training import TrainConfig, evaluate, train, train_source_only

__version__ = "0.1.0"

"""Black-box adversarial robustness harness.

Attacks (EvoBA evolution strategy, SimBA Cartesian basis, CompleteRandom)
run against any classifier wrapped in a query-counted oracle; a small
trainable MLP target, dataset loading, and campaign-level metric reporting
make the package self-contained.
"""

from .attacks import (
    AttackOutcome,
    CompleteRandomConfig,
    EvobaConfig,
    SimbaConfig,
    complete_random_attack,
    evoba_attack,
    sample_grid_pixels,
    sample_value,
    simba_attack,
)
from .campaign import (
    BudgetCurve,
    CampaignReport,
    ConsistencyReport,
    Histogram,
    budget_curve,
    consistency_study,
    emit_report,
    histogram,
    run_campaign,
)
from .dataset import (
    LabeledDataset,
    load_idx_images,
    load_idx_labels,
    load_image_dump,
    load_mnist_dataset,
    make_synthetic_dataset,
    sample_eval_pool,
    save_image_dump,
)
from .errors import (
    AlreadyMisclassifiedError,
    ContractViolationError,
    IdxFormatError,
    InsufficientPoolError,
)
from .model import MlpModel, gradient_check, loss_gradients, train_sgd
from .oracle import ClassifierOracle, PredictionResult
from .tensor import (
    ImageTensor,
    PixelCoordinate,
    TensorShape,
    apply_write,
    l0_distance,
    l2_distance,
    linf_distance,
    write_many,
)

__all__ = [
    "AttackOutcome",
    "AlreadyMisclassifiedError",
    "BudgetCurve",
    "CampaignReport",
    "ClassifierOracle",
    "CompleteRandomConfig",
    "ConsistencyReport",
    "ContractViolationError",
    "EvobaConfig",
    "Histogram",
    "IdxFormatError",
    "ImageTensor",
    "InsufficientPoolError",
    "LabeledDataset",
    "MlpModel",
    "PixelCoordinate",
    "PredictionResult",
    "SimbaConfig",
    "TensorShape",
    "apply_write",
    "budget_curve",
    "complete_random_attack",
    "consistency_study",
    "emit_report",
    "evoba_attack",
    "gradient_check",
    "histogram",
    "l0_distance",
    "l2_distance",
    "linf_distance",
    "load_idx_images",
    "load_idx_labels",
    "load_image_dump",
    "load_mnist_dataset",
    "loss_gradients",
    "make_synthetic_dataset",
    "run_campaign",
    "sample_eval_pool",
    "sample_grid_pixels",
    "sample_value",
    "save_image_dump",
    "simba_attack",
    "train_sgd",
    "write_many",
]

__version__ = "0.1.0"

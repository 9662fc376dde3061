"""labelvet: machine annotation with critic-guided human review.

The package annotates datasets with a model, estimates each annotation's
error probability with a critic, spends a fixed human-review budget on the
most suspect items, corrects the labels, scores the result, and can train a
downstream classifier whose loss re-weights the reviewed items to stay
faithful to fully-reviewed training.
"""

from .data import (
    CorrectedDataset,
    CorrectedRecord,
    DataError,
    Dataset,
    Item,
    ReviewRecord,
    apply_correction,
    ideal_budget,
    load_dataset,
    save_dataset,
)
from .backends import BackendConfig, CriticismRecord, annotate_dataset, criticize_dataset
from .loss import RuleLossConfig, rule_loss, unbiased_loss, variance_estimate
from .metrics import budget_curve, quality, quality_gain, stability_runs
from .pipeline import PipelineConfig, Run, run_pipeline
from .sampling import SamplingPlan, build_plan
from .simulator import SimulatorConfig, make_synthetic_dataset
from .trainer import GapBoundParams, TrainConfig, theory_bound, train

__version__ = "0.1.0"

__all__ = [
    "BackendConfig",
    "CorrectedDataset",
    "CorrectedRecord",
    "CriticismRecord",
    "DataError",
    "Dataset",
    "GapBoundParams",
    "Item",
    "PipelineConfig",
    "ReviewRecord",
    "Run",
    "RuleLossConfig",
    "SamplingPlan",
    "SimulatorConfig",
    "TrainConfig",
    "annotate_dataset",
    "apply_correction",
    "budget_curve",
    "build_plan",
    "criticize_dataset",
    "ideal_budget",
    "load_dataset",
    "make_synthetic_dataset",
    "quality",
    "quality_gain",
    "rule_loss",
    "run_pipeline",
    "save_dataset",
    "stability_runs",
    "theory_bound",
    "train",
    "unbiased_loss",
    "variance_estimate",
    "__version__",
]

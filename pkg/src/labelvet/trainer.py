"""Downstream training on corrected datasets, and optimality-gap studies.

The downstream model is multinomial softmax regression with an L2 penalty,
fit by deterministic full-batch gradient descent from zero initialization.
The penalty coefficient is the strong-convexity constant of the objective,
which makes the distance between the minimizers of two objectives
controllable by the norm of their gradient difference; ``theory_bound``
evaluates the resulting high-probability bound on the parameter gap
between training on fully reviewed labels and training on the
review-weighted loss, and ``gap_experiment`` measures that gap empirically
on synthetic data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, Item, read_jsonl
from .loss import RuleLossConfig, rule_coefficients
from .sampling import build_plan
from .simulator import SimulatorConfig, make_synthetic_dataset, simulate_annotator, \
    simulate_criticizer


class TrainerError(ValueError):
    """Raised for invalid training inputs or configuration."""


class TrainingDivergedError(RuntimeError):
    """Raised when the objective blows up or stops being finite."""


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

def featurize(
    item: Item,
    embeddings: Mapping[int, np.ndarray] | None = None,
) -> np.ndarray:
    """Feature vector for one item.

    Synthetic items carry their features inline and pass through
    unchanged.  Text/image items need a precomputed embeddings table
    (item id to vector), supplied as an input file.
    """
    if item.content.get("kind") == "features":
        return np.asarray(item.content["values"], dtype=float)
    if embeddings is None:
        raise TrainerError(f"item {item.item_id} has no inline features; supply an"
                           " embeddings table")
    if item.item_id not in embeddings:
        raise TrainerError(f"embeddings table has no entry for item {item.item_id}")
    return np.asarray(embeddings[item.item_id], dtype=float)


def load_embeddings(path: Path | str) -> dict[int, np.ndarray]:
    """Load an embeddings table from JSONL records {item_id, vector}."""
    table = {}
    for record in read_jsonl(path):
        table[int(record["item_id"])] = np.asarray(record["vector"], dtype=float)
    return table


def feature_matrix(
    dataset: Dataset,
    embeddings: Mapping[int, np.ndarray] | None = None,
) -> np.ndarray:
    rows = [featurize(dataset[i], embeddings) for i in range(dataset.n)]
    width = {r.shape for r in rows}
    if len(width) != 1:
        raise TrainerError("items have inconsistent feature dimensions")
    return np.stack(rows)


# ---------------------------------------------------------------------------
# Softmax regression
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Weights (classes x features) and per-class bias."""

    weights: np.ndarray
    bias: np.ndarray

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.bias.ravel()])

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]


def zero_params(n_classes: int, n_features: int) -> ModelParams:
    return ModelParams(weights=np.zeros((n_classes, n_features)),
                       bias=np.zeros(n_classes))


def parameter_gap(a: ModelParams, b: ModelParams) -> float:
    """Euclidean distance between two parameter vectors (weights and bias)."""
    if a.weights.shape != b.weights.shape or a.bias.shape != b.bias.shape:
        raise TrainerError("parameter shapes do not match")
    return float(np.linalg.norm(a.flatten() - b.flatten()))


def _scores(params: ModelParams, features: np.ndarray) -> np.ndarray:
    return features @ params.weights.T + params.bias


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def per_example_loss(params: ModelParams, features: np.ndarray,
                     labels: np.ndarray) -> np.ndarray:
    """Cross-entropy of each example under the model (no penalty term)."""
    log_probs = _log_softmax(_scores(params, features))
    return -log_probs[np.arange(features.shape[0]), labels]


def predict(params: ModelParams, features: np.ndarray) -> np.ndarray:
    return np.argmax(_scores(params, features), axis=1)


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent settings.

    ``l2`` multiplies half the squared parameter norm (bias included) and
    is the strong-convexity constant of the objective.  With ``auto_lr``
    the step is capped at the reciprocal of a smoothness estimate, which
    keeps descent monotone even for strongly importance-weighted losses;
    the cap only ever lowers the configured rate.  ``batch_size`` of 0
    means full-batch; positive values give seeded mini-batch SGD, which
    trades determinism of the path for speed and is excluded from the
    optimality-gap studies.
    """

    n_classes: int
    learning_rate: float = 0.5
    epochs: int = 1500
    l2: float = 0.1
    batch_size: int = 0
    seed: int = 0
    auto_lr: bool = True
    divergence_threshold: float = 1e10

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise TrainerError("need at least two classes")
        if self.learning_rate <= 0.0:
            raise TrainerError("learning_rate must be positive")
        if self.epochs < 0:
            raise TrainerError("epochs must be non-negative")
        if self.l2 < 0.0:
            raise TrainerError("l2 must be non-negative")
        if self.batch_size < 0:
            raise TrainerError("batch_size must be non-negative")


@dataclass(frozen=True)
class RuleTrainingData:
    """Labels and sampling state for training on a review-weighted loss."""

    labels_true: np.ndarray       # only consulted where indicators == 1
    labels_machine: np.ndarray
    indicators: np.ndarray
    error_estimates: np.ndarray
    loss_config: RuleLossConfig
    sampled_rule: str


@dataclass(frozen=True)
class TrainResult:
    params: ModelParams
    objective_history: tuple[float, ...]

    @property
    def final_objective(self) -> float:
        return self.objective_history[-1] if self.objective_history else float("nan")


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise TrainerError("labels must be 1-D")
    if np.any((labels < 0) | (labels >= n_classes)):
        raise TrainerError("labels outside the class range")
    eye = np.eye(n_classes)
    return eye[labels]


def _coefficients(
    n: int,
    rule_data: RuleTrainingData | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-item (machine, true) loss coefficients; plain training is (0, 1)."""
    if rule_data is None:
        return np.zeros(n), np.ones(n)
    if rule_data.sampled_rule != rule_data.loss_config.rule:
        raise TrainerError(
            f"indicators were sampled with rule {rule_data.sampled_rule!r} but the"
            f" loss is configured for {rule_data.loss_config.rule!r}")
    return rule_coefficients(
        np.asarray(rule_data.indicators, dtype=float),
        np.asarray(rule_data.error_estimates, dtype=float),
        rule_data.loss_config)


def train(
    features: np.ndarray,
    config: TrainConfig,
    labels: np.ndarray | None = None,
    rule_data: RuleTrainingData | None = None,
    init: ModelParams | None = None,
) -> TrainResult:
    """Fit softmax regression by gradient descent.

    Exactly one of ``labels`` (plain cross-entropy) or ``rule_data``
    (review-weighted loss) selects the objective.  Training is
    deterministic: zero initialization unless ``init`` is given, fixed step
    schedule, no stochasticity in full-batch mode.  A non-finite or
    exploding objective raises ``TrainingDivergedError`` naming the step.
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] == 0:
        raise TrainerError("features must be a non-empty (N, d) array")
    if (labels is None) == (rule_data is None):
        raise TrainerError("supply exactly one of labels or rule_data")
    n, _ = features.shape
    k = config.n_classes

    coef_machine, coef_true = _coefficients(n, rule_data)
    if coef_machine.shape != (n,):
        raise TrainerError("rule coefficients do not match the feature count")
    if rule_data is None:
        y_true = _one_hot(labels, k)
        y_machine = np.zeros_like(y_true)
    else:
        safe_true = np.where(np.asarray(rule_data.indicators) == 1,
                             rule_data.labels_true, 0)
        y_true = _one_hot(safe_true, k)
        y_machine = _one_hot(rule_data.labels_machine, k)

    params = init if init is not None else zero_params(k, features.shape[1])
    weights = params.weights.copy()
    bias = params.bias.copy()

    lr = config.learning_rate
    if config.auto_lr:
        # Softmax cross-entropy curvature per example is at most half the
        # squared feature norm; weight by the coefficient magnitudes.
        feat_sq = (features ** 2).sum(axis=1) + 1.0
        smoothness = 0.5 * float(np.mean((np.abs(coef_machine) + np.abs(coef_true))
                                         * feat_sq)) + config.l2
        lr = min(lr, 1.0 / smoothness)

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 401]))
    history = []

    def objective(w: np.ndarray, b: np.ndarray) -> float:
        p = ModelParams(weights=w, bias=b)
        log_probs = _log_softmax(_scores(p, features))
        ce_true = -(log_probs * y_true).sum(axis=1)
        ce_machine = -(log_probs * y_machine).sum(axis=1)
        data = float(np.mean(coef_machine * ce_machine + coef_true * ce_true))
        penalty = 0.5 * config.l2 * (float((w ** 2).sum()) + float((b ** 2).sum()))
        return data + penalty

    def batch_gradient(w: np.ndarray, b: np.ndarray,
                       idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = ModelParams(weights=w, bias=b)
        scores = _scores(p, features[idx])
        shifted = scores - scores.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        cm = coef_machine[idx][:, None]
        ct = coef_true[idx][:, None]
        residual = (cm + ct) * probs - cm * y_machine[idx] - ct * y_true[idx]
        grad_w = residual.T @ features[idx] / idx.size + config.l2 * w
        grad_b = residual.sum(axis=0) / idx.size + config.l2 * b
        return grad_w, grad_b

    history.append(objective(weights, bias))
    if not math.isfinite(history[0]):
        raise TrainingDivergedError("objective not finite at initialization")

    full_idx = np.arange(n)
    for epoch in range(config.epochs):
        if config.batch_size == 0:
            grad_w, grad_b = batch_gradient(weights, bias, full_idx)
            weights = weights - lr * grad_w
            bias = bias - lr * grad_b
        else:
            order = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                grad_w, grad_b = batch_gradient(weights, bias, idx)
                weights = weights - lr * grad_w
                bias = bias - lr * grad_b
        value = objective(weights, bias)
        history.append(value)
        if not math.isfinite(value) or abs(value) > config.divergence_threshold:
            raise TrainingDivergedError(f"objective diverged at step {epoch + 1}:"
                                        f" {value!r}")
    return TrainResult(params=ModelParams(weights=weights, bias=bias),
                       objective_history=tuple(history))


# ---------------------------------------------------------------------------
# Theoretical gap bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GapBoundParams:
    """Inputs to the high-probability parameter-gap bound.

    ``min_review_prob`` is the lower bound q on review probabilities, and
    ``grad_gap_bound`` the bound C on per-example gradient-gap norms at the
    fully reviewed optimum.  ``confidence`` is the allowed failure
    probability p.
    """

    n: int
    strong_convexity: float
    grad_gap_bound: float
    min_review_prob: float
    confidence: float = 0.05

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise TrainerError("n must be positive")
        if self.strong_convexity <= 0.0:
            raise TrainerError("strong_convexity must be positive")
        if self.grad_gap_bound < 0.0:
            raise TrainerError("grad_gap_bound must be non-negative")
        if not 0.0 < self.min_review_prob <= 1.0:
            raise TrainerError("min_review_prob must be in (0, 1]; a zero lower"
                               " bound leaves importance weights unbounded")
        if not 0.0 < self.confidence < 1.0:
            raise TrainerError("confidence must be in (0, 1)")


@dataclass(frozen=True)
class GapBound:
    """The bound value plus whether the sample size supports it.

    The concentration argument behind the bound only applies once
    n >= ``n_required``; smaller samples get the value anyway but flagged
    ``valid=False``.  A hard selection rule puts probability 1 on every
    reviewed item, which zeroes the variance constant and pushes
    ``n_required`` to infinity, so its bounds are never valid in this
    sense.
    """

    value: float
    valid: bool
    n_required: float


def theory_bound(params: GapBoundParams) -> GapBound:
    """High-probability bound on the parameter gap.

    value = sqrt(8 * c1 * log(2 / p) / (mu^2 * n)) with
    c1 = (1 - q) * C^2 / q, valid for n >= 8 * c0^2 * log(2 / p) / c1
    where c0 = max(1, (1 - q) / q) * C.
    """
    q = params.min_review_prob
    c = params.grad_gap_bound
    log_term = math.log(2.0 / params.confidence)
    c1 = (1.0 - q) * c * c / q
    c0 = max(1.0, (1.0 - q) / q) * c
    value = math.sqrt(8.0 * c1 * log_term / (params.strong_convexity ** 2 * params.n))
    if c1 > 0.0:
        n_required = 8.0 * c0 * c0 * log_term / c1
    elif c == 0.0:
        n_required = 0.0
    else:
        n_required = float("inf")
    return GapBound(value=value, valid=params.n >= n_required, n_required=n_required)


# ---------------------------------------------------------------------------
# Gap experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GapExperimentConfig:
    """Synthetic instance generator plus training settings for gap trials."""

    n_classes: int = 10
    n_features: int = 20
    class_scale: float = 0.5
    annotator_accuracy: float = 0.8
    criticizer_error_a: float = 6.0
    criticizer_error_b: float = 2.0
    criticizer_correct_a: float = 2.0
    criticizer_correct_b: float = 6.0
    perfect_criticizer: bool = False
    budget_proportion: float = 0.2
    rule: str = "threshold"
    sharpness: float = 10.0
    power: float = 1.0
    l2: float = 0.1
    learning_rate: float = 0.5
    epochs: int = 1500
    confidence: float = 0.05


@dataclass(frozen=True)
class GapTrial:
    """One (size, seed) gap measurement with its bound diagnostics.

    ``q_reviewed`` is the smallest review probability among items actually
    reviewed; ``q_all`` the smallest over every item.  The bound uses the
    conservative ``q_all`` and is only evaluable when that is positive.
    """

    n: int
    rule: str
    seed: int
    gap: float
    empirical_c: float
    q_reviewed: float
    q_all: float
    bound: float | None
    bound_valid: bool
    n_required: float | None

    def violates_bound(self) -> bool:
        return (self.bound is not None and self.bound_valid
                and self.gap > self.bound)


def _grad_gap_norms(features: np.ndarray, labels_true: np.ndarray,
                    labels_machine: np.ndarray) -> np.ndarray:
    """Per-example norm of (machine-label gradient - true-label gradient).

    Each per-example gradient is a rank-one matrix (class residual times
    the augmented feature row), and the model-probability term cancels in
    the difference, so the norm is the label-indicator distance times the
    augmented feature norm.  This holds at any parameter value.
    """
    differ = labels_true != labels_machine
    label_dist = np.where(differ, math.sqrt(2.0), 0.0)
    feat_norm = np.sqrt((features ** 2).sum(axis=1) + 1.0)
    return label_dist * feat_norm


def run_gap_trial(n: int, seed: int, config: GapExperimentConfig) -> GapTrial:
    """Generate one synthetic instance, train both ways, measure the gap."""
    dataset = make_synthetic_dataset(n, config.n_classes, config.n_features,
                                     seed, class_scale=config.class_scale)
    annotator = SimulatorConfig(accuracy=config.annotator_accuracy, seed=seed)
    machine = np.array(simulate_annotator(dataset, annotator))
    criticizer = SimulatorConfig(
        accuracy=config.annotator_accuracy,
        error_a=config.criticizer_error_a, error_b=config.criticizer_error_b,
        correct_a=config.criticizer_correct_a, correct_b=config.criticizer_correct_b,
        perfect=config.perfect_criticizer, seed=seed)
    estimates = np.array(simulate_criticizer(dataset, machine.tolist(), criticizer))
    budget = int(config.budget_proportion * n)

    plan = build_plan(estimates, budget, config.rule, seed=seed,
                      mode="expectation", sharpness=config.sharpness)
    indicators = np.array(plan.indicators)
    probs = np.array(plan.review_probs)

    features = feature_matrix(dataset)
    truth = np.array([dataset[i].hidden_truth for i in range(n)])
    train_config = TrainConfig(n_classes=config.n_classes,
                               learning_rate=config.learning_rate,
                               epochs=config.epochs, l2=config.l2, seed=seed)
    reference = train(features, train_config, labels=truth)

    loss_config = RuleLossConfig(
        rule=config.rule, power=config.power,
        center=plan.center, sharpness=plan.sharpness,
        budget=budget if config.rule == "normalization" else None)
    rule_data = RuleTrainingData(
        labels_true=truth, labels_machine=machine, indicators=indicators,
        error_estimates=estimates, loss_config=loss_config,
        sampled_rule=plan.rule)
    weighted = train(features, train_config, rule_data=rule_data)

    gap = parameter_gap(reference.params, weighted.params)
    empirical_c = float(_grad_gap_norms(features, truth, machine).max())
    reviewed = indicators == 1
    q_reviewed = float(probs[reviewed].min()) if reviewed.any() else 1.0
    q_all = float(probs.min())

    bound_value: float | None = None
    bound_valid = False
    n_required: float | None = None
    if q_all > 0.0:
        bound = theory_bound(GapBoundParams(
            n=n, strong_convexity=config.l2, grad_gap_bound=empirical_c,
            min_review_prob=q_all, confidence=config.confidence))
        bound_value, bound_valid, n_required = bound.value, bound.valid, bound.n_required
    return GapTrial(n=n, rule=config.rule, seed=seed, gap=gap,
                    empirical_c=empirical_c, q_reviewed=q_reviewed, q_all=q_all,
                    bound=bound_value, bound_valid=bound_valid, n_required=n_required)


def gap_experiment(
    sizes: Sequence[int],
    seeds: Sequence[int],
    config: GapExperimentConfig,
    max_workers: int = 1,
) -> list[GapTrial]:
    """Gap trials over a grid of dataset sizes and seeds.

    Trials are independent and fully seeded, so the threaded path returns
    the same list, in the same (size, seed) order, as the serial one.
    """
    if not sizes or not seeds:
        raise TrainerError("need at least one size and one seed")
    grid = [(n, seed) for n in sizes for seed in seeds]
    if max_workers <= 1:
        return [run_gap_trial(n, seed, config) for n, seed in grid]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda ns: run_gap_trial(*ns, config), grid))


def mean_gaps_by_size(trials: Sequence[GapTrial]) -> dict[int, float]:
    by_size: dict[int, list[float]] = {}
    for trial in trials:
        by_size.setdefault(trial.n, []).append(trial.gap)
    return {n: float(np.mean(gaps)) for n, gaps in sorted(by_size.items())}


def loglog_slope(points: Mapping[int, float]) -> float:
    """Least-squares slope of log(mean gap) against log(size)."""
    if len(points) < 2:
        raise TrainerError("need at least two sizes to fit a slope")
    sizes = np.array(sorted(points))
    values = np.array([points[int(n)] for n in sizes])
    if np.any(values <= 0.0):
        raise TrainerError("slope undefined: a mean gap is not positive")
    return float(np.polyfit(np.log(sizes), np.log(values), 1)[0])


def write_gap_csv(trials: Sequence[GapTrial], path: Path | str) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "rule", "seed", "gap", "empirical_c",
                         "q_reviewed", "q_all", "bound", "bound_valid",
                         "n_required"])
        for t in trials:
            writer.writerow([t.n, t.rule, t.seed, f"{t.gap:.10g}",
                             f"{t.empirical_c:.10g}", f"{t.q_reviewed:.10g}",
                             f"{t.q_all:.10g}",
                             "" if t.bound is None else f"{t.bound:.10g}",
                             t.bound_valid,
                             "" if t.n_required is None else f"{t.n_required:.10g}"])

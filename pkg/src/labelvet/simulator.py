"""Seeded simulators for annotators, criticizers, and reviewers.

These stand in for model backends and human reviewers in tests and desk
experiments.  All randomness is derived per item from (seed, item id), so
simulating items one at a time, in any order, or in parallel produces
byte-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, Item
from .sampling import item_rng

# Domain tags for per-item random streams (disjoint from sampling's).
_DOMAIN_ANNOTATE = 201
_DOMAIN_CRITICIZE = 202


class SimulatorError(ValueError):
    """Raised for invalid simulator configurations or missing ground truth."""


@dataclass(frozen=True)
class SimulatorConfig:
    """Behavior of the simulated annotator and criticizer.

    The annotator emits the true label with probability ``accuracy`` and a
    uniformly random wrong label otherwise.  The criticizer draws its error
    estimate from a Beta(error_a, error_b) channel on truly wrong labels
    and Beta(correct_a, correct_b) on correct ones; ``perfect`` bypasses
    the channels and emits exactly 1.0 on errors and 0.0 otherwise.
    """

    accuracy: float = 0.8
    error_a: float = 9.0
    error_b: float = 1.0
    correct_a: float = 1.0
    correct_b: float = 9.0
    perfect: bool = False
    seed: int = 42

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise SimulatorError(f"accuracy must be in [0, 1], got {self.accuracy}")
        for name in ("error_a", "error_b", "correct_a", "correct_b"):
            if getattr(self, name) <= 0.0:
                raise SimulatorError(f"{name} must be positive")

    @classmethod
    def perfect_criticizer(cls, accuracy: float = 0.8, seed: int = 42) -> "SimulatorConfig":
        return cls(accuracy=accuracy, perfect=True, seed=seed)


def _require_truth(item: Item) -> int:
    if item.hidden_truth is None:
        raise SimulatorError(f"item {item.item_id} has no hidden_truth; simulation"
                             " needs ground-truth labels")
    return item.hidden_truth


def simulate_label(item: Item, config: SimulatorConfig) -> int:
    """One simulated machine label for one item."""
    truth = _require_truth(item)
    k = len(item.label_space)
    rng = item_rng(config.seed, _DOMAIN_ANNOTATE, item.item_id)
    if rng.random() < config.accuracy:
        return truth
    wrong = [label for label in range(k) if label != truth]
    return int(wrong[rng.integers(0, len(wrong))])


def simulate_annotator(dataset: Dataset, config: SimulatorConfig) -> list[int]:
    """Simulated machine labels for a whole dataset, ordered by item id."""
    return [simulate_label(dataset[i], config) for i in range(dataset.n)]


def simulate_error_estimate(
    item: Item,
    machine_label: int | None,
    config: SimulatorConfig,
) -> float:
    """One simulated error estimate for one (item, machine label) pair."""
    truth = _require_truth(item)
    is_error = machine_label is None or machine_label != truth
    if config.perfect:
        return 1.0 if is_error else 0.0
    rng = item_rng(config.seed, _DOMAIN_CRITICIZE, item.item_id)
    if is_error:
        return float(rng.beta(config.error_a, config.error_b))
    return float(rng.beta(config.correct_a, config.correct_b))


def simulate_criticizer(
    dataset: Dataset,
    machine_labels: Sequence[int | None],
    config: SimulatorConfig,
) -> list[float]:
    """Simulated error estimates for a whole dataset, ordered by item id."""
    if len(machine_labels) != dataset.n:
        raise SimulatorError("machine_labels must match the dataset size")
    return [simulate_error_estimate(dataset[i], machine_labels[i], config)
            for i in range(dataset.n)]


def simulate_review(item: Item) -> int:
    """A simulated human reviewer: returns the ground-truth label."""
    return _require_truth(item)


def make_synthetic_dataset(
    n: int,
    n_classes: int,
    n_features: int,
    seed: int,
    class_scale: float = 2.0,
    noise_scale: float = 1.0,
) -> Dataset:
    """Gaussian blob dataset with feature-vector content and known labels.

    Class means are drawn once from a seeded normal and shared by every
    item; each item is its class mean plus unit Gaussian noise.  Labels are
    balanced up to rounding via a seeded shuffle.
    """
    if n <= 0 or n_classes < 2 or n_features < 1:
        raise SimulatorError("need n > 0, n_classes >= 2, n_features >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 301]))
    means = rng.normal(size=(n_classes, n_features))
    means -= means.mean(axis=0, keepdims=True)
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    means = class_scale * means / np.maximum(norms, 1e-12)
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    noise = rng.normal(scale=noise_scale, size=(n, n_features))
    features = means[labels] + noise
    label_space = tuple(f"class_{k}" for k in range(n_classes))
    items = tuple(
        Item(
            item_id=i,
            content={"kind": "features", "values": [float(v) for v in features[i]]},
            label_space=label_space,
            hidden_truth=int(labels[i]),
        )
        for i in range(n)
    )
    return Dataset(items=items)

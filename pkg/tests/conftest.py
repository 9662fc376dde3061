"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from labelvet.backends import BackendConfig
from labelvet.data import AnnotationRecord, Dataset, Item, ReviewRecord, save_dataset
from labelvet.pipeline import AgentConfig, PipelineConfig
from labelvet.simulator import SimulatorConfig

ANIMALS = ("cat", "dog", "fox", "owl")


def text_item(item_id: int, truth: int | None = None,
              labels: tuple[str, ...] = ANIMALS) -> Item:
    return Item(
        item_id=item_id,
        content={"kind": "text", "text": f"description of item {item_id}"},
        label_space=labels,
        hidden_truth=truth,
    )


def text_dataset(n: int, seed: int = 0,
                 labels: tuple[str, ...] = ANIMALS) -> Dataset:
    rng = np.random.default_rng(seed)
    truths = rng.integers(0, len(labels), size=n)
    return Dataset(tuple(text_item(i, int(truths[i]), labels) for i in range(n)))


def machine_annotations(dataset: Dataset, labels, strategy: str = "naive"):
    return [
        AnnotationRecord(item_id=item.item_id, machine_label=int(label),
                         strategy=strategy, backend_id="test", parse_ok=True,
                         reasoning="because" if strategy == "cot" else None)
        for item, label in zip(dataset, labels)
    ]


def review_for(item_id: int, label: int) -> ReviewRecord:
    return ReviewRecord(item_id=item_id, human_label=label,
                        reviewer_id="tester", timestamp="2024-01-01T00:00:00Z")


def agent(backend_id: str, strategy: str = "naive", **sim) -> AgentConfig:
    return AgentConfig(strategy=strategy, backend=BackendConfig(
        backend_id=backend_id, endpoint="simulated",
        simulator=SimulatorConfig(**sim)))


def make_config(tmp_path, n=30, *, accuracy=0.8, perfect=True, rule="threshold",
                budget=None, budget_proportion=None,
                review_mode="simulated_oracle", seed=0, dataset=None,
                **kwargs) -> PipelineConfig:
    """Pipeline config over a freshly written dataset with simulated agents."""
    tmp_path.mkdir(parents=True, exist_ok=True)
    dataset_path = tmp_path / "dataset.jsonl"
    if dataset is None:
        dataset = text_dataset(n, seed=seed)
    save_dataset(dataset, dataset_path)
    if budget is None and budget_proportion is None:
        budget = max(1, dataset.n // 3)
    critic_sim = dict(seed=seed + 2, perfect=True) if perfect else dict(
        seed=seed + 2, error_a=9.0, error_b=1.0, correct_a=1.0, correct_b=9.0)
    return PipelineConfig(
        dataset_path=str(dataset_path),
        output_dir=str(tmp_path / "runs"),
        annotator=agent("annotator", accuracy=accuracy, seed=seed + 1),
        criticizer=agent("criticizer", **critic_sim),
        rule=rule, budget=budget, budget_proportion=budget_proportion,
        review_mode=review_mode, **kwargs)


@pytest.fixture
def simulated_annotator() -> BackendConfig:
    return BackendConfig(
        backend_id="annotator", endpoint="simulated",
        simulator=SimulatorConfig(accuracy=0.8, seed=11))


@pytest.fixture
def simulated_criticizer() -> BackendConfig:
    return BackendConfig(
        backend_id="criticizer", endpoint="simulated",
        simulator=SimulatorConfig(error_a=9.0, error_b=1.0,
                                  correct_a=1.0, correct_b=9.0, seed=11))

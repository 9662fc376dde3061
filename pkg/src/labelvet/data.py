"""Core data model and JSONL persistence.

Every artifact in the pipeline is a JSON-lines file whose records carry a
``schema_version`` field and an ``item_id``.  The record schemas are:

dataset.jsonl
    {"schema_version": 1, "item_id": int, "content": {...},
     "label_space": [str, ...], "hidden_truth": int | null}

annotations.jsonl
    {"schema_version": 1, "item_id": int, "machine_label": int | null,
     "reasoning": str | null, "strategy": "naive" | "cot",
     "backend_id": str, "parse_ok": bool}

reviews.jsonl
    {"schema_version": 1, "item_id": int, "human_label": int,
     "reviewer_id": str, "timestamp": str}

corrected.jsonl
    {"schema_version": 1, "item_id": int, "final_label": int | null,
     "source": "human" | "machine", "machine_label": int | null,
     "review_prob": float, "reviewed": int, "error_estimate": float}

``content`` is a tagged union: {"kind": "text", "text": ...},
{"kind": "image", "path": ...}, {"kind": "vqa", "question": ..., "image":
...}, or {"kind": "features", "values": [...]} for synthetic datasets that
carry raw feature vectors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

SCHEMA_VERSION = 1

CONTENT_KINDS = ("text", "image", "vqa", "features")
ANNOTATION_STRATEGIES = ("naive", "cot")


class DataError(ValueError):
    """Raised for malformed records, files, or cross-record violations."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise DataError(message)


@dataclass(frozen=True)
class Item:
    """A single unit of work: content to label plus its label space.

    ``hidden_truth`` is the ground-truth label index for synthetic or
    benchmark data; simulated annotators and reviewers read it, real
    deployments leave it ``None``.
    """

    item_id: int
    content: Mapping[str, object]
    label_space: tuple[str, ...]
    hidden_truth: int | None = None

    def __post_init__(self) -> None:
        _require(isinstance(self.item_id, int) and self.item_id >= 0,
                 f"item_id must be a non-negative int, got {self.item_id!r}")
        kind = self.content.get("kind") if isinstance(self.content, Mapping) else None
        _require(kind in CONTENT_KINDS,
                 f"item {self.item_id}: content kind must be one of {CONTENT_KINDS}, got {kind!r}")
        if kind == "text":
            _require(isinstance(self.content.get("text"), str),
                     f"item {self.item_id}: text content needs a string 'text' field")
        elif kind == "image":
            _require(isinstance(self.content.get("path"), str),
                     f"item {self.item_id}: image content needs a string 'path' field")
        elif kind == "vqa":
            _require(isinstance(self.content.get("question"), str)
                     and isinstance(self.content.get("image"), str),
                     f"item {self.item_id}: vqa content needs 'question' and 'image' strings")
        elif kind == "features":
            values = self.content.get("values")
            _require(isinstance(values, (list, tuple)) and len(values) > 0
                     and all(isinstance(v, (int, float)) for v in values),
                     f"item {self.item_id}: features content needs a non-empty numeric 'values' list")
        _require(len(self.label_space) >= 2,
                 f"item {self.item_id}: label_space needs at least two labels")
        if self.hidden_truth is not None:
            _require(0 <= self.hidden_truth < len(self.label_space),
                     f"item {self.item_id}: hidden_truth {self.hidden_truth} outside label space")

    def to_record(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "item_id": self.item_id,
            "content": dict(self.content),
            "label_space": list(self.label_space),
            "hidden_truth": self.hidden_truth,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "Item":
        return cls(
            item_id=record["item_id"],
            content=record["content"],
            label_space=tuple(record["label_space"]),
            hidden_truth=record.get("hidden_truth"),
        )


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of items with ids exactly 0..N-1."""

    items: tuple[Item, ...]

    def __post_init__(self) -> None:
        _require(len(self.items) > 0, "dataset is empty")
        ids = [item.item_id for item in self.items]
        seen: set[int] = set()
        for item_id in ids:
            _require(item_id not in seen, f"duplicate item_id {item_id}")
            seen.add(item_id)
        _require(seen == set(range(len(self.items))),
                 "item ids must be exactly 0..N-1 with no gaps")

    @property
    def n(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[Item]:
        return iter(self.items)

    def __getitem__(self, item_id: int) -> Item:
        item = self.items[item_id]
        if item.item_id != item_id:
            # Items may be stored out of order; fall back to a scan.
            for candidate in self.items:
                if candidate.item_id == item_id:
                    return candidate
            raise DataError(f"no item with id {item_id}")
        return item


@dataclass(frozen=True)
class AnnotationRecord:
    """One machine annotation. ``machine_label`` is None iff parsing failed."""

    item_id: int
    machine_label: int | None
    strategy: str
    backend_id: str
    parse_ok: bool
    reasoning: str | None = None

    def __post_init__(self) -> None:
        _require(self.strategy in ANNOTATION_STRATEGIES,
                 f"unknown annotation strategy {self.strategy!r}")
        if self.parse_ok:
            _require(self.machine_label is not None,
                     f"item {self.item_id}: parse_ok annotation must carry a label")

    def to_record(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "item_id": self.item_id,
            "machine_label": self.machine_label,
            "reasoning": self.reasoning,
            "strategy": self.strategy,
            "backend_id": self.backend_id,
            "parse_ok": self.parse_ok,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "AnnotationRecord":
        return cls(
            item_id=record["item_id"],
            machine_label=record["machine_label"],
            strategy=record["strategy"],
            backend_id=record["backend_id"],
            parse_ok=record["parse_ok"],
            reasoning=record.get("reasoning"),
        )


@dataclass(frozen=True)
class ReviewRecord:
    """One human decision about one item."""

    item_id: int
    human_label: int
    reviewer_id: str
    timestamp: str

    def to_record(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "item_id": self.item_id,
            "human_label": self.human_label,
            "reviewer_id": self.reviewer_id,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "ReviewRecord":
        return cls(
            item_id=record["item_id"],
            human_label=record["human_label"],
            reviewer_id=record["reviewer_id"],
            timestamp=record["timestamp"],
        )


@dataclass(frozen=True)
class CorrectedRecord:
    """Final label for one item plus the sampling state that produced it.

    ``machine_label`` is kept even when a human overrode it: downstream
    losses weight the machine-label loss term separately from the final
    one, so both labels must survive correction.
    """

    item_id: int
    final_label: int | None
    source: str  # "human" or "machine"
    machine_label: int | None
    review_prob: float
    reviewed: int
    error_estimate: float

    def __post_init__(self) -> None:
        _require(self.source in ("human", "machine"),
                 f"item {self.item_id}: source must be 'human' or 'machine'")
        _require(self.reviewed in (0, 1),
                 f"item {self.item_id}: reviewed flag must be 0 or 1")
        _require((self.source == "human") == (self.reviewed == 1),
                 f"item {self.item_id}: source and reviewed flag disagree")
        _require(0.0 <= self.review_prob <= 1.0,
                 f"item {self.item_id}: review_prob outside [0, 1]")

    def to_record(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "item_id": self.item_id,
            "final_label": self.final_label,
            "source": self.source,
            "machine_label": self.machine_label,
            "review_prob": self.review_prob,
            "reviewed": self.reviewed,
            "error_estimate": self.error_estimate,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "CorrectedRecord":
        return cls(
            item_id=record["item_id"],
            final_label=record["final_label"],
            source=record["source"],
            machine_label=record["machine_label"],
            review_prob=record["review_prob"],
            reviewed=record["reviewed"],
            error_estimate=record["error_estimate"],
        )


@dataclass(frozen=True)
class CorrectedDataset:
    """Correction output for a full dataset, ordered by item_id."""

    records: tuple[CorrectedRecord, ...]

    def __post_init__(self) -> None:
        ids = [r.item_id for r in self.records]
        _require(ids == sorted(set(ids)), "corrected records must be unique and sorted by item_id")

    @property
    def n(self) -> int:
        return len(self.records)

    def final_labels(self) -> list[int | None]:
        return [r.final_label for r in self.records]

    def __iter__(self) -> Iterator[CorrectedRecord]:
        return iter(self.records)


# ---------------------------------------------------------------------------
# JSONL persistence
# ---------------------------------------------------------------------------

def canonical_json(record: Mapping) -> str:
    """Serialize a record with stable key order so artifacts are byte-stable."""
    return json.dumps(record, sort_keys=True, ensure_ascii=True, separators=(",", ":"))


def write_jsonl(path: Path | str, records: Iterable[Mapping]) -> int:
    """Write records to a JSONL file, one canonical JSON object per line.

    Returns the number of records written.  Writes to a temporary file and
    renames so a crash cannot leave a half-written artifact behind.
    """
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    count = 0
    with tmp.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(canonical_json(record))
            fh.write("\n")
            count += 1
    tmp.replace(path)
    return count


def read_jsonl(path: Path | str) -> list[dict]:
    """Read a JSONL file, validating JSON syntax and schema_version per line."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(record, dict):
                raise DataError(f"{path}:{lineno}: record must be a JSON object")
            version = record.get("schema_version")
            if version != SCHEMA_VERSION:
                raise DataError(
                    f"{path}:{lineno}: unsupported schema_version {version!r}"
                    f" (expected {SCHEMA_VERSION})")
            records.append(record)
    return records


def load_dataset(path: Path | str, fmt: str = "jsonl") -> Dataset:
    """Load a dataset file. Only the documented JSONL format is supported."""
    if fmt != "jsonl":
        raise DataError(f"unsupported dataset format {fmt!r}")
    records = read_jsonl(path)
    if not records:
        raise DataError(f"{path}: dataset file has no records")
    try:
        items = tuple(Item.from_record(r) for r in records)
    except KeyError as exc:
        raise DataError(f"{path}: record missing field {exc}") from exc
    return Dataset(items=items)


def save_dataset(dataset: Dataset, path: Path | str) -> None:
    write_jsonl(path, (item.to_record() for item in dataset))


def load_annotations(path: Path | str) -> list[AnnotationRecord]:
    return [AnnotationRecord.from_record(r) for r in read_jsonl(path)]


def save_annotations(records: Sequence[AnnotationRecord], path: Path | str) -> None:
    write_jsonl(path, (r.to_record() for r in records))


def load_reviews(path: Path | str) -> list[ReviewRecord]:
    return [ReviewRecord.from_record(r) for r in read_jsonl(path)]


def save_reviews(records: Sequence[ReviewRecord], path: Path | str) -> None:
    write_jsonl(path, (r.to_record() for r in records))


def load_corrected(path: Path | str) -> CorrectedDataset:
    return CorrectedDataset(tuple(CorrectedRecord.from_record(r) for r in read_jsonl(path)))


def save_corrected(corrected: CorrectedDataset, path: Path | str) -> None:
    write_jsonl(path, (r.to_record() for r in corrected))


# ---------------------------------------------------------------------------
# Correction and budget arithmetic
# ---------------------------------------------------------------------------

def apply_correction(
    annotations: Sequence[AnnotationRecord],
    review_probs: Sequence[float],
    indicators: Sequence[int],
    error_estimates: Sequence[float],
    reviews: Mapping[int, ReviewRecord] | Sequence[ReviewRecord],
) -> CorrectedDataset:
    """Merge machine annotations with human reviews into final labels.

    Items whose indicator is 1 take the reviewer's label (source "human");
    everything else keeps the machine label (source "machine").  A selected
    item without a matching review is an error: correction is only defined
    once the review queue has drained.
    """
    if not isinstance(reviews, Mapping):
        reviews = {r.item_id: r for r in reviews}
    n = len(annotations)
    if not (len(review_probs) == len(indicators) == len(error_estimates) == n):
        raise DataError("annotations, review_probs, indicators, and error_estimates"
                        " must have equal length")
    ordered = sorted(annotations, key=lambda a: a.item_id)
    records = []
    for annotation in ordered:
        i = annotation.item_id
        if i >= n:
            raise DataError(f"annotation item_id {i} outside 0..{n - 1}")
        selected = int(indicators[i])
        if selected == 1:
            review = reviews.get(i)
            if review is None:
                raise DataError(f"item {i} was selected for review but has no review record")
            final_label: int | None = review.human_label
            source = "human"
        else:
            final_label = annotation.machine_label
            source = "machine"
        records.append(CorrectedRecord(
            item_id=i,
            final_label=final_label,
            source=source,
            machine_label=annotation.machine_label,
            review_prob=float(review_probs[i]),
            reviewed=selected,
            error_estimate=float(error_estimates[i]),
        ))
    return CorrectedDataset(tuple(records))


def ideal_budget(machine_accuracy: float, n: int, buffer: float = 0.0) -> int:
    """Smallest review budget expected to cover all machine errors.

    Computes ceil((1 - machine_accuracy + buffer) * n), clamped to n.  A
    tiny epsilon is subtracted before the ceiling so that float artifacts
    like 0.12 * 50000 == 6000.000000000001 do not buy one extra review.
    """
    if not 0.0 <= machine_accuracy <= 1.0:
        raise DataError(f"machine_accuracy must be in [0, 1], got {machine_accuracy}")
    if n <= 0:
        raise DataError(f"n must be positive, got {n}")
    if buffer < 0.0:
        raise DataError(f"buffer must be non-negative, got {buffer}")
    raw = (1.0 - machine_accuracy + buffer) * n
    budget = math.ceil(raw - 1e-9)
    return max(0, min(n, budget))

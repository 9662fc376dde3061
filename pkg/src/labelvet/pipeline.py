"""End-to-end run orchestration.

A *run* is a directory holding every artifact of one annotate -> criticize ->
sample -> review -> correct -> export pass over a dataset:

    <output_dir>/<run_id>/
        manifest.json      run configuration + config hash (written once)
        state.json         {"run_id", "stage"} -- the only mutable file
        dataset.jsonl      frozen copy of the input dataset
        annotations.jsonl  machine labels
        criticisms.jsonl   error estimates / decisions
        plan.jsonl         sampling plan (probabilities + indicator draws)
        reviews.jsonl      append-only human review log
        corrected.jsonl    final labels after correction
        model.json         optional trained classifier
        export/            deterministic export bundle

Stages move strictly forward:

    created -> annotated -> criticized -> sampled -> reviewing -> corrected
    (-> trained)

Crash safety: every artifact is written atomically (temp file + rename)
except ``reviews.jsonl`` which is append-only; on load, progress that can be
derived from artifacts (pending queue, budget consumed) is recomputed from
the files rather than trusted from ``state.json``, so a crash between an
append and a state update cannot lose or duplicate work.  Re-running any
stage command on a run that already passed that stage is a no-op, which makes
every CLI command idempotent and safe to retry.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from . import metrics as metrics_mod
from .backends import (
    BackendConfig,
    CriticismRecord,
    annotate_dataset,
    criticize_dataset,
    load_criticisms,
    save_criticisms,
)
from .data import (
    DataError,
    Dataset,
    ReviewRecord,
    apply_correction,
    canonical_json,
    load_annotations,
    load_corrected,
    load_dataset,
    load_reviews,
    save_annotations,
    save_corrected,
    save_dataset,
)
from .sampling import SAMPLING_RULES, SamplingPlan, build_plan
from .simulator import SimulatorConfig, simulate_review
from .trainer import ModelParams, TrainConfig, featurize, train

STAGES = (
    "created",
    "annotated",
    "criticized",
    "sampled",
    "reviewing",
    "corrected",
    "trained",
)

REVIEW_MODES = ("interactive", "simulated_oracle", "import_file")

# Timestamp recorded for reviews produced by the built-in oracle.  A fixed
# value keeps simulated runs byte-for-byte reproducible.
_ORACLE_TIMESTAMP = "1970-01-01T00:00:00Z"

_MANIFEST = "manifest.json"
_STATE = "state.json"
_DATASET = "dataset.jsonl"
_ANNOTATIONS = "annotations.jsonl"
_CRITICISMS = "criticisms.jsonl"
_PLAN = "plan.jsonl"
_REVIEWS = "reviews.jsonl"
_CORRECTED = "corrected.jsonl"
_MODEL = "model.json"
_EXPORT_DIR = "export"


class PipelineError(RuntimeError):
    """Raised for invalid configurations or out-of-order run operations."""


class StageError(PipelineError):
    """An operation was attempted at the wrong stage."""

    def __init__(self, message: str, stage: str):
        super().__init__(message)
        self.stage = stage


class ReviewConflictError(PipelineError):
    """The same item was submitted for review twice."""


def stage_index(stage: str) -> int:
    try:
        return STAGES.index(stage)
    except ValueError:
        raise PipelineError(f"unknown stage {stage!r}") from None


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AgentConfig:
    """One model role (annotator or criticizer): a strategy plus a backend."""

    strategy: str
    backend: BackendConfig

    @classmethod
    def from_dict(cls, raw: Mapping, default_id: str) -> "AgentConfig":
        raw = dict(raw)
        strategy = raw.pop("strategy")
        raw.setdefault("backend_id", default_id)
        simulator = raw.get("simulator")
        if isinstance(simulator, Mapping):
            raw["simulator"] = SimulatorConfig(**simulator)
        return cls(strategy=strategy, backend=BackendConfig(**raw))

    def to_dict(self) -> dict:
        out = {"strategy": self.strategy, "backend_id": self.backend.backend_id,
               "endpoint": self.backend.endpoint}
        if self.backend.model is not None:
            out["model"] = self.backend.model
        if self.backend.simulator is not None:
            out["simulator"] = asdict(self.backend.simulator)
        for name in ("top_p", "temperature", "top_k", "max_new_tokens",
                     "max_retries", "retry_delay", "timeout"):
            out[name] = getattr(self.backend, name)
        return out


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to produce a run, loadable from YAML."""

    dataset_path: str
    output_dir: str
    annotator: AgentConfig
    criticizer: AgentConfig
    rule: str = "threshold"
    budget: int | None = None
    budget_proportion: float | None = None
    sharpness: float = 10.0
    draw_mode: str = "hard_cap"
    sampling_seed: int = 0
    review_mode: str = "simulated_oracle"
    import_path: str | None = None
    reviewer_id: str = "oracle"
    include_curve: bool = False
    curve_seed: int = 0
    run_id: str | None = None

    def __post_init__(self):
        if self.rule not in SAMPLING_RULES:
            raise PipelineError(f"unknown sampling rule {self.rule!r}")
        if (self.budget is None) == (self.budget_proportion is None):
            raise PipelineError("set exactly one of budget, budget_proportion")
        if self.budget is not None and self.budget < 0:
            raise PipelineError("budget must be >= 0")
        if self.budget_proportion is not None and not 0 <= self.budget_proportion <= 1:
            raise PipelineError("budget_proportion must lie in [0, 1]")
        if self.review_mode not in REVIEW_MODES:
            raise PipelineError(f"unknown review mode {self.review_mode!r}")
        if self.review_mode == "import_file" and not self.import_path:
            raise PipelineError("import_file review mode needs import_path")
        if self.rule == "ppl_priority" and self.criticizer.strategy != "cot_ppl":
            raise PipelineError("ppl_priority sampling needs the cot_ppl criticizer")
        if self.rule != "ppl_priority" and self.criticizer.strategy == "cot_ppl":
            raise PipelineError("cot_ppl criticism only drives ppl_priority sampling")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "PipelineConfig":
        raw = dict(raw)
        annotator = AgentConfig.from_dict(raw.pop("annotator"), "annotator")
        criticizer = AgentConfig.from_dict(raw.pop("criticizer"), "criticizer")
        sampling = dict(raw.pop("sampling", {}))
        review = dict(raw.pop("review", {}))
        export = dict(raw.pop("export", {}))
        kwargs = dict(
            dataset_path=raw.pop("dataset_path"),
            output_dir=raw.pop("output_dir"),
            annotator=annotator,
            criticizer=criticizer,
        )
        for name in ("rule", "budget", "budget_proportion", "sharpness",
                     "draw_mode", "sampling_seed"):
            if name in sampling:
                kwargs[name] = sampling.pop(name)
        if sampling:
            raise PipelineError(f"unknown sampling options: {sorted(sampling)}")
        if "mode" in review:
            kwargs["review_mode"] = review.pop("mode")
        for name in ("import_path", "reviewer_id"):
            if name in review:
                kwargs[name] = review.pop(name)
        if review:
            raise PipelineError(f"unknown review options: {sorted(review)}")
        for name in ("include_curve", "curve_seed"):
            if name in export:
                kwargs[name] = export.pop(name)
        if export:
            raise PipelineError(f"unknown export options: {sorted(export)}")
        if "run_id" in raw:
            kwargs["run_id"] = raw.pop("run_id")
        if raw:
            raise PipelineError(f"unknown config keys: {sorted(raw)}")
        return cls(**kwargs)

    @classmethod
    def from_yaml(cls, path: Path | str) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as handle:
            raw = yaml.safe_load(handle)
        if not isinstance(raw, Mapping):
            raise PipelineError(f"{path}: config must be a mapping")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "dataset_path": self.dataset_path,
            "output_dir": self.output_dir,
            "annotator": self.annotator.to_dict(),
            "criticizer": self.criticizer.to_dict(),
            "sampling": {
                "rule": self.rule,
                "budget": self.budget,
                "budget_proportion": self.budget_proportion,
                "sharpness": self.sharpness,
                "draw_mode": self.draw_mode,
                "sampling_seed": self.sampling_seed,
            },
            "review": {
                "mode": self.review_mode,
                "import_path": self.import_path,
                "reviewer_id": self.reviewer_id,
            },
            "export": {
                "include_curve": self.include_curve,
                "curve_seed": self.curve_seed,
            },
        }

    def config_hash(self) -> str:
        """Content hash identifying the run; ignores where the run is stored."""
        payload = self.to_dict()
        payload.pop("output_dir")
        return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()

    def resolved_run_id(self) -> str:
        return self.run_id if self.run_id else f"run-{self.config_hash()[:12]}"


# ---------------------------------------------------------------------------
# Run state
# ---------------------------------------------------------------------------

@dataclass
class RunState:
    run_id: str
    stage: str

    def to_dict(self) -> dict:
        return {"schema_version": 1, "run_id": self.run_id, "stage": self.stage}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "RunState":
        return cls(run_id=str(raw["run_id"]), stage=str(raw["stage"]))


def _write_json_atomic(path: Path, payload: Mapping) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(canonical_json(payload) + "\n", encoding="utf-8")
    tmp.replace(path)


class Run:
    """One pipeline run rooted at a directory; all mutation goes through here."""

    def __init__(self, run_dir: Path, config: PipelineConfig, state: RunState):
        self.run_dir = Path(run_dir)
        self.config = config
        self.state = state
        self._lock = threading.Lock()

    # -- creation / loading -------------------------------------------------

    @classmethod
    def create(cls, config: PipelineConfig) -> "Run":
        run_id = config.resolved_run_id()
        run_dir = Path(config.output_dir) / run_id
        if run_dir.exists():
            raise PipelineError(f"run directory already exists: {run_dir}")
        dataset = load_dataset(config.dataset_path)
        run_dir.mkdir(parents=True)
        manifest = {
            "schema_version": 1,
            "run_id": run_id,
            "config": config.to_dict(),
            "config_hash": config.config_hash(),
            "n_items": dataset.n,
        }
        save_dataset(dataset, run_dir / _DATASET)
        _write_json_atomic(run_dir / _MANIFEST, manifest)
        state = RunState(run_id=run_id, stage="created")
        _write_json_atomic(run_dir / _STATE, state.to_dict())
        return cls(run_dir, config, state)

    @classmethod
    def load(cls, run_dir: Path | str) -> "Run":
        run_dir = Path(run_dir)
        manifest_path = run_dir / _MANIFEST
        if not manifest_path.is_file():
            raise PipelineError(f"not a run directory: {run_dir}")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        config = PipelineConfig.from_dict(manifest["config"])
        if config.config_hash() != manifest["config_hash"]:
            raise PipelineError(f"manifest config hash mismatch in {run_dir}")
        state = RunState.from_dict(
            json.loads((run_dir / _STATE).read_text(encoding="utf-8")))
        run = cls(run_dir, config, state)
        run._advance_if_reviews_complete()
        return run

    @classmethod
    def open(cls, config: PipelineConfig) -> "Run":
        """Load the run this config describes, or create it.

        Resuming with a *different* config under the same run id is refused:
        a run's inputs are frozen at creation.
        """
        run_dir = Path(config.output_dir) / config.resolved_run_id()
        if not run_dir.exists():
            return cls.create(config)
        run = cls.load(run_dir)
        if run.config.config_hash() != config.config_hash():
            raise PipelineError(
                f"run {run.state.run_id} already exists with a different "
                "configuration; change run_id or output_dir to start fresh")
        return run

    # -- paths and cached artifacts -----------------------------------------

    def path(self, name: str) -> Path:
        return self.run_dir / name

    @property
    def stage(self) -> str:
        return self.state.stage

    def _set_stage(self, stage: str) -> None:
        if stage_index(stage) < stage_index(self.state.stage):
            raise StageError(
                f"cannot move stage backwards ({self.state.stage} -> {stage})",
                self.state.stage)
        self.state.stage = stage
        _write_json_atomic(self.path(_STATE), self.state.to_dict())

    def _require_stage(self, minimum: str, operation: str) -> None:
        if stage_index(self.state.stage) < stage_index(minimum):
            raise StageError(
                f"{operation} requires stage >= {minimum!r}, "
                f"run is at {self.state.stage!r}", self.state.stage)

    def dataset(self) -> Dataset:
        return load_dataset(self.path(_DATASET))

    def annotations(self):
        self._require_stage("annotated", "reading annotations")
        return load_annotations(self.path(_ANNOTATIONS))

    def criticisms(self) -> list[CriticismRecord]:
        self._require_stage("criticized", "reading criticisms")
        return load_criticisms(self.path(_CRITICISMS))

    def plan(self) -> SamplingPlan:
        self._require_stage("sampled", "reading the sampling plan")
        from .data import read_jsonl

        return SamplingPlan.from_records(read_jsonl(self.path(_PLAN)))

    def reviews(self) -> dict[int, ReviewRecord]:
        """Replay the append-only review log; first write per item wins."""
        path = self.path(_REVIEWS)
        out: dict[int, ReviewRecord] = {}
        if path.is_file():
            for record in load_reviews(path):
                out.setdefault(record.item_id, record)
        return out

    def corrected(self):
        self._require_stage("corrected", "reading corrected labels")
        return load_corrected(self.path(_CORRECTED))

    # -- stage transitions ---------------------------------------------------

    def ensure_annotated(self, transport=None) -> None:
        if stage_index(self.stage) >= stage_index("annotated"):
            return
        dataset = self.dataset()
        records = annotate_dataset(
            dataset, self.config.annotator.strategy,
            self.config.annotator.backend, transport=transport)
        save_annotations(records, self.path(_ANNOTATIONS))
        self._set_stage("annotated")

    def ensure_criticized(self, transport=None) -> None:
        self.ensure_annotated(transport=transport)
        if stage_index(self.stage) >= stage_index("criticized"):
            return
        records = criticize_dataset(
            self.dataset(), self.annotations(),
            self.config.criticizer.strategy,
            self.config.criticizer.backend, transport=transport)
        save_criticisms(records, self.path(_CRITICISMS))
        self._set_stage("criticized")

    def resolved_budget(self, n: int) -> int:
        if self.config.budget is not None:
            return min(self.config.budget, n)
        return int(self.config.budget_proportion * n)

    def ensure_sampled(self, transport=None) -> None:
        self.ensure_criticized(transport=transport)
        if stage_index(self.stage) >= stage_index("sampled"):
            return
        criticisms = self.criticisms()
        budget = self.resolved_budget(len(criticisms))
        if self.config.rule == "ppl_priority":
            plan = build_plan(
                None, budget, "ppl_priority", self.config.sampling_seed,
                mode=self.config.draw_mode,
                decisions=[c.decision for c in criticisms],
                perplexities=[c.perplexity for c in criticisms])
        else:
            plan = build_plan(
                [c.error_estimate for c in criticisms], budget,
                self.config.rule, self.config.sampling_seed,
                mode=self.config.draw_mode, sharpness=self.config.sharpness)
        from .data import write_jsonl

        write_jsonl(self.path(_PLAN), plan.to_records())
        self._set_stage("sampled")

    def ensure_reviewing(self, transport=None) -> None:
        self.ensure_sampled(transport=transport)
        if stage_index(self.stage) >= stage_index("reviewing"):
            return
        self._set_stage("reviewing")
        self._advance_if_reviews_complete()

    # -- reviewing ------------------------------------------------------------

    def selected_items(self) -> list[int]:
        return [i for i, d in enumerate(self.plan().indicators) if d == 1]

    def pending_items(self) -> list[int]:
        """Selected items with no review yet, in queue priority order."""
        if stage_index(self.stage) < stage_index("sampled"):
            raise StageError(
                f"review queue is not available at stage {self.stage!r}",
                self.stage)
        plan = self.plan()
        reviewed = self.reviews()
        pending = [i for i, d in enumerate(plan.indicators)
                   if d == 1 and i not in reviewed]
        if plan.rule == "ppl_priority":
            criticisms = self.criticisms()
            # Most suspect first: flagged-wrong low perplexity, then
            # flagged-right high perplexity; item id breaks ties.
            def key(i: int) -> tuple:
                c = criticisms[i]
                flagged = 0 if (c.decision or "").lower() == "yes" else 1
                ppl = float(c.perplexity)
                return (flagged, ppl if flagged == 0 else -ppl, i)

            pending.sort(key=key)
        else:
            eps = plan.error_estimates
            pending.sort(key=lambda i: (-eps[i], i))
        return pending

    def reviews_used(self) -> int:
        return len(self.reviews())

    def review_queue(self, page: int = 0, page_size: int = 20) -> dict:
        """One page of the prioritized pending queue, with item context."""
        if page < 0 or page_size <= 0:
            raise PipelineError("page must be >= 0 and page_size >= 1")
        self._advance_if_reviews_complete()
        pending = self.pending_items()
        dataset = self.dataset()
        annotations = {a.item_id: a for a in self.annotations()}
        criticisms = {c.item_id: c for c in self.criticisms()}
        start = page * page_size
        items = []
        for item_id in pending[start:start + page_size]:
            item = dataset[item_id]
            ann = annotations[item_id]
            crit = criticisms[item_id]
            label_name = (None if ann.machine_label is None
                          else item.label_space[ann.machine_label])
            items.append({
                "item_id": item_id,
                "content_kind": item.content["kind"],
                "content": dict(item.content),
                "label_space": list(item.label_space),
                "machine_label": ann.machine_label,
                "machine_label_name": label_name,
                "machine_reasoning": ann.reasoning,
                "critic_reasoning": crit.reasoning,
                "error_estimate": crit.error_estimate,
                "decision": crit.decision,
                "perplexity": crit.perplexity,
            })
        plan = self.plan()
        return {
            "run_id": self.state.run_id,
            "stage": self.stage,
            "page": page,
            "page_size": page_size,
            "total_pending": len(pending),
            "budget": plan.budget,
            "reviews_used": self.reviews_used(),
            "items": items,
        }

    def submit_review(self, item_id: int, label: int, reviewer: str,
                      timestamp: str | None = None) -> dict:
        """Record one human review; finalizes correction when the queue drains."""
        with self._lock:
            if self.stage != "reviewing":
                raise StageError(
                    f"reviews can only be submitted at stage 'reviewing', "
                    f"run is at {self.stage!r}", self.stage)
            dataset = self.dataset()
            if not 0 <= item_id < dataset.n:
                raise PipelineError(f"unknown item id {item_id}")
            plan = self.plan()
            if plan.indicators[item_id] != 1:
                raise PipelineError(
                    f"item {item_id} was not selected for review")
            item = dataset[item_id]
            if not isinstance(label, int) or isinstance(label, bool):
                raise DataError("review label must be an integer index")
            if not 0 <= label < len(item.label_space):
                raise DataError(
                    f"label {label} outside label space of size "
                    f"{len(item.label_space)}")
            if item_id in self.reviews():
                raise ReviewConflictError(
                    f"item {item_id} already has a review")
            record = ReviewRecord(
                item_id=item_id, human_label=label, reviewer_id=reviewer,
                timestamp=timestamp or _utc_now())
            with open(self.path(_REVIEWS), "a", encoding="utf-8") as handle:
                handle.write(canonical_json(record.to_record()) + "\n")
            self._advance_if_reviews_complete()
            return {
                "run_id": self.state.run_id,
                "item_id": item_id,
                "stage": self.stage,
                "reviews_used": self.reviews_used(),
                "pending": len(self.pending_items())
                if self.stage == "reviewing" else 0,
            }

    def _advance_if_reviews_complete(self) -> None:
        if self.stage != "reviewing":
            return
        plan = self.plan()
        reviewed = self.reviews()
        pending = [i for i, d in enumerate(plan.indicators)
                   if d == 1 and i not in reviewed]
        if pending:
            return
        corrected = apply_correction(
            self.annotations(), plan.review_probs, plan.indicators,
            plan.error_estimates, reviewed)
        save_corrected(corrected, self.path(_CORRECTED))
        self._set_stage("corrected")

    def run_oracle_reviews(self) -> int:
        """Answer every pending review with the item's hidden truth."""
        dataset = self.dataset()
        count = 0
        for item_id in list(self.pending_items()):
            truth = simulate_review(dataset[item_id])
            self.submit_review(item_id, truth, self.config.reviewer_id,
                               timestamp=_ORACLE_TIMESTAMP)
            count += 1
        return count

    def import_reviews(self, path: Path | str) -> int:
        """Feed reviews from a JSONL file into the pending queue.

        Records for items that already have an identical review are skipped,
        so re-importing the same file after a crash is harmless; records that
        contradict an existing review raise ``ReviewConflictError``.
        """
        imported = 0
        existing = self.reviews()
        for record in load_reviews(path):
            prior = existing.get(record.item_id)
            if prior is not None:
                if prior.human_label == record.human_label:
                    continue
                raise ReviewConflictError(
                    f"item {record.item_id} already reviewed with a "
                    "different label")
            self.submit_review(record.item_id, record.human_label,
                               record.reviewer_id, timestamp=record.timestamp)
            existing[record.item_id] = record
            imported += 1
        return imported

    # -- metrics and export ----------------------------------------------------

    def _reference_labels(self) -> tuple[str, dict[int, int]]:
        """Best available reference: hidden truth, else the reviewed subset."""
        dataset = self.dataset()
        truth = {item.item_id: item.hidden_truth for item in dataset.items}
        if all(v is not None for v in truth.values()):
            return "hidden_truth", truth
        reviewed = {i: r.human_label for i, r in self.reviews().items()}
        if reviewed:
            return "reviewed_subset", reviewed
        return "none", {}

    def compute_metrics(self) -> dict:
        self._require_stage("corrected", "computing metrics")
        plan = self.plan()
        annotations = {a.item_id: a for a in self.annotations()}
        corrected = {r.item_id: r for r in self.corrected()}
        source, reference = self._reference_labels()
        payload: dict = {
            "schema_version": 1,
            "run_id": self.state.run_id,
            "n_items": self.dataset().n,
            "budget": plan.budget,
            "rule": plan.rule,
            "reviews_used": self.reviews_used(),
            "reference": source,
            "machine_quality": None,
            "corrected_quality": None,
            "quality_gain": None,
            "quality_gain_degenerate": None,
        }
        if reference:
            ids = sorted(reference)
            ref = [reference[i] for i in ids]
            machine = [annotations[i].machine_label for i in ids]
            final = [corrected[i].final_label for i in ids]
            payload["machine_quality"] = metrics_mod.quality(ref, machine)
            payload["corrected_quality"] = metrics_mod.quality(ref, final)
            gain = metrics_mod.quality_gain(ref, machine, final)
            payload["quality_gain"] = gain.value
            payload["quality_gain_degenerate"] = gain.degenerate
        reviews = self.reviews()
        if reviews:
            agree = [int(annotations[i].machine_label == r.human_label)
                     for i, r in reviews.items()]
            payload["review_agreement"] = float(np.mean(agree))
        else:
            payload["review_agreement"] = None
        return payload

    def budget_curve(self):
        """Sweep the quality gain over every budget, using hidden truth."""
        self._require_stage("corrected", "computing the budget curve")
        source, reference = self._reference_labels()
        if source != "hidden_truth":
            raise PipelineError(
                "budget curve needs hidden truth labels on every item")
        dataset = self.dataset()
        ids = range(dataset.n)
        ref = [reference[i] for i in ids]
        annotations = self.annotations()
        machine = [annotations[i].machine_label for i in ids]
        criticisms = self.criticisms()
        if self.config.rule == "ppl_priority":
            return metrics_mod.budget_curve(
                ref, machine, None, "ppl_priority",
                seed=self.config.curve_seed,
                decisions=[c.decision for c in criticisms],
                perplexities=[c.perplexity for c in criticisms])
        return metrics_mod.budget_curve(
            ref, machine, [c.error_estimate for c in criticisms],
            self.config.rule, seed=self.config.curve_seed,
            sharpness=self.config.sharpness)

    def export(self) -> Path:
        """Write the deterministic export bundle and return its directory."""
        self._require_stage("corrected", "export")
        export_dir = self.path(_EXPORT_DIR)
        export_dir.mkdir(exist_ok=True)
        corrected_src = self.path(_CORRECTED).read_bytes()
        tmp = export_dir / "corrected.jsonl.tmp"
        tmp.write_bytes(corrected_src)
        tmp.replace(export_dir / "corrected.jsonl")
        _write_json_atomic(export_dir / "metrics.json", self.compute_metrics())
        if self.config.include_curve:
            curve = self.budget_curve()
            tmp = export_dir / "curve.csv.tmp"
            tmp.write_text("\n".join(curve_csv_lines(curve)) + "\n",
                           encoding="utf-8")
            tmp.replace(export_dir / "curve.csv")
        return export_dir

    def export_payload(self) -> dict:
        """Export bundle as one JSON document (the HTTP representation)."""
        from .data import read_jsonl

        export_dir = self.export()
        return {
            "run_id": self.state.run_id,
            "metrics": json.loads(
                (export_dir / "metrics.json").read_text(encoding="utf-8")),
            "corrected": read_jsonl(export_dir / "corrected.jsonl"),
        }

    # -- training ----------------------------------------------------------------

    def train_model(self, epochs: int = 500, learning_rate: float = 0.5,
                    l2: float = 0.1, embeddings=None) -> Path:
        """Fit the bundled classifier on corrected labels; features only."""
        corrected = self.corrected()
        dataset = self.dataset()
        usable = [r for r in corrected if r.final_label is not None]
        if not usable:
            raise PipelineError("no usable labels to train on")
        features = np.stack([featurize(dataset[r.item_id], embeddings)
                             for r in usable])
        labels = np.array([r.final_label for r in usable], dtype=int)
        n_classes = len(dataset[usable[0].item_id].label_space)
        config = TrainConfig(n_classes=n_classes, learning_rate=learning_rate,
                             epochs=epochs, l2=l2)
        result = train(features, config, labels=labels)
        payload = {
            "schema_version": 1,
            "run_id": self.state.run_id,
            "n_classes": n_classes,
            "n_features": int(features.shape[1]),
            "n_examples": int(labels.size),
            "skipped_unlabeled": int(corrected.n - len(usable)),
            "weights": [[float(v) for v in row] for row in result.params.weights],
            "bias": [float(v) for v in result.params.bias],
            "final_objective": float(result.objective_history[-1]),
        }
        _write_json_atomic(self.path(_MODEL), payload)
        if self.stage == "corrected":
            self._set_stage("trained")
        return self.path(_MODEL)

    def load_model(self) -> ModelParams:
        payload = json.loads(self.path(_MODEL).read_text(encoding="utf-8"))
        return ModelParams(weights=np.array(payload["weights"], dtype=float),
                           bias=np.array(payload["bias"], dtype=float))

    # -- summaries -----------------------------------------------------------------

    def summary(self) -> dict:
        out = {
            "run_id": self.state.run_id,
            "stage": self.stage,
            "n_items": self.dataset().n,
            "rule": self.config.rule,
            "review_mode": self.config.review_mode,
            "budget": None,
            "reviews_used": self.reviews_used(),
            "pending": 0,
        }
        if stage_index(self.stage) >= stage_index("sampled"):
            plan = self.plan()
            out["budget"] = plan.budget
            if self.stage == "reviewing":
                out["pending"] = len(self.pending_items())
        return out


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def curve_csv_lines(curve) -> list[str]:
    """Render a budget curve as CSV lines (deterministic float repr)."""
    lines = ["budget,proportion,gain,degenerate"]
    for point in curve.points:
        lines.append(f"{point.budget},{point.proportion!r},"
                     f"{point.gain!r},{int(point.degenerate)}")
    lines.append(f"# area,{curve.area!r}")
    return lines


# ---------------------------------------------------------------------------
# Top-level drivers
# ---------------------------------------------------------------------------

def run_pipeline(config: PipelineConfig, transport=None) -> Run:
    """Drive a run as far as its review mode allows.

    ``interactive`` stops at the review stage (serve the API to continue);
    ``simulated_oracle`` and a complete ``import_file`` run to export.
    """
    run = Run.open(config)
    run.ensure_reviewing(transport=transport)
    if run.stage == "reviewing":
        if config.review_mode == "simulated_oracle":
            run.run_oracle_reviews()
        elif config.review_mode == "import_file":
            run.import_reviews(config.import_path)
    if stage_index(run.stage) >= stage_index("corrected"):
        run.export()
    return run


def discover_runs(runs_root: Path | str) -> list[Run]:
    """All run directories directly under a root, sorted by run id."""
    root = Path(runs_root)
    runs = []
    if root.is_dir():
        for child in sorted(root.iterdir()):
            if (child / _MANIFEST).is_file():
                runs.append(Run.load(child))
    return runs

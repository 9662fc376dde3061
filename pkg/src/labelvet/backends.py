"""Model backends: bracketed-output parsing, the chat HTTP client, and the
annotate/criticize operations.

A backend is either a chat-completion HTTP endpoint or the built-in
simulator (``endpoint="simulated"``).  Responses are expected to wrap
machine-readable fields in square brackets, with the value in the last
top-level bracket pair and any reasoning in the pair before it; chatty
text outside brackets is ignored.  Criticism strategies:

* black box: ``naive`` (error probability), ``cot`` (reasoning + error
  probability), ``mc`` (reasoning + 1..5 correctness grade), ``devil``
  (counter-reasoning against the annotator's explanation + probability).
* white box, needing token log-probabilities: ``naive_logit`` and
  ``cot_logit`` (yes/no decision; the error estimate is the renormalized
  yes-token probability), ``cot_ppl`` (yes/no decision plus the perplexity
  of the generated reasoning; no error estimate).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import httpx
import numpy as np

from . import prompts
from .data import SCHEMA_VERSION, AnnotationRecord, Dataset, Item, read_jsonl, write_jsonl
from .simulator import SimulatorConfig, simulate_error_estimate, simulate_label

BLACKBOX_STRATEGIES = ("naive", "cot", "mc", "devil")
WHITEBOX_STRATEGIES = ("naive_logit", "cot_logit", "cot_ppl")
CRITICISM_STRATEGIES = BLACKBOX_STRATEGIES + WHITEBOX_STRATEGIES


class ParseError(ValueError):
    """Raised when a backend response has no usable bracketed value."""


class BackendError(RuntimeError):
    """Raised when a backend cannot satisfy a request at all."""


class CapabilityError(BackendError):
    """Raised when a strategy needs backend features that are missing,
    e.g. a white-box strategy against a backend with no log-probabilities."""


# ---------------------------------------------------------------------------
# Bracketed-output parsing
# ---------------------------------------------------------------------------

def _top_level_segments(text: str) -> list[tuple[int, int]]:
    """(start, end) spans of complete top-level [...] pairs, in order."""
    spans = []
    depth = 0
    start = -1
    for i, ch in enumerate(text):
        if ch == "[":
            if depth == 0:
                start = i + 1
            depth += 1
        elif ch == "]" and depth > 0:
            depth -= 1
            if depth == 0:
                spans.append((start, i))
    return spans


@dataclass(frozen=True)
class Parsed:
    value: object
    reasoning: str | None
    clamped: bool
    value_span: tuple[int, int]
    reasoning_span: tuple[int, int] | None


def parse_bracketed(text: str, expect: str, label_space_size: int | None = None) -> Parsed:
    """Extract the value from the last top-level bracket pair.

    ``expect`` selects the value type: ``label`` (integer index within the
    label space), ``error_prob`` (float, clamped into [0, 1] with a flag),
    ``error_level`` (integer 1..5), or ``yes_no``.  The bracket pair before
    the value, when present, is returned as reasoning.
    """
    spans = _top_level_segments(text)
    if not spans:
        raise ParseError("no complete bracket pair in response")
    value_span = spans[-1]
    raw = text[value_span[0]:value_span[1]].strip()
    reasoning_span = spans[-2] if len(spans) >= 2 else None
    reasoning = text[reasoning_span[0]:reasoning_span[1]].strip() if reasoning_span else None
    clamped = False

    if expect == "label":
        if label_space_size is None:
            raise ValueError("label parsing needs label_space_size")
        try:
            value: object = int(raw)
        except ValueError as exc:
            raise ParseError(f"expected an integer label, got {raw!r}") from exc
        if not 0 <= value < label_space_size:
            raise ParseError(f"label {value} outside 0..{label_space_size - 1}")
    elif expect == "error_prob":
        try:
            number = float(raw)
        except ValueError as exc:
            raise ParseError(f"expected a probability, got {raw!r}") from exc
        if not np.isfinite(number):
            raise ParseError(f"probability {raw!r} is not finite")
        if number < 0.0 or number > 1.0:
            clamped = True
            number = min(1.0, max(0.0, number))
        value = number
    elif expect == "error_level":
        try:
            value = int(raw)
        except ValueError as exc:
            raise ParseError(f"expected a grade 1..5, got {raw!r}") from exc
        if not 1 <= value <= 5:
            raise ParseError(f"grade {value} outside 1..5")
    elif expect == "yes_no":
        word = raw.strip(" .!\"'").lower()
        if word not in ("yes", "no"):
            raise ParseError(f"expected Yes or No, got {raw!r}")
        value = word
    else:
        raise ValueError(f"unknown expectation {expect!r}")
    return Parsed(value=value, reasoning=reasoning, clamped=clamped,
                  value_span=value_span, reasoning_span=reasoning_span)


def map_error_level(level: int) -> float:
    """Map a 1..5 correctness grade onto an error probability.

    Grade 1 (definitely correct) maps to 0.0 and grade 5 (definitely
    wrong) to 1.0, linearly: (level - 1) / 4.
    """
    if not isinstance(level, (int, np.integer)) or not 1 <= level <= 5:
        raise ValueError(f"grade must be an integer in 1..5, got {level!r}")
    return (level - 1) / 4.0


def error_prob_from_yes_no(p_yes: float, p_no: float) -> float:
    """Renormalized probability that the label is wrong: p_yes / (p_yes + p_no).

    ``p_yes`` is the probability mass the backend put on answering "yes,
    the label is wrong"; scaling both inputs by a common factor does not
    change the result.
    """
    if p_yes < 0.0 or p_no < 0.0:
        raise ValueError("token probabilities must be non-negative")
    total = p_yes + p_no
    if total <= 0.0:
        raise ValueError("both yes and no probabilities are zero; the decision"
                         " carries no information")
    return p_yes / total


# ---------------------------------------------------------------------------
# Backend configuration and HTTP client
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BackendConfig:
    """How to reach one model backend and how to sample from it.

    ``endpoint`` is a chat-completion URL, or the literal string
    ``"simulated"`` to use the seeded simulator (``simulator`` config).
    """

    backend_id: str
    endpoint: str
    model: str = ""
    top_p: float = 0.9
    temperature: float = 0.7
    top_k: int = 50
    max_new_tokens: int = 500
    max_retries: int = 3
    retry_delay: float = 1.0
    timeout: float = 60.0
    simulator: SimulatorConfig | None = None

    def __post_init__(self) -> None:
        if not self.backend_id:
            raise ValueError("backend_id must be non-empty")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.temperature < 0.0:
            raise ValueError(f"temperature must be non-negative, got {self.temperature}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be at least 1, got {self.top_k}")
        if self.max_new_tokens < 1:
            raise ValueError(f"max_new_tokens must be at least 1, got {self.max_new_tokens}")
        if self.max_retries < 1:
            raise ValueError(f"max_retries must be at least 1, got {self.max_retries}")
        if self.retry_delay < 0.0:
            raise ValueError(f"retry_delay must be non-negative, got {self.retry_delay}")
        if self.timeout <= 0.0:
            raise ValueError(f"timeout must be positive, got {self.timeout}")

    @property
    def is_simulated(self) -> bool:
        return self.endpoint == "simulated"

    def simulator_config(self) -> SimulatorConfig:
        if not self.is_simulated:
            raise BackendError(f"backend {self.backend_id} is not simulated")
        return self.simulator if self.simulator is not None else SimulatorConfig()


@dataclass(frozen=True)
class TokenLogprob:
    token: str
    logprob: float
    top: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class ChatResponse:
    text: str
    tokens: tuple[TokenLogprob, ...] | None = None


def _build_payload(
    config: BackendConfig,
    messages: Sequence[Mapping[str, object]],
    want_logprobs: bool,
) -> dict:
    payload = {
        "model": config.model,
        "messages": list(messages),
        "top_p": config.top_p,
        "temperature": config.temperature,
        "top_k": config.top_k,
        "max_tokens": config.max_new_tokens,
    }
    if want_logprobs:
        payload["logprobs"] = True
    return payload


def _parse_chat_response(data: Mapping) -> ChatResponse:
    try:
        choice = data["choices"][0]
        text = choice["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise BackendError(f"malformed chat response: {exc}") from exc
    tokens = None
    logprobs = choice.get("logprobs")
    if logprobs and isinstance(logprobs, Mapping) and logprobs.get("content"):
        tokens = tuple(
            TokenLogprob(
                token=entry["token"],
                logprob=float(entry["logprob"]),
                top=tuple((alt["token"], float(alt["logprob"]))
                          for alt in entry.get("top_logprobs", [])),
            )
            for entry in logprobs["content"]
        )
    return ChatResponse(text=text, tokens=tokens)


def call_chat(
    config: BackendConfig,
    messages: Sequence[Mapping[str, object]],
    want_logprobs: bool = False,
    transport: httpx.BaseTransport | None = None,
) -> ChatResponse:
    """POST one chat completion, retrying transient failures.

    Transport errors, 5xx statuses, and malformed response bodies are
    retried up to ``config.max_retries`` attempts with a linear backoff;
    the last failure is re-raised as a ``BackendError``.
    """
    if config.is_simulated:
        raise BackendError("call_chat is for HTTP backends; this one is simulated")
    payload = _build_payload(config, messages, want_logprobs)
    last_error: Exception | None = None
    with httpx.Client(timeout=config.timeout, transport=transport) as client:
        for attempt in range(config.max_retries):
            if attempt > 0 and config.retry_delay > 0.0:
                time.sleep(config.retry_delay * attempt)
            try:
                response = client.post(config.endpoint, json=payload)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = BackendError(
                    f"server error {response.status_code} from {config.endpoint}")
                continue
            if response.status_code != 200:
                # Client-side errors will not improve on retry.
                raise BackendError(
                    f"backend rejected the request: {response.status_code}"
                    f" {response.text[:200]}")
            try:
                return _parse_chat_response(response.json())
            except (ValueError, BackendError) as exc:
                last_error = exc
    raise BackendError(f"backend {config.backend_id} failed after"
                       f" {config.max_retries} attempts: {last_error}")


# ---------------------------------------------------------------------------
# Criticism records
# ---------------------------------------------------------------------------

# For each strategy: fields that must be present / must be absent on a
# successfully parsed record.
_STRATEGY_FIELDS = {
    "naive":       ({"error_estimate"},
                    {"reasoning", "error_level", "decision", "p_yes", "p_no", "perplexity"}),
    "cot":         ({"error_estimate", "reasoning"},
                    {"error_level", "decision", "p_yes", "p_no", "perplexity"}),
    "mc":          ({"error_estimate", "error_level", "reasoning"},
                    {"decision", "p_yes", "p_no", "perplexity"}),
    "devil":       ({"error_estimate", "reasoning"},
                    {"error_level", "decision", "p_yes", "p_no", "perplexity"}),
    "naive_logit": ({"error_estimate", "decision", "p_yes", "p_no"},
                    {"reasoning", "error_level", "perplexity"}),
    "cot_logit":   ({"error_estimate", "decision", "p_yes", "p_no", "reasoning"},
                    {"error_level", "perplexity"}),
    "cot_ppl":     ({"decision", "perplexity", "reasoning"},
                    {"error_estimate", "error_level", "p_yes", "p_no"}),
}


@dataclass(frozen=True)
class CriticismRecord:
    """One criticizer verdict about one annotation.

    Which optional fields are populated depends on the strategy; see
    ``_STRATEGY_FIELDS``.  Records with ``parse_ok=False`` are conservative
    fallbacks (maximum error estimate, or a top-priority yes decision for
    the perplexity strategy) and are exempt from the field rules.
    """

    item_id: int
    strategy: str
    backend_id: str
    parse_ok: bool
    error_estimate: float | None = None
    reasoning: str | None = None
    error_level: int | None = None
    decision: str | None = None
    p_yes: float | None = None
    p_no: float | None = None
    perplexity: float | None = None
    clamped: bool = False

    def __post_init__(self) -> None:
        if self.strategy not in CRITICISM_STRATEGIES:
            raise ValueError(f"unknown criticism strategy {self.strategy!r}")
        if self.error_estimate is not None and not 0.0 <= self.error_estimate <= 1.0:
            raise ValueError(f"error_estimate outside [0, 1]: {self.error_estimate}")
        if self.decision is not None and self.decision not in ("yes", "no"):
            raise ValueError(f"decision must be 'yes' or 'no', got {self.decision!r}")
        if self.perplexity is not None and self.perplexity <= 0.0:
            raise ValueError(f"perplexity must be positive, got {self.perplexity}")
        if self.error_level is not None and not 1 <= self.error_level <= 5:
            raise ValueError(f"error_level outside 1..5: {self.error_level}")
        if self.parse_ok:
            required, forbidden = _STRATEGY_FIELDS[self.strategy]
            for name in required:
                if getattr(self, name) is None:
                    raise ValueError(f"strategy {self.strategy!r} requires field {name!r}")
            for name in forbidden:
                if getattr(self, name) is not None:
                    raise ValueError(f"strategy {self.strategy!r} forbids field {name!r}")

    def to_record(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "item_id": self.item_id,
            "strategy": self.strategy,
            "backend_id": self.backend_id,
            "parse_ok": self.parse_ok,
            "error_estimate": self.error_estimate,
            "reasoning": self.reasoning,
            "error_level": self.error_level,
            "decision": self.decision,
            "p_yes": self.p_yes,
            "p_no": self.p_no,
            "perplexity": self.perplexity,
            "clamped": self.clamped,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "CriticismRecord":
        return cls(
            item_id=record["item_id"],
            strategy=record["strategy"],
            backend_id=record["backend_id"],
            parse_ok=record["parse_ok"],
            error_estimate=record.get("error_estimate"),
            reasoning=record.get("reasoning"),
            error_level=record.get("error_level"),
            decision=record.get("decision"),
            p_yes=record.get("p_yes"),
            p_no=record.get("p_no"),
            perplexity=record.get("perplexity"),
            clamped=record.get("clamped", False),
        )


def load_criticisms(path: Path | str) -> list[CriticismRecord]:
    return [CriticismRecord.from_record(r) for r in read_jsonl(path)]


def save_criticisms(records: Sequence[CriticismRecord], path: Path | str) -> None:
    write_jsonl(path, (r.to_record() for r in records))


# ---------------------------------------------------------------------------
# Annotation
# ---------------------------------------------------------------------------

def _user_message(prompt: str, content: Mapping[str, object]) -> dict:
    kind = content.get("kind")
    if kind == "text":
        return {"role": "user", "content": prompt}
    if kind == "image":
        return {"role": "user", "content": [
            {"type": "text", "text": prompt},
            {"type": "image_ref", "path": content["path"]},
        ]}
    if kind == "vqa":
        return {"role": "user", "content": [
            {"type": "text", "text": prompt},
            {"type": "image_ref", "path": content["image"]},
        ]}
    raise prompts.PromptError(f"content kind {kind!r} cannot be sent to an HTTP backend")


def annotate(
    item: Item,
    strategy: str,
    backend: BackendConfig,
    template_dir: Path | str | None = None,
    transport: httpx.BaseTransport | None = None,
) -> AnnotationRecord:
    """Produce one machine annotation for one item.

    HTTP backends get a rendered prompt and must answer with a bracketed
    label index; unparseable answers are retried with fresh completions and
    finally recorded as ``parse_ok=False`` with no label.  The simulated
    backend labels from hidden ground truth at its configured accuracy.
    """
    if strategy not in prompts.ANNOTATE_STRATEGIES:
        raise ValueError(f"unknown annotation strategy {strategy!r}")
    if backend.is_simulated:
        label = simulate_label(item, backend.simulator_config())
        reasoning = f"simulated choice for item {item.item_id}" if strategy == "cot" else None
        return AnnotationRecord(item_id=item.item_id, machine_label=label,
                                strategy=strategy, backend_id=backend.backend_id,
                                parse_ok=True, reasoning=reasoning)

    task_kind = prompts.task_kind_for_content(item.content)
    template = prompts.load_template("annotate", task_kind, strategy, template_dir)
    prompt = prompts.render(template, {
        "data": prompts.format_content(item.content),
        "label_list_with_index": prompts.format_label_list(item.label_space),
        "first_label": item.label_space[0],
    })
    message = _user_message(prompt, item.content)
    for attempt in range(backend.max_retries):
        response = call_chat(backend, [message], transport=transport)
        try:
            parsed = parse_bracketed(response.text, "label",
                                     label_space_size=len(item.label_space))
        except ParseError:
            continue
        reasoning = parsed.reasoning if strategy == "cot" else None
        return AnnotationRecord(item_id=item.item_id, machine_label=int(parsed.value),
                                strategy=strategy, backend_id=backend.backend_id,
                                parse_ok=True, reasoning=reasoning)
    return AnnotationRecord(item_id=item.item_id, machine_label=None,
                            strategy=strategy, backend_id=backend.backend_id,
                            parse_ok=False, reasoning=None)


def _fan_out(work, n: int, max_workers: int) -> list:
    """Run ``work(i)`` for i in 0..n-1, optionally on a thread pool.

    Results keep item order, and every item's randomness is keyed by its id,
    so the parallel and sequential paths produce identical records.
    """
    if max_workers <= 1:
        return [work(i) for i in range(n)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(work, range(n)))


def annotate_dataset(
    dataset: Dataset,
    strategy: str,
    backend: BackendConfig,
    template_dir: Path | str | None = None,
    transport: httpx.BaseTransport | None = None,
    max_workers: int = 1,
) -> list[AnnotationRecord]:
    return _fan_out(
        lambda i: annotate(dataset[i], strategy, backend, template_dir, transport),
        dataset.n, max_workers)


# ---------------------------------------------------------------------------
# Criticism
# ---------------------------------------------------------------------------

def _fallback_criticism(item_id: int, strategy: str, backend_id: str) -> CriticismRecord:
    """Conservative record for unparseable criticism: flag for review."""
    if strategy == "cot_ppl":
        # "yes, the label is wrong" at minimal perplexity ranks first in
        # the review priority order.
        return CriticismRecord(item_id=item_id, strategy=strategy, backend_id=backend_id,
                               parse_ok=False, decision="yes", perplexity=1.0)
    return CriticismRecord(item_id=item_id, strategy=strategy, backend_id=backend_id,
                           parse_ok=False, error_estimate=1.0)


def _simulated_criticism(
    item: Item,
    annotation: AnnotationRecord,
    strategy: str,
    backend: BackendConfig,
) -> CriticismRecord:
    sim = backend.simulator_config()
    estimate = simulate_error_estimate(item, annotation.machine_label, sim)
    reasoning = (f"simulated criticism for item {item.item_id}"
                 if strategy not in ("naive", "naive_logit") else None)
    base = dict(item_id=item.item_id, strategy=strategy,
                backend_id=backend.backend_id, parse_ok=True, reasoning=reasoning)
    if strategy in ("naive", "cot", "devil"):
        return CriticismRecord(error_estimate=estimate, **base)
    if strategy == "mc":
        level = int(1 + round(estimate * 4.0))
        return CriticismRecord(error_estimate=map_error_level(level),
                               error_level=level, **base)
    if strategy in ("naive_logit", "cot_logit"):
        p_yes, p_no = estimate, 1.0 - estimate
        if p_yes == 0.0 and p_no == 0.0:
            p_no = 1.0
        return CriticismRecord(
            error_estimate=error_prob_from_yes_no(p_yes, p_no),
            decision="yes" if p_yes >= p_no else "no",
            p_yes=p_yes, p_no=p_no, **base)
    # cot_ppl: confident judgments (estimate near 0 or 1) read as low
    # perplexity, unsure ones as high.
    return CriticismRecord(
        decision="yes" if estimate >= 0.5 else "no",
        perplexity=float(np.exp(2.0 * (1.0 - abs(2.0 * estimate - 1.0)))),
        **base)


def _decision_token_probs(tokens: Sequence[TokenLogprob]) -> tuple[float, float]:
    """(p_yes, p_no) read from the final decision token's alternatives."""
    def _norm(token: str) -> str:
        return token.strip(" []().!\"'").lower()

    for entry in reversed(tokens):
        word = _norm(entry.token)
        if word in ("yes", "no"):
            p_yes = p_no = 0.0
            alternatives = entry.top if entry.top else ((entry.token, entry.logprob),)
            for alt_token, alt_logprob in alternatives:
                alt = _norm(alt_token)
                if alt == "yes":
                    p_yes = max(p_yes, float(np.exp(alt_logprob)))
                elif alt == "no":
                    p_no = max(p_no, float(np.exp(alt_logprob)))
            if word == "yes":
                p_yes = max(p_yes, float(np.exp(entry.logprob)))
            else:
                p_no = max(p_no, float(np.exp(entry.logprob)))
            if p_yes == 0.0 and p_no == 0.0:
                break
            return p_yes, p_no
    raise CapabilityError("no yes/no decision token with log-probabilities"
                          " in the backend response")


def _reasoning_perplexity(response: ChatResponse, parsed: Parsed) -> float:
    """Perplexity of the reasoning segment: exp(-mean token log-prob)."""
    if response.tokens is None:
        raise CapabilityError("backend returned no token log-probabilities")
    if parsed.reasoning_span is None:
        raise ParseError("no reasoning segment to score")
    span_start, span_end = parsed.reasoning_span
    offset = 0
    logprobs = []
    for entry in response.tokens:
        token_start, token_end = offset, offset + len(entry.token)
        offset = token_end
        if token_start < span_end and token_end > span_start:
            logprobs.append(entry.logprob)
    if not logprobs:
        raise ParseError("token offsets never overlap the reasoning segment")
    return float(np.exp(-np.mean(logprobs)))


def criticize(
    item: Item,
    annotation: AnnotationRecord,
    strategy: str,
    backend: BackendConfig,
    template_dir: Path | str | None = None,
    transport: httpx.BaseTransport | None = None,
) -> CriticismRecord:
    """Produce one criticism of one annotation.

    The devil strategy requires the annotation to carry reasoning.
    White-box strategies require token log-probabilities; an HTTP backend
    that does not return them raises ``CapabilityError``.  Responses that
    stay unparseable after retries produce a conservative fallback record
    (``parse_ok=False``) that routes the item toward review.
    """
    if strategy not in CRITICISM_STRATEGIES:
        raise ValueError(f"unknown criticism strategy {strategy!r}")
    if strategy == "devil" and not annotation.reasoning:
        raise ValueError("devil strategy needs the annotator's reasoning, but the"
                         " annotation record has none")
    if annotation.machine_label is None:
        # Nothing to criticize; flag the item for review outright.
        return _fallback_criticism(item.item_id, strategy, backend.backend_id)
    if backend.is_simulated:
        return _simulated_criticism(item, annotation, strategy, backend)

    task_kind = prompts.task_kind_for_content(item.content)
    template = prompts.load_template("criticize", task_kind, strategy, template_dir)
    values = {
        "data": prompts.format_content(item.content),
        "label_list_with_index": prompts.format_label_list(item.label_space),
        "machine_label": prompts.format_machine_label(
            annotation.machine_label, item.label_space),
    }
    if "annotator_reasoning" in template.placeholders():
        values["annotator_reasoning"] = annotation.reasoning or ""
    prompt = prompts.render(template, values)
    message = _user_message(prompt, item.content)
    want_logprobs = strategy in WHITEBOX_STRATEGIES

    for attempt in range(backend.max_retries):
        response = call_chat(backend, [message], want_logprobs=want_logprobs,
                             transport=transport)
        if want_logprobs and response.tokens is None:
            raise CapabilityError(
                f"strategy {strategy!r} needs token log-probabilities, but backend"
                f" {backend.backend_id} did not return any")
        try:
            return _parse_criticism(item, strategy, backend, response)
        except ParseError:
            continue
    return _fallback_criticism(item.item_id, strategy, backend.backend_id)


def _parse_criticism(
    item: Item,
    strategy: str,
    backend: BackendConfig,
    response: ChatResponse,
) -> CriticismRecord:
    base = dict(item_id=item.item_id, strategy=strategy,
                backend_id=backend.backend_id, parse_ok=True)
    if strategy in ("naive", "cot", "devil"):
        parsed = parse_bracketed(response.text, "error_prob")
        reasoning = parsed.reasoning if strategy != "naive" else None
        if strategy != "naive" and reasoning is None:
            raise ParseError("missing reasoning segment")
        return CriticismRecord(error_estimate=float(parsed.value), reasoning=reasoning,
                               clamped=parsed.clamped, **base)
    if strategy == "mc":
        parsed = parse_bracketed(response.text, "error_level")
        if parsed.reasoning is None:
            raise ParseError("missing reasoning segment")
        level = int(parsed.value)
        return CriticismRecord(error_estimate=map_error_level(level), error_level=level,
                               reasoning=parsed.reasoning, **base)
    if strategy in ("naive_logit", "cot_logit"):
        parsed = parse_bracketed(response.text, "yes_no")
        reasoning = parsed.reasoning if strategy == "cot_logit" else None
        if strategy == "cot_logit" and reasoning is None:
            raise ParseError("missing reasoning segment")
        p_yes, p_no = _decision_token_probs(response.tokens)
        return CriticismRecord(
            error_estimate=error_prob_from_yes_no(p_yes, p_no),
            decision=str(parsed.value), p_yes=p_yes, p_no=p_no,
            reasoning=reasoning, **base)
    # cot_ppl
    parsed = parse_bracketed(response.text, "yes_no")
    if parsed.reasoning is None:
        raise ParseError("missing reasoning segment")
    perplexity = _reasoning_perplexity(response, parsed)
    return CriticismRecord(decision=str(parsed.value), perplexity=perplexity,
                           reasoning=parsed.reasoning, **base)


def criticize_dataset(
    dataset: Dataset,
    annotations: Sequence[AnnotationRecord],
    strategy: str,
    backend: BackendConfig,
    template_dir: Path | str | None = None,
    transport: httpx.BaseTransport | None = None,
    max_workers: int = 1,
) -> list[CriticismRecord]:
    if len(annotations) != dataset.n:
        raise ValueError("annotations must match the dataset size")
    by_id = {a.item_id: a for a in annotations}
    return _fan_out(
        lambda i: criticize(dataset[i], by_id[i], strategy, backend,
                            template_dir, transport),
        dataset.n, max_workers)

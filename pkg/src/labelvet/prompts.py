"""Prompt templates for annotation and criticism backends.

Templates are plain text files shipped with the package (and overridable
per deployment) keyed by task kind and strategy.  They reference named
placeholders in curly braces:

* ``{data}``: the rendered item content.
* ``{label_list_with_index}``: one "index: label" line per label.
* ``{first_label}``: the name of label 0, used in format examples.
* ``{machine_label}``: the annotator's choice, as "index: label".
* ``{annotator_reasoning}``: the annotator's explanation (devil strategy).

Rendering uses explicit substitution rather than ``str.format`` so the
square brackets and braces that the output contract relies on never need
escaping.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

TASK_KINDS = ("image_cls", "text_cls", "vqa")
ANNOTATE_STRATEGIES = ("naive", "cot")
CRITICIZE_STRATEGIES = ("naive", "cot", "mc", "devil",
                        "naive_logit", "cot_logit", "cot_ppl")

PLACEHOLDERS = ("data", "label_list_with_index", "first_label",
                "machine_label", "annotator_reasoning")

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


class PromptError(ValueError):
    """Raised for unknown template keys or malformed templates."""


@dataclass(frozen=True)
class PromptTemplate:
    task_kind: str
    strategy: str
    text: str

    def placeholders(self) -> set[str]:
        return set(_PLACEHOLDER_RE.findall(self.text))


def _annotate_file(task_kind: str, strategy: str) -> str:
    short = {"image_cls": "image", "text_cls": "text", "vqa": "vqa"}[task_kind]
    return f"annotate_{short}_{strategy}.txt"


def template_filename(purpose: str, task_kind: str, strategy: str) -> str:
    """File name for a (purpose, task_kind, strategy) key.

    Criticism prompts describe the annotated content through ``{data}`` and
    are otherwise task-independent, so the three task kinds share one file
    per criticism strategy.
    """
    if task_kind not in TASK_KINDS:
        raise PromptError(f"unknown task kind {task_kind!r}")
    if purpose == "annotate":
        if strategy not in ANNOTATE_STRATEGIES:
            raise PromptError(f"unknown annotation strategy {strategy!r}")
        return _annotate_file(task_kind, strategy)
    if purpose == "criticize":
        if strategy not in CRITICIZE_STRATEGIES:
            raise PromptError(f"unknown criticism strategy {strategy!r}")
        return f"criticize_{strategy}.txt"
    raise PromptError(f"unknown template purpose {purpose!r}")


def validate_template(text: str) -> None:
    """Reject unknown placeholders and repeated references.

    Each placeholder a template references must appear exactly once, so a
    rendered value can never silently land in two places.
    """
    names = _PLACEHOLDER_RE.findall(text)
    for name in names:
        if name not in PLACEHOLDERS:
            raise PromptError(f"template references unknown placeholder {{{name}}}")
    for name in set(names):
        if names.count(name) > 1:
            raise PromptError(f"template references {{{name}}} more than once")


def load_template(
    purpose: str,
    task_kind: str,
    strategy: str,
    directory: Path | str | None = None,
) -> PromptTemplate:
    """Load and validate a template, from ``directory`` or the packaged set."""
    filename = template_filename(purpose, task_kind, strategy)
    if directory is not None:
        path = Path(directory) / filename
        if not path.exists():
            raise PromptError(f"no template file {path}")
        text = path.read_text(encoding="utf-8")
    else:
        ref = resources.files("labelvet").joinpath("templates").joinpath(filename)
        if not ref.is_file():
            raise PromptError(f"no packaged template {filename}")
        text = ref.read_text(encoding="utf-8")
    validate_template(text)
    return PromptTemplate(task_kind=task_kind, strategy=strategy, text=text)


def render(template: PromptTemplate, values: Mapping[str, str]) -> str:
    """Substitute placeholder values into a template.

    Every placeholder the template references must be supplied; extra
    values are an error so callers notice stale keys.
    """
    needed = template.placeholders()
    missing = needed - set(values)
    if missing:
        raise PromptError(f"missing values for placeholders: {sorted(missing)}")
    extra = set(values) - needed
    if extra:
        raise PromptError(f"values supplied for absent placeholders: {sorted(extra)}")

    def _sub(match: re.Match) -> str:
        return str(values[match.group(1)])

    return _PLACEHOLDER_RE.sub(_sub, template.text)


def format_label_list(label_space: tuple[str, ...] | list[str]) -> str:
    return "\n".join(f"{i}: {name}" for i, name in enumerate(label_space))


def format_machine_label(label: int, label_space: tuple[str, ...] | list[str]) -> str:
    if not 0 <= label < len(label_space):
        raise PromptError(f"label {label} outside label space of size {len(label_space)}")
    return f"{label}: {label_space[label]}"


def format_content(content: Mapping[str, object]) -> str:
    """Text rendering of item content for the ``{data}`` placeholder.

    Image bytes travel as separate message parts; the text rendering only
    anchors them in the prompt.
    """
    kind = content.get("kind")
    if kind == "text":
        return str(content["text"])
    if kind == "image":
        return "(the image is attached)"
    if kind == "vqa":
        return f"Question: {content['question']}\n(the image is attached)"
    raise PromptError(f"content kind {kind!r} has no prompt rendering;"
                      " use a simulated backend for synthetic items")


def task_kind_for_content(content: Mapping[str, object]) -> str:
    kind = content.get("kind")
    if kind == "text":
        return "text_cls"
    if kind == "image":
        return "image_cls"
    if kind == "vqa":
        return "vqa"
    raise PromptError(f"content kind {kind!r} has no task kind;"
                      " use a simulated backend for synthetic items")

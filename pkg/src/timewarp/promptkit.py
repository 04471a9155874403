"""Prompt templates and strict parsing of generator responses.

Templates ship as versioned asset files (``templates/*.txt``): a header line
``placeholders: a, b`` followed by a UTF-8 body with ``{name}`` placeholders.
Generator responses must carry a strict JSON envelope
``{"items": [...]}``; free-prose responses are a ParseFailure, not something
we attempt to repair.
"""

import json
import re
from dataclasses import dataclass
from importlib import resources

from .errors import MissingPlaceholder, ParseFailure

TEMPLATE_IDS = (
    "oe_qa_gen",
    "mcqa_gen",
    "dispreferred_gen",
    "shuffled_option_select",
    "mut_describe",
) + tuple(f"hallucination_{k}" for k in range(1, 8))

RELATIONS = {"after", "before", "beginning", "end", "between"}
_RELATION_WORDS = RELATIONS | {"first", "last", "then", "finally", "immediately"}


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    required_placeholders: frozenset


@dataclass(frozen=True)
class OpenEndedQA:
    question: str
    answer: str
    target_relation: str

    def as_dict(self):
        return {"question": self.question, "answer": self.answer, "relation": self.target_relation}


@dataclass(frozen=True)
class McqaItem:
    question: str
    options: tuple
    answer_index: int
    distractor_kinds: tuple = ()

    def as_dict(self):
        return {"question": self.question, "options": list(self.options), "answer_index": self.answer_index}


_CACHE = {}


def load_template(template_id: str) -> PromptTemplate:
    if template_id not in TEMPLATE_IDS:
        raise MissingPlaceholder(f"unknown template_id {template_id!r}")
    if template_id not in _CACHE:
        text = resources.files("timewarp.templates").joinpath(f"{template_id}.txt").read_text("utf-8")
        header, _, body = text.partition("\n")
        if not header.startswith("placeholders:"):
            raise ValueError(f"{template_id}: malformed template header {header!r}")
        names = [n.strip() for n in header[len("placeholders:"):].split(",") if n.strip()]
        _CACHE[template_id] = PromptTemplate(template_id, body.strip("\n"), frozenset(names))
    return _CACHE[template_id]


class _StrictMap(dict):
    def __missing__(self, key):
        raise MissingPlaceholder(f"placeholder {{{key}}} not provided")


_UNRESOLVED = re.compile(r"\{[A-Za-z_][A-Za-z0-9_]*\}")


def render_prompt(template_id: str, placeholders: dict | None = None) -> str:
    template = load_template(template_id)
    placeholders = placeholders or {}
    missing = template.required_placeholders - set(placeholders)
    if missing:
        raise MissingPlaceholder(f"{template_id}: missing placeholder(s) {sorted(missing)}")
    rendered = template.body.format_map(_StrictMap(placeholders))
    leftover = _UNRESOLVED.search(rendered)
    if leftover:
        raise MissingPlaceholder(f"{template_id}: unresolved placeholder {leftover.group(0)}")
    return rendered


def extract_envelope(response: str) -> dict:
    """Pull the {"items": [...]} JSON object out of a generator response."""
    text = response.strip()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError:
        # Tolerate surrounding prose or code fences, nothing more: take the
        # first balanced top-level object.
        start = text.find("{")
        obj = None
        while start != -1:
            depth = 0
            for i in range(start, len(text)):
                if text[i] == "{":
                    depth += 1
                elif text[i] == "}":
                    depth -= 1
                    if depth == 0:
                        try:
                            obj = json.loads(text[start:i + 1])
                        except json.JSONDecodeError:
                            obj = None
                        break
            if obj is not None:
                break
            start = text.find("{", start + 1)
        if obj is None:
            raise ParseFailure("no JSON envelope in response", raw_text=response)
    if not isinstance(obj, dict) or not isinstance(obj.get("items"), list):
        raise ParseFailure("envelope missing 'items' list", raw_text=response)
    return obj


def _mentions_relation(question: str) -> bool:
    words = set(re.findall(r"[a-z]+", question.lower()))
    return bool(words & _RELATION_WORDS)


def parse_oe_qa(response: str):
    """Parse open-ended QA pairs; returns (items, diagnostics)."""
    envelope = extract_envelope(response)
    items = []
    diagnostics = []
    for i, raw in enumerate(envelope["items"]):
        if not isinstance(raw, dict):
            diagnostics.append(f"item {i}: not an object")
            continue
        question = str(raw.get("question", "")).strip()
        answer = str(raw.get("answer", "")).strip()
        relation = str(raw.get("relation", "")).strip()
        if not question:
            diagnostics.append(f"item {i}: empty question")
        elif not answer:
            diagnostics.append(f"item {i}: empty answer")
        elif relation not in RELATIONS:
            diagnostics.append(f"item {i}: bad relation {relation!r}")
        elif not _mentions_relation(question):
            diagnostics.append(f"item {i}: question lacks a temporal relation word")
        else:
            items.append(OpenEndedQA(question, answer, relation))
    return items, diagnostics


def parse_mcqa(response: str):
    """Parse MCQA items; returns (items, diagnostics)."""
    envelope = extract_envelope(response)
    items = []
    diagnostics = []
    for i, raw in enumerate(envelope["items"]):
        if not isinstance(raw, dict):
            diagnostics.append(f"item {i}: not an object")
            continue
        question = str(raw.get("question", "")).strip()
        options = raw.get("options")
        answer_index = raw.get("answer_index")
        if not question:
            diagnostics.append(f"item {i}: empty question")
            continue
        if not isinstance(options, list) or not 4 <= len(options) <= 5:
            diagnostics.append(f"item {i}: need 4-5 options, got {len(options) if isinstance(options, list) else options!r}")
            continue
        options = tuple(str(o) for o in options)
        if len(set(options)) != len(options):
            diagnostics.append(f"item {i}: duplicate options")
            continue
        if not isinstance(answer_index, int) or not 0 <= answer_index < len(options):
            diagnostics.append(f"item {i}: answer_index {answer_index!r} out of range")
            continue
        items.append(McqaItem(question, options, answer_index))
    return items, diagnostics

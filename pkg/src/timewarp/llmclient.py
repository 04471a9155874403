"""Uniform generator client: OpenAI-compatible HTTP backend, a deterministic
mock backend for hermetic runs, a content-addressed disk cache, retry with
exponential backoff, and bounded in-flight concurrency.

The mock backend answers purely from the prompt text (it recognizes the
shipped templates and reads the embedded composite caption), which makes the
whole pipeline byte-reproducible without any network access.
"""

import base64
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BackendUnavailable, CredentialMissing, RequestRejected
from .ioutil import sha256_text
from .preprocess import parse_composite_caption

MOCK_FILLER_OPTIONS = (
    "Nothing else happens in the video.",
    "The video ends immediately.",
    "The scene repeats itself.",
)
HALLUCINATION_MARKER = "HALLUCINATED:"


@dataclass(frozen=True)
class GenRequest:
    prompt: str
    attachments: tuple = ()
    model_id: str = "mock"
    temperature: float = 0.0
    max_tokens: int = 1024

    @property
    def request_key(self) -> str:
        payload = json.dumps(
            {
                "prompt": self.prompt,
                "attachments": list(self.attachments),
                "model_id": self.model_id,
                "temperature": self.temperature,
                "max_tokens": self.max_tokens,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return sha256_text(payload)


@dataclass
class GenResponse:
    text: str
    usage: dict = field(default_factory=dict)
    model_id: str = "mock"
    cached: bool = False
    latency_ms: float = 0.0


def _question_event(question: str):
    m = re.search(r"immediately after:\s*(.+?)\?\s*$", question)
    return m.group(1).strip() if m else None


def _wrap_successor(captions, caption):
    """Successor of `caption` in the narrative, wrapping past the last scene."""
    try:
        pos = captions.index(caption)
    except ValueError:
        return None
    return captions[(pos + 1) % len(captions)]


def _find_composite_caption(prompt: str):
    for line in prompt.splitlines():
        line = line.strip()
        if line.startswith("First, "):
            return parse_composite_caption(line)
    return None


def mock_rules(prompt: str, attachments=()) -> str:
    """Deterministic generator rules keyed on the shipped templates.

    * open-ended generation: one QA per adjacent scene pair, asking what
      happens immediately after each caption;
    * MCQA generation: the same questions as 4-option items whose
      distractors are the other scenes' captions (padded with fixed fillers
      on short videos);
    * dispreferred answering: reads successors from the (permuted) narrative
      embedded in the prompt, wrapping past the final scene;
    * option selection: picks the option matching the permuted-narrative
      successor;
    * hallucination prompts: a description prefixed with HALLUCINATED:;
    * plain description: a deterministic text keyed on the attachments.
    """
    captions = _find_composite_caption(prompt)
    sig = sha256_text(prompt + "|" + "|".join(str(a) for a in attachments))[:8]

    if "Generate open-ended question-answer pairs" in prompt and captions:
        items = [
            {
                "question": f"What happens immediately after: {captions[i]}?",
                "answer": captions[i + 1],
                "relation": "after",
            }
            for i in range(len(captions) - 1)
        ]
        return json.dumps({"items": items}, ensure_ascii=False)

    if "Generate multiple-choice question-answer items" in prompt and captions:
        items = []
        for i in range(len(captions) - 1):
            correct = captions[i + 1]
            distractors = [c for c in captions if c != correct][:3]
            for filler in MOCK_FILLER_OPTIONS:
                if len(distractors) >= 3:
                    break
                distractors.append(filler)
            pos = i % 4
            options = distractors[:pos] + [correct] + distractors[pos:]
            items.append(
                {
                    "question": f"What happens immediately after: {captions[i]}?",
                    "options": options,
                    "answer_index": pos,
                }
            )
        return json.dumps({"items": items}, ensure_ascii=False)

    if "Select the option" in prompt and captions:
        q = re.search(r"^Question:\s*(.+)$", prompt, re.MULTILINE)
        o = re.search(r"^Options:\s*(.+)$", prompt, re.MULTILINE)
        options = json.loads(o.group(1)) if o else []
        event = _question_event(q.group(1)) if q else None
        answer = _wrap_successor(captions, event) if event else None
        idx = options.index(answer) if answer in options else 0
        item = {"question": q.group(1) if q else "", "options": options, "answer_index": idx}
        return json.dumps({"items": [item]}, ensure_ascii=False)

    if "Answer the question using only the narrative above" in prompt and captions:
        q = re.search(r"^Question:\s*(.+)$", prompt, re.MULTILINE)
        question = q.group(1) if q else ""
        event = _question_event(question)
        answer = _wrap_successor(captions, event) if event else None
        if answer is None:
            answer = captions[0]
        item = {"question": question, "answer": answer, "relation": "after"}
        return json.dumps({"items": [item]}, ensure_ascii=False)

    hallucinating = any(
        cue in prompt
        for cue in (
            "imaginative sequences of events",
            "hypothetical events or interactions",
            "could logically happen within the video's timeline",
            "though absent, would seamlessly fit",
            "just out of frame",
            "potential events or interactions that are plausible",
            "natural phenomena, such as weather changes",
        )
    )
    base = f"The video shows a sequence of events unfolding in order. [sig:{sig}]"
    if hallucinating:
        return f"{HALLUCINATION_MARKER} {base}"
    return base


class MockBackend:
    """Hermetic, deterministic stand-in for a generator endpoint."""

    name = "mock"

    def complete(self, request: GenRequest) -> GenResponse:
        text = mock_rules(request.prompt, request.attachments)
        usage = {"prompt_tokens": len(request.prompt.split()), "completion_tokens": len(text.split())}
        return GenResponse(text=text, usage=usage, model_id=request.model_id, latency_ms=0.0)


class HttpBackend:
    """OpenAI-compatible chat-completions backend.

    Attachments are frame image paths, sent inline as base64 data URLs.
    Retries transient failures (connection errors, 5xx, 429) with
    exponential backoff; other 4xx responses are RequestRejected.
    """

    name = "http_openai_compatible"

    def __init__(self, endpoint: str, credential_env: str, max_attempts: int = 3, backoff_s: float = 1.0):
        self.endpoint = endpoint
        self.credential_env = credential_env
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s

    def _content(self, request: GenRequest):
        parts = [{"type": "text", "text": request.prompt}]
        for path in request.attachments:
            data = base64.b64encode(Path(path).read_bytes()).decode("ascii")
            suffix = Path(path).suffix.lstrip(".") or "jpeg"
            parts.append(
                {"type": "image_url", "image_url": {"url": f"data:image/{suffix};base64,{data}"}}
            )
        return parts

    def complete(self, request: GenRequest) -> GenResponse:
        import requests

        credential = os.environ.get(self.credential_env)
        if not credential:
            raise CredentialMissing(f"environment variable {self.credential_env} is not set")
        payload = {
            "model": request.model_id,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": [{"role": "user", "content": self._content(request)}],
        }
        headers = {"Authorization": f"Bearer {credential}"}
        last_error = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            t0 = time.monotonic()
            try:
                resp = requests.post(self.endpoint, json=payload, headers=headers, timeout=120)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = RuntimeError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise RequestRejected(f"HTTP {resp.status_code}", body=resp.text)
            body = resp.json()
            return GenResponse(
                text=body["choices"][0]["message"]["content"],
                usage=body.get("usage", {}),
                model_id=body.get("model", request.model_id),
                latency_ms=(time.monotonic() - t0) * 1000.0,
            )
        raise BackendUnavailable(f"{self.endpoint}: {self.max_attempts} attempts failed ({last_error})")


class GeneratorClient:
    """Backend wrapper adding the disk cache and bounded concurrency.

    Safe to share across worker threads; at most ``max_in_flight`` requests
    run against the backend at once. Cache files are content-addressed by
    request_key, so parameter changes invalidate naturally.
    """

    def __init__(self, backend, cache_dir=None, max_in_flight: int = 4):
        self.backend = backend
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self._sem = threading.Semaphore(max_in_flight)
        self._write_lock = threading.Lock()

    def _cache_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def generate(self, request: GenRequest) -> GenResponse:
        if self.cache_dir is not None:
            path = self._cache_path(request.request_key)
            if path.exists():
                stored = json.loads(path.read_text("utf-8"))
                return GenResponse(
                    text=stored["text"], usage=stored.get("usage", {}),
                    model_id=stored.get("model_id", request.model_id), cached=True,
                )
        with self._sem:
            response = self.backend.complete(request)
        if self.cache_dir is not None:
            with self._write_lock:
                self.cache_dir.mkdir(parents=True, exist_ok=True)
                tmp = self._cache_path(request.request_key).with_suffix(".tmp")
                tmp.write_text(
                    json.dumps(
                        {"text": response.text, "usage": response.usage, "model_id": response.model_id},
                        ensure_ascii=False,
                    ),
                    "utf-8",
                )
                tmp.replace(self._cache_path(request.request_key))
        return response


def generate(request: GenRequest, backend) -> GenResponse:
    """One-shot convenience wrapper around GeneratorClient."""
    if isinstance(backend, GeneratorClient):
        return backend.generate(request)
    return GeneratorClient(backend).generate(request)

"""Uniform interface to a frozen LLM.

Two backends share one entry point, :func:`complete`:

* an HTTP client for OpenAI-compatible ``/v1/completions`` endpoints
  (greedy decoding, first-token logprob alternatives requested), and
* a deterministic mock oracle selected by ``endpoint_url = "mock:"``
  (optionally ``mock:<seed>``), used as the test double for the whole
  pipeline.

Completions are cached on disk keyed by SHA-256 of (model_id, prompt), so
reruns of the expensive ground-truth probing are cheap.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .text_index import tokenize

API_KEY_ENV = "AICL_API_KEY"

# Tokens ignored when the mock oracle checks example/test overlap.
MOCK_STOPWORDS = frozenset(
    "a an and are as at be but by for if in is it of on or the this to was with".split()
)

MOCK_WINNER_PROB = 0.7


class GatewayError(Exception):
    """Base class for gateway failures."""


class TransportError(GatewayError):
    """Retriable transport/timeout failure (after exhausting retries)."""


class ContextOverflowError(GatewayError):
    """Prompt does not fit the model context; never sent."""

    def __init__(self, prompt_tokens: int, max_tokens: int):
        super().__init__(
            f"prompt of {prompt_tokens} tokens exceeds context limit {max_tokens}"
        )
        self.prompt_tokens = prompt_tokens
        self.max_tokens = max_tokens


class TemplateError(GatewayError):
    """Mock oracle could not parse the prompt against the fixed template."""


@dataclass
class LlmConfig:
    endpoint_url: str
    model_id: str
    max_context_tokens: int = 2048
    decoding: str = "greedy"
    top_logprobs: int = 5
    timeout_ms: int = 30000
    cache_dir: str | None = None
    max_retries: int = 3

    def is_mock(self) -> bool:
        return self.endpoint_url.startswith("mock:")

    def mock_seed(self) -> int:
        suffix = self.endpoint_url[len("mock:"):]
        return int(suffix) if suffix else 0


@dataclass(frozen=True)
class Completion:
    text: str
    first_token_logprobs: dict[str, float] = field(default_factory=dict)
    prompt_token_count: int = 0


def count_tokens(cfg: LlmConfig, text: str) -> int:
    """Whitespace token count.

    Providers rarely expose a tokenizer endpoint, so the whitespace fallback
    is used for both mock and HTTP backends; prompt-size metrics are defined
    on this count.
    """
    return len(text.split())


def _cache_path(cfg: LlmConfig, prompt: str) -> Path | None:
    if not cfg.cache_dir:
        return None
    key = hashlib.sha256(f"{cfg.model_id}\x00{prompt}".encode("utf-8")).hexdigest()
    return Path(cfg.cache_dir) / f"{key}.json"


def _cache_read(path: Path | None) -> Completion | None:
    if path is None or not path.exists():
        return None
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return Completion(
        text=raw["text"],
        first_token_logprobs=dict(raw["first_token_logprobs"]),
        prompt_token_count=int(raw["prompt_token_count"]),
    )


def _cache_write(path: Path | None, completion: Completion) -> None:
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    # Exclusive write per key: write to a temp file, atomically replace.
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "text": completion.text,
                    "first_token_logprobs": completion.first_token_logprobs,
                    "prompt_token_count": completion.prompt_token_count,
                },
                fh,
                ensure_ascii=False,
            )
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


_INSTRUCTION_RE = re.compile(
    r"\APredict the type of (?P<text>.*) as one of \{(?P<classes>[^{}]*)\}"
    r" given the following example\Z",
    re.DOTALL,
)
_EXAMPLE_RE = re.compile(
    r"\AExample: (?P<text>.*) is a representative of class (?P<label>.*)\Z"
)


def _parse_template(prompt: str) -> tuple[str, list[str], list[tuple[str, str]]]:
    """Split a rendered prompt back into (test_text, class_names, examples)."""
    lines = prompt.split("\n")
    m = _INSTRUCTION_RE.match(lines[0])
    if not m:
        raise TemplateError("instruction line does not match the prompt template")
    class_names = [c.strip() for c in m.group("classes").split(",")]
    examples = []
    for line in lines[1:]:
        em = _EXAMPLE_RE.match(line)
        if not em:
            raise TemplateError(f"example line does not match the template: {line!r}")
        examples.append((em.group("text"), em.group("label")))
    return m.group("text"), class_names, examples


def _mock_fallback_label(test_text: str, seed: int, p: int) -> int:
    digest = hashlib.sha256(f"{test_text}\x00{seed}".encode("utf-8")).hexdigest()
    return int(digest, 16) % p


def mock_oracle(prompt: str, seed: int) -> Completion:
    """Deterministic test double for a k-shot classification prompt.

    The predicted class is the majority label among embedded examples that
    share at least one non-stopword token with the test text, ties going to
    the earliest (highest-ranked) such example; with no overlapping example
    the label is a stable hash of (test text, seed).  Synthetic logprobs put
    the winner at probability 0.7 and spread the rest uniformly.
    """
    test_text, class_names, examples = _parse_template(prompt)
    p = len(class_names)
    name_to_idx = {name: i for i, name in enumerate(class_names)}

    test_tokens = set(tokenize(test_text)) - MOCK_STOPWORDS
    votes: list[int] = []
    for ex_text, ex_label in examples:
        if ex_label not in name_to_idx:
            raise TemplateError(f"example class {ex_label!r} not in instruction classes")
        if test_tokens & (set(tokenize(ex_text)) - MOCK_STOPWORDS):
            votes.append(name_to_idx[ex_label])
    if votes:
        counts = [0] * p
        for v in votes:
            counts[v] += 1
        best = max(counts)
        # Earliest voter among the tied labels wins.
        winner = next(v for v in votes if counts[v] == best)
    else:
        winner = _mock_fallback_label(test_text, seed, p)

    loser_prob = (1.0 - MOCK_WINNER_PROB) / (p - 1) if p > 1 else 0.0
    logprobs = {
        name: math.log(MOCK_WINNER_PROB if i == winner else loser_prob)
        for i, name in enumerate(class_names)
    }
    return Completion(
        text=class_names[winner],
        first_token_logprobs=logprobs,
        prompt_token_count=len(prompt.split()),
    )


def _http_complete(cfg: LlmConfig, prompt: str) -> Completion:
    url = cfg.endpoint_url.rstrip("/") + "/v1/completions"
    body = {
        "model": cfg.model_id,
        "prompt": prompt,
        "max_tokens": 8,
        "temperature": 0,
        "logprobs": cfg.top_logprobs,
    }
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    last_exc: Exception | None = None
    for attempt in range(cfg.max_retries):
        try:
            resp = requests.post(
                url, json=body, headers=headers, timeout=cfg.timeout_ms / 1000.0
            )
            resp.raise_for_status()
            payload = resp.json()
            break
        except (requests.ConnectionError, requests.Timeout, requests.HTTPError) as exc:
            last_exc = exc
            if attempt < cfg.max_retries - 1:
                time.sleep(0.5 * 2**attempt)
    else:
        raise TransportError(f"request failed after {cfg.max_retries} attempts: {last_exc}")

    choice = payload["choices"][0]
    text = choice.get("text", "")
    logprobs = {}
    lp = choice.get("logprobs") or {}
    top = lp.get("top_logprobs") or []
    if top:
        logprobs = {str(tok): float(val) for tok, val in top[0].items()}
    usage = payload.get("usage") or {}
    prompt_tokens = int(usage.get("prompt_tokens", count_tokens(cfg, prompt)))
    return Completion(
        text=text, first_token_logprobs=logprobs, prompt_token_count=prompt_tokens
    )


def complete(cfg: LlmConfig, prompt: str) -> Completion:
    """Run one greedy completion, consulting the disk cache first."""
    n_tokens = count_tokens(cfg, prompt)
    if n_tokens >= cfg.max_context_tokens:
        raise ContextOverflowError(n_tokens, cfg.max_context_tokens)

    cache_file = _cache_path(cfg, prompt)
    cached = _cache_read(cache_file)
    if cached is not None:
        return cached

    if cfg.is_mock():
        completion = mock_oracle(prompt, cfg.mock_seed())
    else:
        completion = _http_complete(cfg, prompt)
    _cache_write(cache_file, completion)
    return completion

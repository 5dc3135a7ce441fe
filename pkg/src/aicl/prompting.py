"""Prompt rendering and posterior extraction.

The instruction template is fixed (a golden copy lives in
``docs/prompt_template.txt``):

    Predict the type of <x> as one of {<C0>, ..., <Cp-1>} given the following example
    Example: <z1> is a representative of class <y(z1)>
    ...
    Example: <zk> is a representative of class <y(zk)>

A completion's first-token logprob alternatives are mapped to a class
posterior through the manifest's verbaliser sets; matching is by token
prefix so subword tokenizers (token ``pos`` for ``positive``) still land on
the right class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import DatasetManifest, LabeledInstance
from .llm_gateway import (
    Completion,
    ContextOverflowError,
    LlmConfig,
    complete,
    count_tokens,
)
from .text_index import RankedCandidates

SOURCE_LOGPROBS = "logprobs"
SOURCE_TEXT_FALLBACK = "text_fallback"
SOURCE_UNIFORM = "uniform"


class PromptError(Exception):
    pass


class PromptOverflowError(PromptError):
    """k-shot prompt exceeds the model context.

    ``fits_at`` is the largest k' < k whose prompt fits, so the caller can
    truncate instead of failing.
    """

    def __init__(self, k: int, fits_at: int):
        super().__init__(f"{k}-shot prompt overflows context; largest fitting k is {fits_at}")
        self.k = k
        self.fits_at = fits_at


@dataclass
class PromptSpec:
    test_text: str
    examples: list[tuple[str, int]]
    class_names: list[str]


@dataclass
class ClassPosterior:
    probs: np.ndarray
    source: str

    @property
    def predicted(self) -> int:
        return int(np.argmax(self.probs))


def render(spec: PromptSpec) -> str:
    """Render the fixed k-shot instruction; k=0 yields the instruction alone."""
    class_list = ", ".join(spec.class_names)
    lines = [
        f"Predict the type of {spec.test_text} as one of "
        f"{{{class_list}}} given the following example"
    ]
    for text, label in spec.examples:
        lines.append(f"Example: {text} is a representative of class {spec.class_names[label]}")
    return "\n".join(lines)


def _clean_token(token: str) -> str:
    tok = token.strip().casefold()
    # Subword markers and edge punctuation from provider tokenizers.
    return tok.strip("Ġ▁.,:;!?'\"()")


def to_posterior(completion: Completion, manifest: DatasetManifest) -> ClassPosterior:
    """Map a completion to a normalized class posterior.

    Probability mass per class sums exp(logprob) over alternatives whose
    token prefix-matches a verbaliser word of that class; falls back to the
    earliest verbaliser word found in the completion text, then to uniform.
    """
    p = manifest.num_classes
    folded_sets = [[w.casefold() for w in words] for words in manifest.verbaliser_sets]

    mass = np.zeros(p)
    for token, logprob in completion.first_token_logprobs.items():
        tok = _clean_token(token)
        if not tok:
            continue
        for ci, words in enumerate(folded_sets):
            if any(w.startswith(tok) for w in words):
                mass[ci] += np.exp(logprob)
    if mass.sum() > 0:
        return ClassPosterior(probs=mass / mass.sum(), source=SOURCE_LOGPROBS)

    text = completion.text.casefold()
    earliest: tuple[int, int] | None = None  # (position, class)
    for ci, words in enumerate(folded_sets):
        for w in words:
            pos = text.find(w)
            if pos >= 0 and (earliest is None or pos < earliest[0]):
                earliest = (pos, ci)
    if earliest is not None:
        probs = np.zeros(p)
        probs[earliest[1]] = 1.0
        return ClassPosterior(probs=probs, source=SOURCE_TEXT_FALLBACK)

    return ClassPosterior(probs=np.full(p, 1.0 / p), source=SOURCE_UNIFORM)


def build_spec(
    manifest: DatasetManifest,
    x: LabeledInstance,
    candidates: RankedCandidates,
    k: int,
    resolve,
) -> PromptSpec:
    """Assemble the k-shot spec from the top-k candidates in rank order.

    ``resolve`` maps an instance id to a :class:`LabeledInstance` (usually
    ``train_store.get``).
    """
    if not 0 <= k <= len(candidates.hits):
        raise PromptError(f"k={k} outside 0..{len(candidates.hits)} available candidates")
    examples = []
    for doc_id, _ in candidates.hits[:k]:
        inst = resolve(doc_id)
        examples.append((inst.text, inst.label))
    return PromptSpec(test_text=x.text, examples=examples, class_names=manifest.class_names)


def predict(
    cfg: LlmConfig,
    manifest: DatasetManifest,
    x: LabeledInstance,
    candidates: RankedCandidates,
    k: int,
    resolve,
) -> tuple[ClassPosterior, int]:
    """render -> complete -> to_posterior for a k-shot prediction.

    Raises :class:`PromptOverflowError` carrying the largest fitting k when
    the k-shot prompt does not fit the context window.
    """
    spec = build_spec(manifest, x, candidates, k, resolve)
    prompt = render(spec)
    if count_tokens(cfg, prompt) >= cfg.max_context_tokens:
        fits_at = 0
        for k_try in range(k - 1, -1, -1):
            trial = render(build_spec(manifest, x, candidates, k_try, resolve))
            if count_tokens(cfg, trial) < cfg.max_context_tokens:
                fits_at = k_try
                break
        raise PromptOverflowError(k, fits_at)
    try:
        completion = complete(cfg, prompt)
    except ContextOverflowError as exc:  # pragma: no cover - guarded above
        raise PromptOverflowError(k, 0) from exc
    return to_posterior(completion, manifest), completion.prompt_token_count

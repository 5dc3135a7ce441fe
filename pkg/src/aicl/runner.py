"""Execute a shot-selection strategy over the evaluation split.

A strategy decides k per test instance: always 0 (zero-shot), a fixed k
(static ICL), the quantized NQC rule (QPP-AICL), or the trained k-
classifier (SAICL).  Retrieval runs once per instance; prompts that
overflow the context window fall back to the largest k that fits.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import DatasetManifest, InstanceStore
from .kpredictor import KModel, predict_k
from .llm_gateway import GatewayError, LlmConfig
from .prompting import ClassPosterior, PromptOverflowError, predict
from .qpp import QppCalibration, choose_k, normalize, query_nqc
from .text_index import Bm25Index

log = logging.getLogger(__name__)

SKIP_INVALID_FRACTION = 0.05

ZERO_SHOT = "zero_shot"
STATIC = "static"
QPP_AICL = "qpp_aicl"
SAICL = "saicl"


class RunnerError(Exception):
    pass


@dataclass
class Strategy:
    kind: str
    M: int
    k: int | None = None
    calibration: QppCalibration | None = None
    model: KModel | None = None

    @classmethod
    def zero_shot(cls, M: int) -> "Strategy":
        return cls(kind=ZERO_SHOT, M=M)

    @classmethod
    def static(cls, k: int, M: int) -> "Strategy":
        if not 1 <= k <= M:
            raise RunnerError(f"static k must be in 1..{M}, got {k}")
        return cls(kind=STATIC, M=M, k=k)

    @classmethod
    def qpp_aicl(cls, calibration: QppCalibration) -> "Strategy":
        return cls(kind=QPP_AICL, M=calibration.M, calibration=calibration)

    @classmethod
    def saicl(cls, model: KModel) -> "Strategy":
        return cls(kind=SAICL, M=model.M, model=model)

    @property
    def name(self) -> str:
        return f"static:{self.k}" if self.kind == STATIC else self.kind


@dataclass
class RunRecord:
    instance_id: str
    gold_label: int
    predicted_label: int
    k_used: int
    posterior: list[float]
    posterior_source: str
    prompt_tokens: int
    strategy_kind: str


@dataclass
class RunResult:
    strategy: str
    model_id: str
    records: list[RunRecord] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)

    @property
    def valid(self) -> bool:
        total = len(self.records) + len(self.skipped)
        return total == 0 or len(self.skipped) / total <= SKIP_INVALID_FRACTION


def _choose_k(strategy: Strategy, index: Bm25Index, x, n_hits: int) -> int:
    if strategy.kind == ZERO_SHOT:
        return 0
    if strategy.kind == STATIC:
        return min(strategy.k, n_hits)
    if strategy.kind == QPP_AICL:
        raw = query_nqc(index, x, strategy.M)
        k = choose_k(normalize(raw, strategy.calibration), strategy.calibration)
        return min(k, n_hits) if n_hits else 0
    if strategy.kind == SAICL:
        return min(predict_k(strategy.model, x), n_hits)
    raise RunnerError(f"unknown strategy kind {strategy.kind!r}")


def run(
    strategy: Strategy,
    cfg: LlmConfig,
    manifest: DatasetManifest,
    index: Bm25Index,
    test: InstanceStore,
    train: InstanceStore,
) -> RunResult:
    """Produce one RunRecord per test instance, id-sorted."""
    result = RunResult(strategy=strategy.name, model_id=cfg.model_id)
    for x in sorted(test, key=lambda inst: inst.id):
        candidates = index.retrieve(x, strategy.M)
        k = _choose_k(strategy, index, x, len(candidates.hits))
        posterior: ClassPosterior | None = None
        prompt_tokens = 0
        try:
            while True:
                try:
                    posterior, prompt_tokens = predict(
                        cfg, manifest, x, candidates, k, train.get
                    )
                    break
                except PromptOverflowError as exc:
                    if exc.fits_at >= k:
                        raise GatewayError(
                            f"prompt for {x.id} overflows context even at k=0"
                        ) from exc
                    log.info("instance %s: context fallback %d -> %d", x.id, k, exc.fits_at)
                    k = exc.fits_at
        except GatewayError as exc:
            log.warning("skipping instance %s: %s", x.id, exc)
            result.skipped.append((x.id, str(exc)))
            continue
        result.records.append(
            RunRecord(
                instance_id=x.id,
                gold_label=x.label,
                predicted_label=posterior.predicted,
                k_used=k,
                posterior=[float(v) for v in posterior.probs],
                posterior_source=posterior.source,
                prompt_tokens=prompt_tokens,
                strategy_kind=strategy.name,
            )
        )
    return result


def write_run(result: RunResult, path: str | Path, config_hash: str = "") -> None:
    """JSONL run file: one header record, then records in id order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "type": "header",
                    "strategy": result.strategy,
                    "model_id": result.model_id,
                    "config_hash": config_hash,
                    "valid": result.valid,
                    "skipped": result.skipped,
                }
            )
        )
        fh.write("\n")
        for rec in sorted(result.records, key=lambda r: r.instance_id):
            fh.write(
                json.dumps(
                    {
                        "type": "record",
                        "instance_id": rec.instance_id,
                        "gold_label": rec.gold_label,
                        "predicted_label": rec.predicted_label,
                        "k_used": rec.k_used,
                        "posterior": rec.posterior,
                        "posterior_source": rec.posterior_source,
                        "prompt_tokens": rec.prompt_tokens,
                        "strategy_kind": rec.strategy_kind,
                    }
                )
            )
            fh.write("\n")


def read_run(path: str | Path) -> tuple[dict, list[RunRecord]]:
    header: dict = {}
    records: list[RunRecord] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            raw = json.loads(line)
            if raw.get("type") == "header":
                header = raw
                continue
            records.append(
                RunRecord(
                    instance_id=raw["instance_id"],
                    gold_label=int(raw["gold_label"]),
                    predicted_label=int(raw["predicted_label"]),
                    k_used=int(raw["k_used"]),
                    posterior=[float(v) for v in raw["posterior"]],
                    posterior_source=raw["posterior_source"],
                    prompt_tokens=int(raw["prompt_tokens"]),
                    strategy_kind=raw["strategy_kind"],
                )
            )
    return header, records

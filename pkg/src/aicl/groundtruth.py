"""Optimal shot-count ground truth for the supervised k-classifier.

For every training instance, probe k = 0..M demonstrations against the
gateway and keep the shot count giving the most confident *correct*
prediction (strict improvement, so ties keep the smallest k).  Instances
never predicted correctly keep the initialization k_star = 1 with
confidence 0.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import DatasetManifest, InstanceStore
from .llm_gateway import GatewayError, LlmConfig
from .prompting import predict
from .text_index import Bm25Index

log = logging.getLogger(__name__)

INCOMPLETE_ABORT_FRACTION = 0.10


class GroundTruthError(Exception):
    pass


@dataclass
class KLabel:
    instance_id: str
    k_star: int
    confidence: float
    probed: list[tuple[int, int, float]] = field(default_factory=list)


def build_ground_truth(
    cfg: LlmConfig,
    manifest: DatasetManifest,
    index: Bm25Index,
    train: InstanceStore,
    M: int,
    keep_never_correct: bool = True,
) -> tuple[list[KLabel], list[str]]:
    """Run the probing loop over the whole training store.

    Returns (labels sorted by instance id, ids of instances left incomplete
    because of gateway failures).  Aborts when more than 10% of instances
    are incomplete.
    """
    labels: list[KLabel] = []
    incomplete: list[str] = []
    ordered = sorted(train, key=lambda inst: inst.id)
    for done, x in enumerate(ordered, start=1):
        candidates = index.retrieve(x, M)
        max_j = min(M, len(candidates.hits))
        max_confidence = 0.0
        k_star = 1
        probed: list[tuple[int, int, float]] = []
        try:
            for j in range(max_j + 1):
                posterior, _ = predict(cfg, manifest, x, candidates, j, train.get)
                predicted = posterior.predicted
                confidence = (
                    float(posterior.probs[predicted]) if predicted == x.label else 0.0
                )
                probed.append((j, predicted, confidence))
                if confidence > max_confidence:
                    max_confidence = confidence
                    k_star = j
        except GatewayError as exc:
            log.warning("instance %s incomplete: %s", x.id, exc)
            incomplete.append(x.id)
            continue
        if max_confidence == 0.0 and not keep_never_correct:
            continue
        labels.append(
            KLabel(instance_id=x.id, k_star=k_star, confidence=max_confidence, probed=probed)
        )
        if done % 1000 == 0:
            log.info("ground truth: %d/%d instances probed", done, len(ordered))
    if len(ordered) and len(incomplete) / len(ordered) > INCOMPLETE_ABORT_FRACTION:
        raise GroundTruthError(
            f"{len(incomplete)} of {len(ordered)} instances incomplete (>10%); aborting"
        )
    return labels, incomplete


def export_klabels(labels: list[KLabel], path: str | Path) -> None:
    if not labels:
        raise GroundTruthError("refusing to export an empty label set")
    with open(path, "w", encoding="utf-8") as fh:
        for lab in sorted(labels, key=lambda l: l.instance_id):
            fh.write(
                json.dumps(
                    {
                        "instance_id": lab.instance_id,
                        "k_star": lab.k_star,
                        "confidence": lab.confidence,
                    }
                )
            )
            fh.write("\n")


def load_klabels(path: str | Path) -> list[KLabel]:
    labels = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            raw = json.loads(line)
            labels.append(
                KLabel(
                    instance_id=str(raw["instance_id"]),
                    k_star=int(raw["k_star"]),
                    confidence=float(raw["confidence"]),
                )
            )
    return labels

"""Unsupervised shot-count selection via NQC.

The NQC estimate of a query is the standard deviation of its top-M
retrieval scores divided by a collection-level score.  Estimates are
max-normalized against the training set, quantized into M equi-spaced
bins, and mapped inversely to k: high predicted retrieval quality gets few
examples, low quality gets many.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

from .corpus import InstanceStore
from .text_index import Bm25Index, RankedCandidates


class QppError(Exception):
    pass


@dataclass
class NqcEstimate:
    raw: float
    normalized: float


@dataclass
class QppCalibration:
    norm_constant: float
    M: int
    sample_size: int
    corpus_hash: str = ""

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "norm_constant": self.norm_constant,
                    "M": self.M,
                    "sample_size": self.sample_size,
                    "corpus_hash": self.corpus_hash,
                },
                fh,
            )
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "QppCalibration":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(
            norm_constant=float(raw["norm_constant"]),
            M=int(raw["M"]),
            sample_size=int(raw["sample_size"]),
            corpus_hash=str(raw.get("corpus_hash", "")),
        )


def nqc(candidates: RankedCandidates, collection_score: float) -> float:
    """Raw NQC: population std of the hit scores over the collection score.

    Empty hit lists yield 0 by convention.
    """
    scores = candidates.scores()
    n = len(scores)
    if n == 0:
        return 0.0
    if collection_score <= 0:
        raise QppError(f"collection_score must be > 0, got {collection_score}")
    mean = sum(scores) / n
    var = sum((s - mean) ** 2 for s in scores) / n
    return math.sqrt(var) / collection_score


def query_nqc(index: Bm25Index, query, M: int) -> float:
    """Convenience: retrieve top-M and compute raw NQC for one instance.

    Falls back to the mean top-M score as the normalizer when the
    pseudo-document collection score is 0 (query fully out of vocabulary
    still returns 0 since the hit list is then empty too).
    """
    candidates = index.retrieve(query, M)
    if not candidates.hits:
        return 0.0
    coll = index.collection_score(query.text)
    if coll <= 0:
        coll = sum(candidates.scores()) / len(candidates.hits)
    if coll <= 0:
        return 0.0
    return nqc(candidates, coll)


def normalize(raw: float, cal: QppCalibration) -> NqcEstimate:
    if cal.norm_constant <= 0:
        raise QppError("calibration has non-positive norm_constant")
    return NqcEstimate(raw=raw, normalized=min(raw / cal.norm_constant, 1.0))


def calibrate(
    index: Bm25Index, train: InstanceStore, M: int, sample_size: int = 1000
) -> QppCalibration:
    """Max raw NQC over a deterministic stride sample of training queries."""
    if sample_size < 1:
        raise QppError(f"sample_size must be >= 1, got {sample_size}")
    ordered = sorted(train, key=lambda inst: inst.id)
    stride = max(1, len(ordered) // sample_size)
    sample = ordered[::stride][:sample_size]
    best = 0.0
    for query in sample:
        best = max(best, query_nqc(index, query, M))
    if best <= 0:
        raise QppError("all sampled queries have zero NQC; corpus is degenerate")
    return QppCalibration(
        norm_constant=best,
        M=M,
        sample_size=len(sample),
        corpus_hash=index.fingerprint(),
    )


def choose_k(est: NqcEstimate, cal: QppCalibration) -> int:
    """Quantize into M equi-spaced bins and map inversely to k in {1..M}."""
    M = cal.M
    bin_idx = min(int(math.floor(est.normalized * M)), M - 1)
    return M - bin_idx

"""Tokenization and a BM25 inverted index over the training split.

Scoring uses Okapi BM25 with k1=1.2, b=0.75 and the +1-inside-log IDF
variant.  Query-side term frequency is ignored: a query contributes one
scoring term per distinct token.  Ties on score break by ascending doc id
so rankings are reproducible.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .corpus import InstanceStore, LabeledInstance

K1 = 1.2
B = 0.75

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class IndexError_(Exception):
    """Raised for invalid index construction or serialization."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric runs, dropping empties."""
    return _TOKEN_RE.findall(text.casefold())


@dataclass
class RankedCandidates:
    """Top-M retrieved examples for a query instance, best first."""

    query_id: str
    hits: list[tuple[str, float]]
    M: int

    def ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.hits]

    def scores(self) -> list[float]:
        return [score for _, score in self.hits]


class Bm25Index:
    """Write-once inverted index; safe for concurrent retrieval."""

    def __init__(self) -> None:
        self.postings: dict[str, list[tuple[str, int]]] = {}
        self.doc_len: dict[str, int] = {}
        self.N = 0
        self.avgdl = 0.0
        self.total_len = 0

    @classmethod
    def build(cls, train: InstanceStore) -> "Bm25Index":
        if len(train) == 0:
            raise IndexError_("cannot build an index over an empty store")
        index = cls()
        for inst in train:
            terms = tokenize(inst.text)
            index.doc_len[inst.id] = len(terms)
            index.total_len += len(terms)
            for term, tf in sorted(Counter(terms).items()):
                index.postings.setdefault(term, []).append((inst.id, tf))
        index.N = len(train)
        index.avgdl = index.total_len / index.N
        return index

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log((self.N - df + 0.5) / (df + 0.5) + 1.0)

    def _tf_part(self, tf: int, doc_len: int) -> float:
        if self.avgdl == 0:
            norm = 1.0
        else:
            norm = 1.0 - B + B * doc_len / self.avgdl
        return tf * (K1 + 1.0) / (tf + K1 * norm)

    def score(self, query_terms: list[str], doc_id: str) -> float:
        """BM25 score of one document; used by retrieval and by callers
        needing a single pairwise score."""
        doc_len = self.doc_len[doc_id]
        total = 0.0
        for term in sorted(set(query_terms)):
            for posting_id, tf in self.postings.get(term, ()):
                if posting_id == doc_id:
                    total += self.idf(term) * self._tf_part(tf, doc_len)
                    break
        return total

    def retrieve(self, query: LabeledInstance, M: int) -> RankedCandidates:
        """Top-M documents for the query, self-match excluded by id."""
        if M < 1:
            raise IndexError_(f"M must be >= 1, got {M}")
        scores: dict[str, float] = {}
        for term in sorted(set(tokenize(query.text))):
            idf = self.idf(term)
            for doc_id, tf in self.postings.get(term, ()):
                if doc_id == query.id:
                    continue
                scores[doc_id] = scores.get(doc_id, 0.0) + idf * self._tf_part(
                    tf, self.doc_len[doc_id]
                )
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:M]
        return RankedCandidates(query_id=query.id, hits=ranked, M=M)

    def collection_score(self, text: str) -> float:
        """BM25 score of the query against the whole corpus treated as one
        pseudo-document (collection tf, total length)."""
        total = 0.0
        for term in sorted(set(tokenize(text))):
            postings = self.postings.get(term)
            if not postings:
                continue
            coll_tf = sum(tf for _, tf in postings)
            total += self.idf(term) * self._tf_part(coll_tf, self.total_len)
        return total

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(f"{self.N}|{self.total_len}".encode())
        for doc_id in sorted(self.doc_len):
            h.update(f"{doc_id}:{self.doc_len[doc_id]};".encode())
        return h.hexdigest()[:16]

    def to_json(self, path: str | Path) -> None:
        payload = {
            "version": 1,
            "N": self.N,
            "total_len": self.total_len,
            "doc_len": self.doc_len,
            "postings": {t: p for t, p in sorted(self.postings.items())},
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False)

    @classmethod
    def from_json(cls, path: str | Path) -> "Bm25Index":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("version") != 1:
            raise IndexError_(f"unsupported index version {payload.get('version')!r}")
        index = cls()
        index.N = payload["N"]
        index.total_len = payload["total_len"]
        index.doc_len = {k: int(v) for k, v in payload["doc_len"].items()}
        index.postings = {
            term: [(doc_id, int(tf)) for doc_id, tf in entries]
            for term, entries in payload["postings"].items()
        }
        index.avgdl = index.total_len / index.N if index.N else 0.0
        return index

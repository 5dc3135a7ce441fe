"""Supervised shot-count prediction: hashed TF-IDF features into softmax
regression trained with cross-entropy on the probed ground-truth labels.

The classifier has M+1 output classes (k = 0..M).  Features are a hashed
bag of words with index = hash64(token) mod D and weight tf * ln(1 + N/df),
L2-normalized, with document frequencies frozen from the training corpus.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .corpus import InstanceStore, LabeledInstance
from .groundtruth import KLabel
from .text_index import tokenize

DEFAULT_DIMS = 2**15


class KPredictorError(Exception):
    pass


def _hash64(token: str) -> int:
    return int.from_bytes(
        hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big"
    )


@dataclass
class HashedTfidf:
    """Hashed TF-IDF vectorizer with frozen corpus statistics."""

    dims: int = DEFAULT_DIMS
    n_docs: int = 0
    df: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dims < 1 or self.dims & (self.dims - 1):
            raise KPredictorError(f"dims must be a power of two, got {self.dims}")

    @classmethod
    def fit(cls, store: InstanceStore, dims: int = DEFAULT_DIMS) -> "HashedTfidf":
        vec = cls(dims=dims)
        vec.n_docs = len(store)
        for inst in store:
            for term in set(tokenize(inst.text)):
                vec.df[term] = vec.df.get(term, 0) + 1
        return vec

    def featurize(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        """Sparse (indices, weights) for one text; L2-normalized, empty text
        gives the zero vector.  Unseen tokens use df = 1."""
        buckets: dict[int, float] = {}
        tf: dict[str, int] = {}
        for term in tokenize(text):
            tf[term] = tf.get(term, 0) + 1
        for term, count in tf.items():
            idx = _hash64(term) % self.dims
            weight = count * math.log(1.0 + self.n_docs / max(self.df.get(term, 1), 1))
            buckets[idx] = buckets.get(idx, 0.0) + weight
        if not buckets:
            return np.empty(0, dtype=np.int64), np.empty(0)
        indices = np.array(sorted(buckets), dtype=np.int64)
        weights = np.array([buckets[i] for i in indices])
        norm = np.linalg.norm(weights)
        if norm > 0:
            weights = weights / norm
        return indices, weights

    def matrix(self, texts: list[str]) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for r, text in enumerate(texts):
            indices, weights = self.featurize(text)
            rows.extend([r] * len(indices))
            cols.extend(indices.tolist())
            vals.extend(weights.tolist())
        return sp.csr_matrix(
            (vals, (rows, cols)), shape=(len(texts), self.dims), dtype=np.float64
        )


@dataclass
class Hyper:
    lr: float = 0.1
    epochs: int = 10
    batch: int = 64
    l2: float = 1e-4
    seed: int = 13
    class_weighting: bool = False


@dataclass
class KModel:
    theta: np.ndarray  # D x (M+1)
    M: int
    D: int
    vectorizer: HashedTfidf
    training_meta: dict = field(default_factory=dict)

    def save(self, path: str | Path) -> None:
        tokens = sorted(self.vectorizer.df)
        np.savez_compressed(
            path,
            theta=self.theta,
            M=np.array(self.M),
            D=np.array(self.D),
            n_docs=np.array(self.vectorizer.n_docs),
            df_tokens=np.array(tokens, dtype=object),
            df_counts=np.array([self.vectorizer.df[t] for t in tokens], dtype=np.int64),
            training_meta=np.array(json.dumps(self.training_meta)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "KModel":
        with np.load(path, allow_pickle=True) as data:
            vec = HashedTfidf(dims=int(data["D"]), n_docs=int(data["n_docs"]))
            vec.df = {
                str(t): int(c) for t, c in zip(data["df_tokens"], data["df_counts"])
            }
            return cls(
                theta=np.asarray(data["theta"], dtype=np.float64),
                M=int(data["M"]),
                D=int(data["D"]),
                vectorizer=vec,
                training_meta=json.loads(str(data["training_meta"])),
            )


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def loss_and_grad(
    theta: np.ndarray,
    X: sp.csr_matrix,
    y: np.ndarray,
    l2: float,
    sample_weight: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Mean weighted cross-entropy with L2 penalty, and its gradient."""
    n = X.shape[0]
    probs = softmax(X @ theta)
    picked = np.clip(probs[np.arange(n), y], 1e-300, None)
    if sample_weight is None:
        sample_weight = np.ones(n)
    wsum = sample_weight.sum()
    loss = float(-(sample_weight * np.log(picked)).sum() / wsum)
    loss += 0.5 * l2 * float((theta**2).sum())

    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta = delta * (sample_weight / wsum)[:, None]
    grad = np.asarray(X.T @ delta) + l2 * theta
    return loss, grad


def train(
    klabels: list[KLabel],
    train_store: InstanceStore,
    M: int,
    hyper: Hyper = Hyper(),
    dims: int = DEFAULT_DIMS,
) -> KModel:
    """Mini-batch gradient descent on softmax cross-entropy over k-labels."""
    n_classes = M + 1
    usable = [lab for lab in klabels if lab.instance_id in train_store]
    if len(usable) < n_classes:
        raise KPredictorError(
            f"need at least {n_classes} labeled instances, got {len(usable)}"
        )
    y = np.array([lab.k_star for lab in usable], dtype=np.int64)
    if (y < 0).any() or (y > M).any():
        raise KPredictorError("k_star labels outside 0..M")
    if len(np.unique(y)) < 2:
        raise KPredictorError("degenerate ground truth: only one k class present")

    vectorizer = HashedTfidf.fit(train_store, dims=dims)
    X = vectorizer.matrix([train_store.get(lab.instance_id).text for lab in usable])

    sample_weight = None
    if hyper.class_weighting:
        counts = np.bincount(y, minlength=n_classes).astype(np.float64)
        inv = np.where(counts > 0, 1.0 / np.clip(counts, 1, None), 0.0)
        sample_weight = inv[y]

    rng = np.random.default_rng(hyper.seed)
    theta = np.zeros((vectorizer.dims, n_classes))
    n = X.shape[0]
    initial_loss, _ = loss_and_grad(theta, X, y, hyper.l2, sample_weight)
    trace = [initial_loss]
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.batch):
            idx = order[start : start + hyper.batch]
            sw = sample_weight[idx] if sample_weight is not None else None
            _, grad = loss_and_grad(theta, X[idx], y[idx], hyper.l2, sw)
            theta -= hyper.lr * grad
        epoch_loss, _ = loss_and_grad(theta, X, y, hyper.l2, sample_weight)
        if not np.isfinite(epoch_loss):
            raise KPredictorError("training diverged (loss is not finite); reduce lr")
        trace.append(epoch_loss)

    meta = {
        "epochs": hyper.epochs,
        "lr": hyper.lr,
        "l2": hyper.l2,
        "batch": hyper.batch,
        "seed": hyper.seed,
        "initial_loss": trace[0],
        "final_loss": trace[-1],
        "loss_trace": trace,
    }
    return KModel(theta=theta, M=M, D=vectorizer.dims, vectorizer=vectorizer, training_meta=meta)


def predict_k(model: KModel, x: LabeledInstance) -> int:
    """argmax over softmax(features @ theta); ties go to the smaller k."""
    if model.theta.shape != (model.D, model.M + 1):
        raise KPredictorError(
            f"model shape mismatch: theta {model.theta.shape} vs D={model.D}, M={model.M}"
        )
    indices, weights = model.vectorizer.featurize(x.text)
    logits = weights @ model.theta[indices] if len(indices) else np.zeros(model.M + 1)
    return int(np.argmax(logits))

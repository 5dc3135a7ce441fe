"""Adaptive in-context learning pipeline.

Retrieval-backed few-shot example selection for text classification with a
frozen LLM, where the number of demonstrations per test instance is either
fixed (static ICL), chosen by an unsupervised retrieval-quality rule
(QPP-AICL), or predicted by a trained shot-count classifier (SAICL).
"""

__version__ = "0.1.0"

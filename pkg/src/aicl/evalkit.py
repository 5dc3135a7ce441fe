"""Macro-averaged classification metrics and a comparison table over runs.

Macro-F1 is the unweighted mean of per-class F1 scores (not the harmonic
mean of macro precision and recall); any zero denominator contributes 0.
AIS is the mean prompt token count rounded to the nearest integer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .runner import RunRecord


class EvalError(Exception):
    pass


@dataclass
class MetricsReport:
    per_class: list[tuple[float, float, float]]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    avg_k: float
    ais: int
    n: int

    def to_dict(self) -> dict:
        return {
            "per_class": [list(t) for t in self.per_class],
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "avg_k": self.avg_k,
            "ais": self.ais,
            "n": self.n,
        }

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "MetricsReport":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(
            per_class=[tuple(t) for t in raw["per_class"]],
            macro_precision=raw["macro_precision"],
            macro_recall=raw["macro_recall"],
            macro_f1=raw["macro_f1"],
            avg_k=raw["avg_k"],
            ais=int(raw["ais"]),
            n=int(raw["n"]),
        )


def score(records: list[RunRecord], p: int) -> MetricsReport:
    """Confusion-matrix metrics over one run."""
    if not records:
        raise EvalError("cannot score an empty record list")
    confusion = [[0] * p for _ in range(p)]  # [gold][predicted]
    for rec in records:
        if not (0 <= rec.gold_label < p and 0 <= rec.predicted_label < p):
            raise EvalError(f"label out of range for instance {rec.instance_id}")
        confusion[rec.gold_label][rec.predicted_label] += 1

    per_class = []
    for c in range(p):
        tp = confusion[c][c]
        fp = sum(confusion[g][c] for g in range(p)) - tp
        fn = sum(confusion[c]) - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append((precision, recall, f1))

    n = len(records)
    return MetricsReport(
        per_class=per_class,
        macro_precision=sum(t[0] for t in per_class) / p,
        macro_recall=sum(t[1] for t in per_class) / p,
        macro_f1=sum(t[2] for t in per_class) / p,
        avg_k=sum(r.k_used for r in records) / n,
        ais=round(sum(r.prompt_tokens for r in records) / n),
        n=n,
    )


def compare(reports: list[tuple[str, MetricsReport]]) -> tuple[str, dict]:
    """Render a method-by-metric comparison table; best F-score bolded."""
    if not reports:
        raise EvalError("need at least one report to compare")
    best_f = max(rep.macro_f1 for _, rep in reports)

    header = ["Method", "k", "Precision", "Recall", "F-score", "AIS"]
    rows = [header]
    json_rows = []
    for name, rep in reports:
        f_text = f"{rep.macro_f1:.4f}"
        if rep.macro_f1 == best_f:
            f_text = f"**{f_text}**"
        rows.append(
            [
                name,
                f"{rep.avg_k:.2f}",
                f"{rep.macro_precision:.4f}",
                f"{rep.macro_recall:.4f}",
                f_text,
                str(rep.ais),
            ]
        )
        json_rows.append(
            {
                "method": name,
                "k": rep.avg_k,
                "precision": rep.macro_precision,
                "recall": rep.macro_recall,
                "f_score": rep.macro_f1,
                "ais": rep.ais,
                "best": rep.macro_f1 == best_f,
            }
        )

    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = []
    for r, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
        if r == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines), {"rows": json_rows}

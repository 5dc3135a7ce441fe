"""Labeled-instance stores, dataset manifests and file-format adapters.

The canonical on-disk form of a split is JSONL, one object
``{"id", "text", "label"}`` per line, UTF-8.  Adapters exist for the three
public dataset layouts (AGNews CSV, SST2 TSV, Jigsaw CSV) plus canonical
JSONL itself.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

FORMATS = ("agnews_csv", "sst2_tsv", "jigsaw_csv", "jsonl")

JIGSAW_FLAGS = ("toxic", "severe_toxic", "obscene", "threat", "insult", "identity_hate")


class CorpusError(Exception):
    """Raised for malformed dataset files or invariant violations."""


@dataclass(frozen=True)
class LabeledInstance:
    """One text with an integer class label."""

    id: str
    text: str
    label: int


@dataclass
class DatasetManifest:
    """Dataset-level metadata: class names and their verbaliser word sets."""

    name: str
    num_classes: int
    class_names: list[str]
    verbaliser_sets: list[list[str]]

    def validate(self) -> None:
        if self.num_classes < 2:
            raise CorpusError(f"num_classes must be >= 2, got {self.num_classes}")
        if len(self.class_names) != self.num_classes:
            raise CorpusError(
                f"expected {self.num_classes} class names, got {len(self.class_names)}"
            )
        if len(self.verbaliser_sets) != self.num_classes:
            raise CorpusError(
                f"expected {self.num_classes} verbaliser sets, got {len(self.verbaliser_sets)}"
            )
        seen: dict[str, int] = {}
        for ci, words in enumerate(self.verbaliser_sets):
            if not words:
                raise CorpusError(f"verbaliser set for class {ci} is empty")
            for w in words:
                key = w.casefold()
                if key in seen and seen[key] != ci:
                    raise CorpusError(
                        f"verbaliser word {w!r} appears in classes {seen[key]} and {ci}"
                    )
                seen[key] = ci

    @classmethod
    def from_json(cls, path: str | Path) -> "DatasetManifest":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        m = cls(
            name=raw["name"],
            num_classes=int(raw["num_classes"]),
            class_names=list(raw["class_names"]),
            verbaliser_sets=[list(v) for v in raw["verbaliser_sets"]],
        )
        m.validate()
        return m

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "name": self.name,
                    "num_classes": self.num_classes,
                    "class_names": self.class_names,
                    "verbaliser_sets": self.verbaliser_sets,
                },
                fh,
                indent=2,
            )
            fh.write("\n")


@dataclass
class InstanceStore:
    """Ordered, immutable-after-load collection of labeled instances."""

    instances: list[LabeledInstance] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_id = {}
        for inst in self.instances:
            if inst.id in self._by_id:
                raise CorpusError(f"duplicate instance id {inst.id!r}")
            self._by_id[inst.id] = inst

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[LabeledInstance]:
        return iter(self.instances)

    def __contains__(self, instance_id: str) -> bool:
        return instance_id in self._by_id

    def get(self, instance_id: str) -> LabeledInstance:
        try:
            return self._by_id[instance_id]
        except KeyError:
            raise CorpusError(f"unknown instance id {instance_id!r}") from None

    def class_histogram(self, num_classes: int) -> list[int]:
        counts = [0] * num_classes
        for inst in self.instances:
            counts[inst.label] += 1
        return counts


def _check_instance(inst: LabeledInstance, manifest: DatasetManifest, where: str) -> None:
    if not inst.text.strip():
        raise CorpusError(f"{where}: empty text for id {inst.id!r}")
    if not 0 <= inst.label < manifest.num_classes:
        raise CorpusError(f"{where}: label {inst.label} out of range for id {inst.id!r}")


def write_store(store: InstanceStore, path: str | Path) -> None:
    """Write a store in canonical JSONL form."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in store:
            fh.write(
                json.dumps(
                    {"id": inst.id, "text": inst.text, "label": inst.label},
                    ensure_ascii=False,
                )
            )
            fh.write("\n")


def load(split_path: str | Path) -> InstanceStore:
    """Load a canonical JSONL split, preserving file order and checking ids."""
    instances = []
    with open(split_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                inst = LabeledInstance(
                    id=str(raw["id"]), text=str(raw["text"]), label=int(raw["label"])
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusError(f"{split_path}:{lineno}: malformed record ({exc})") from exc
            instances.append(inst)
    return InstanceStore(instances)


def _parse_agnews(path: Path, manifest: DatasetManifest, prefix: str) -> list[LabeledInstance]:
    # AGNews CSV rows: class index 1..4, title, description; no header.
    instances = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) < 2:
                raise CorpusError(f"{path}:{lineno}: expected >=2 columns, got {len(row)}")
            try:
                raw_label = int(row[0])
            except ValueError:
                raise CorpusError(
                    f"{path}:{lineno}: unknown label value {row[0]!r}"
                ) from None
            if not 1 <= raw_label <= manifest.num_classes:
                raise CorpusError(f"{path}:{lineno}: unknown label value {raw_label!r}")
            text = " ".join(part.strip() for part in row[1:] if part.strip())
            instances.append(
                LabeledInstance(id=f"{prefix}{lineno:07d}", text=text, label=raw_label - 1)
            )
    return instances


def _parse_sst2(path: Path, manifest: DatasetManifest, prefix: str) -> list[LabeledInstance]:
    # sentence<TAB>label with labels {0,1}; a "sentence\tlabel" header is tolerated.
    instances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if lineno == 1 and line.lower().startswith("sentence\t"):
                continue
            parts = line.rsplit("\t", 1)
            if len(parts) != 2:
                raise CorpusError(f"{path}:{lineno}: expected sentence<TAB>label")
            text, raw_label = parts
            if raw_label not in ("0", "1"):
                raise CorpusError(f"{path}:{lineno}: unknown label value {raw_label!r}")
            instances.append(
                LabeledInstance(id=f"{prefix}{lineno:07d}", text=text, label=int(raw_label))
            )
    return instances


def _parse_jigsaw(path: Path, manifest: DatasetManifest, prefix: str) -> list[LabeledInstance]:
    # Six annotation flags collapse to binary: label 1 iff any flag is set.
    instances = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ("id", "comment_text") if c not in (reader.fieldnames or [])]
        if missing:
            raise CorpusError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            flags = []
            for flag in JIGSAW_FLAGS:
                value = row.get(flag, "0").strip() or "0"
                if value not in ("0", "1", "-1"):
                    raise CorpusError(f"{path}:{lineno}: unknown label value {value!r}")
                flags.append(value == "1")
            instances.append(
                LabeledInstance(
                    id=f"{prefix}{row['id']}",
                    text=row["comment_text"],
                    label=1 if any(flags) else 0,
                )
            )
    return instances


_ADAPTERS = {
    "agnews_csv": (_parse_agnews, "train.csv", "test.csv"),
    "sst2_tsv": (_parse_sst2, "train.tsv", "test.tsv"),
    "jigsaw_csv": (_parse_jigsaw, "train.csv", "test.csv"),
    "jsonl": (None, "train.jsonl", "test.jsonl"),
}


def _ingest_one(path: Path, fmt: str, manifest: DatasetManifest, prefix: str) -> InstanceStore:
    if not path.exists():
        raise CorpusError(f"input file not found: {path}")
    if fmt == "jsonl":
        store = load(path)
    else:
        parser = _ADAPTERS[fmt][0]
        store = InstanceStore(parser(path, manifest, prefix))
    for inst in store:
        _check_instance(inst, manifest, str(path))
    return store


def ingest(
    source_path: str | Path,
    fmt: str,
    manifest: DatasetManifest,
    out_dir: str | Path | None = None,
) -> tuple[InstanceStore, InstanceStore]:
    """Ingest raw dataset files into canonical train/test stores.

    ``source_path`` is a directory holding the adapter's conventional split
    files (e.g. ``train.csv`` / ``test.csv``).  When ``out_dir`` is given the
    canonical JSONL per split is written there as ``train.jsonl`` /
    ``test.jsonl``.
    """
    if fmt not in FORMATS:
        raise CorpusError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    manifest.validate()
    source = Path(source_path)
    _, train_name, test_name = _ADAPTERS[fmt]
    train = _ingest_one(source / train_name, fmt, manifest, "train-")
    test = _ingest_one(source / test_name, fmt, manifest, "test-")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_store(train, out / "train.jsonl")
        write_store(test, out / "test.jsonl")
    return train, test

"""End-to-end walkthrough of the adaptive in-context-learning pipeline.

Runs entirely offline against the deterministic mock oracle: builds a tiny
synthetic corpus, ingests it, indexes it, calibrates the retrieval-quality
estimator, builds optimal-shot-count ground truth, trains the shot-count
classifier, and compares every strategy on the test split.

    python3 demos/run_mock_pipeline.py
"""

import json
import random
import tempfile
from pathlib import Path

from click.testing import CliRunner

from aicl.cli import main
from aicl.corpus import DatasetManifest, InstanceStore, LabeledInstance, write_store

POSITIVE_WORDS = ["great", "wonderful", "superb", "delightful", "excellent"]
NEGATIVE_WORDS = ["terrible", "awful", "dreadful", "boring", "dire"]
NOUNS = ["film", "plot", "script", "acting", "ending", "pacing"]


def synthetic_reviews(n, rng):
    """Tiny sentiment-like corpus: label 1 iff a positive word appears."""
    out = []
    for i in range(n):
        label = rng.randrange(2)
        word = rng.choice(POSITIVE_WORDS if label else NEGATIVE_WORDS)
        noun = rng.choice(NOUNS)
        extra = rng.choice(NOUNS)
        out.append(
            LabeledInstance(
                id=f"r{i:04d}", text=f"{word} {noun} with {extra}", label=label
            )
        )
    return out


def run_stage(config_path, *args):
    result = CliRunner().invoke(main, [args[0], "--config", str(config_path), *args[1:]])
    print(f"$ aicl {' '.join(args)}")
    print(result.output)
    if result.exit_code != 0:
        raise SystemExit(result.exit_code)


def demo(root: Path) -> None:
    rng = random.Random(42)
    source = root / "source"
    source.mkdir()
    write_store(InstanceStore(synthetic_reviews(300, rng)), source / "train.jsonl")
    write_store(InstanceStore(synthetic_reviews(60, rng)), source / "test.jsonl")

    DatasetManifest(
        name="demo-sentiment",
        num_classes=2,
        class_names=["negative", "positive"],
        verbaliser_sets=[["negative", "false"], ["positive", "true"]],
    ).to_json(root / "manifest.json")

    config = {
        "manifest": "manifest.json",
        "M": 5,
        "seed": 13,
        "source": {"path": "source", "format": "jsonl"},
        "llm": {"endpoint_url": "mock:", "model_id": "mock-model"},
        "qpp": {"sample_size": 100},
        "kpredictor": {"lr": 0.5, "epochs": 20},
        "paths": {"work_dir": "work", "cache_dir": "cache"},
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2))

    for stage in ("ingest", "index", "calibrate", "build-gt", "train-k"):
        run_stage(config_path, stage)
    for strategy in ("zero", "static:1", "static:3", "static:5", "qpp", "saicl"):
        run_stage(config_path, "run", "--strategy", strategy)
        run_stage(config_path, "eval", "--strategy", strategy)
    run_stage(config_path, "compare")


if __name__ == "__main__":
    with tempfile.TemporaryDirectory(prefix="aicl-demo-") as tmp:
        demo(Path(tmp))

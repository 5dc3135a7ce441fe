"""Operator entry point: staged pipeline subcommands.

Stages write file artifacts under the configured work directory so runs
are diffable and resumable:

    ingest     train.jsonl / test.jsonl
    index      index.json
    calibrate  qpp_calibration.json
    build-gt   klabels.jsonl
    train-k    kmodel.npz
    run        runs/<strategy>.jsonl
    eval       reports/<strategy>.json
    compare    compare.txt / compare.json
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click

from . import corpus, evalkit, groundtruth, kpredictor, qpp, runner, text_index
from .llm_gateway import LlmConfig

CONFIG_ENV = "AICL_CONFIG"


@dataclass
class PipelineConfig:
    manifest_path: Path
    M: int
    seed: int
    llm: LlmConfig
    source_path: Path
    source_format: str
    work_dir: Path
    qpp_sample_size: int
    hyper: kpredictor.Hyper
    dims: int
    config_hash: str
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        base = Path(path).resolve().parent

        def resolve(p: str) -> Path:
            q = Path(p)
            return q if q.is_absolute() else base / q

        paths = raw.get("paths", {})
        work_dir = resolve(paths.get("work_dir", "work"))
        llm_raw = dict(raw.get("llm", {}))
        cache_dir = paths.get("cache_dir")
        llm = LlmConfig(
            endpoint_url=llm_raw.get("endpoint_url", "mock:"),
            model_id=llm_raw.get("model_id", "mock-model"),
            max_context_tokens=int(llm_raw.get("max_context_tokens", 2048)),
            top_logprobs=int(llm_raw.get("top_logprobs", 5)),
            timeout_ms=int(llm_raw.get("timeout_ms", 30000)),
            cache_dir=str(resolve(cache_dir)) if cache_dir else None,
        )
        kp = raw.get("kpredictor", {})
        hyper = kpredictor.Hyper(
            lr=float(kp.get("lr", 0.1)),
            epochs=int(kp.get("epochs", 10)),
            batch=int(kp.get("batch", 64)),
            l2=float(kp.get("l2", 1e-4)),
            seed=int(kp.get("seed", raw.get("seed", 13))),
            class_weighting=bool(kp.get("class_weighting", False)),
        )
        source = raw.get("source", {})
        config_hash = hashlib.sha256(
            json.dumps(raw, sort_keys=True).encode("utf-8")
        ).hexdigest()[:16]
        return cls(
            manifest_path=resolve(raw["manifest"]),
            M=int(raw.get("M", 5)),
            seed=int(raw.get("seed", 13)),
            llm=llm,
            source_path=resolve(source.get("path", ".")),
            source_format=source.get("format", "jsonl"),
            work_dir=work_dir,
            qpp_sample_size=int(raw.get("qpp", {}).get("sample_size", 1000)),
            hyper=hyper,
            dims=int(kp.get("dims", kpredictor.DEFAULT_DIMS)),
            config_hash=config_hash,
            raw=raw,
        )


def _load_config(config_path: str | None) -> PipelineConfig:
    import os

    path = config_path or os.environ.get(CONFIG_ENV)
    if not path:
        click.echo("error: no config given (use --config or AICL_CONFIG)", err=True)
        sys.exit(2)
    cfg = PipelineConfig.from_file(path)
    click.echo(
        f"[aicl] config_hash={cfg.config_hash} model_id={cfg.llm.model_id} seed={cfg.seed}"
    )
    return cfg


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        click.echo(f"error: missing artifact {path.name}; {stage} required", err=True)
        sys.exit(2)
    return path


def _manifest(cfg: PipelineConfig) -> corpus.DatasetManifest:
    if not cfg.manifest_path.exists():
        click.echo(f"error: manifest not found at {cfg.manifest_path}", err=True)
        sys.exit(2)
    return corpus.DatasetManifest.from_json(cfg.manifest_path)


def _load_split(cfg: PipelineConfig, name: str) -> corpus.InstanceStore:
    return corpus.load(_require(cfg.work_dir / f"{name}.jsonl", "ingest"))


def _load_index(cfg: PipelineConfig) -> text_index.Bm25Index:
    return text_index.Bm25Index.from_json(_require(cfg.work_dir / "index.json", "index"))


config_option = click.option("--config", "config_path", default=None, help="Pipeline config JSON.")


@click.group()
def main() -> None:
    """Adaptive in-context learning pipeline."""


@main.command()
@config_option
def ingest(config_path: str | None) -> None:
    """Ingest raw dataset files into canonical JSONL splits."""
    cfg = _load_config(config_path)
    manifest = _manifest(cfg)
    cfg.work_dir.mkdir(parents=True, exist_ok=True)
    try:
        train, test = corpus.ingest(
            cfg.source_path, cfg.source_format, manifest, out_dir=cfg.work_dir
        )
    except corpus.CorpusError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"ingested train={len(train)} test={len(test)}")
    for split, store in (("train", train), ("test", test)):
        hist = store.class_histogram(manifest.num_classes)
        click.echo(f"  {split} class histogram: {hist}")


@main.command()
@config_option
def index(config_path: str | None) -> None:
    """Build the BM25 index over the training split."""
    cfg = _load_config(config_path)
    train = _load_split(cfg, "train")
    idx = text_index.Bm25Index.build(train)
    idx.to_json(cfg.work_dir / "index.json")
    click.echo(f"indexed N={idx.N} avgdl={idx.avgdl:.2f} vocab={len(idx.postings)}")


@main.command()
@config_option
def calibrate(config_path: str | None) -> None:
    """Calibrate the NQC max-normalization constant on the training set."""
    cfg = _load_config(config_path)
    train = _load_split(cfg, "train")
    idx = _load_index(cfg)
    cal = qpp.calibrate(idx, train, cfg.M, cfg.qpp_sample_size)
    cal.to_json(cfg.work_dir / "qpp_calibration.json")
    click.echo(
        f"calibrated norm_constant={cal.norm_constant:.6f} over {cal.sample_size} queries"
    )


@main.command("build-gt")
@config_option
def build_gt(config_path: str | None) -> None:
    """Probe k=0..M per training instance to build optimal-k ground truth."""
    cfg = _load_config(config_path)
    manifest = _manifest(cfg)
    train = _load_split(cfg, "train")
    idx = _load_index(cfg)
    labels, incomplete = groundtruth.build_ground_truth(
        cfg.llm, manifest, idx, train, cfg.M
    )
    groundtruth.export_klabels(labels, cfg.work_dir / "klabels.jsonl")
    click.echo(f"ground truth: {len(labels)} labels, {len(incomplete)} incomplete")


@main.command("train-k")
@config_option
def train_k(config_path: str | None) -> None:
    """Train the supervised shot-count classifier."""
    cfg = _load_config(config_path)
    train = _load_split(cfg, "train")
    labels = groundtruth.load_klabels(_require(cfg.work_dir / "klabels.jsonl", "build-gt"))
    model = kpredictor.train(labels, train, cfg.M, cfg.hyper, dims=cfg.dims)
    model.save(cfg.work_dir / "kmodel.npz")
    click.echo(
        f"trained k-model: final_loss={model.training_meta['final_loss']:.4f} "
        f"on {len(labels)} labels"
    )


def _build_strategy(cfg: PipelineConfig, name: str) -> runner.Strategy:
    if name == "zero":
        return runner.Strategy.zero_shot(cfg.M)
    if name.startswith("static:"):
        return runner.Strategy.static(int(name.split(":", 1)[1]), cfg.M)
    if name == "qpp":
        cal = qpp.QppCalibration.from_json(
            _require(cfg.work_dir / "qpp_calibration.json", "calibrate")
        )
        return runner.Strategy.qpp_aicl(cal)
    if name == "saicl":
        model = kpredictor.KModel.load(_require(cfg.work_dir / "kmodel.npz", "train-k"))
        return runner.Strategy.saicl(model)
    click.echo(f"error: unknown strategy {name!r}", err=True)
    sys.exit(2)


def _strategy_file(name: str) -> str:
    return name.replace(":", "_")


@main.command()
@config_option
@click.option("--strategy", required=True, help="zero | static:k | qpp | saicl")
def run(config_path: str | None, strategy: str) -> None:
    """Run a strategy over the evaluation split."""
    cfg = _load_config(config_path)
    manifest = _manifest(cfg)
    train = _load_split(cfg, "train")
    test = _load_split(cfg, "test")
    idx = _load_index(cfg)
    strat = _build_strategy(cfg, strategy)
    result = runner.run(strat, cfg.llm, manifest, idx, test, train)
    runs_dir = cfg.work_dir / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    out = runs_dir / f"{_strategy_file(strategy)}.jsonl"
    runner.write_run(result, out, config_hash=cfg.config_hash)
    status = "valid" if result.valid else "INVALID (>5% skipped)"
    click.echo(
        f"run {strat.name}: {len(result.records)} records, "
        f"{len(result.skipped)} skipped -> {out.name} [{status}]"
    )


@main.command("eval")
@config_option
@click.option("--strategy", required=True, help="Strategy whose run file to score.")
def eval_cmd(config_path: str | None, strategy: str) -> None:
    """Score a run file into a metrics report."""
    cfg = _load_config(config_path)
    manifest = _manifest(cfg)
    run_path = _require(
        cfg.work_dir / "runs" / f"{_strategy_file(strategy)}.jsonl", "run"
    )
    _, records = runner.read_run(run_path)
    report = evalkit.score(records, manifest.num_classes)
    reports_dir = cfg.work_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    report.to_json(reports_dir / f"{_strategy_file(strategy)}.json")
    click.echo(
        f"{strategy}: macro_f1={report.macro_f1:.4f} avg_k={report.avg_k:.2f} "
        f"ais={report.ais} n={report.n}"
    )


@main.command()
@config_option
@click.option(
    "--strategy",
    "strategies",
    multiple=True,
    help="Strategies to include (default: every report present).",
)
def compare(config_path: str | None, strategies: tuple[str, ...]) -> None:
    """Render a comparison table over evaluated strategies."""
    cfg = _load_config(config_path)
    reports_dir = cfg.work_dir / "reports"
    if strategies:
        names = list(strategies)
    else:
        names = sorted(
            p.stem.replace("static_", "static:") for p in reports_dir.glob("*.json")
        ) if reports_dir.exists() else []
    if not names:
        click.echo("error: no reports found; eval required", err=True)
        sys.exit(2)
    named = []
    for name in names:
        path = _require(reports_dir / f"{_strategy_file(name)}.json", "eval")
        named.append((name, evalkit.MetricsReport.from_json(path)))
    text, table = evalkit.compare(named)
    (cfg.work_dir / "compare.txt").write_text(text + "\n", encoding="utf-8")
    with open(cfg.work_dir / "compare.json", "w", encoding="utf-8") as fh:
        json.dump(table, fh, indent=2)
        fh.write("\n")
    click.echo(text)


if __name__ == "__main__":
    main()

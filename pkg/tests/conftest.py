import pytest

from aicl.corpus import DatasetManifest, InstanceStore, LabeledInstance
from aicl.llm_gateway import LlmConfig


@pytest.fixture
def binary_manifest():
    return DatasetManifest(
        name="binary",
        num_classes=2,
        class_names=["negative", "positive"],
        verbaliser_sets=[["negative", "false"], ["positive", "true"]],
    )


@pytest.fixture
def mock_cfg(tmp_path):
    return LlmConfig(
        endpoint_url="mock:",
        model_id="mock-model",
        max_context_tokens=2048,
        cache_dir=str(tmp_path / "cache"),
    )


def make_store(rows):
    """rows: iterable of (id, text, label)."""
    return InstanceStore([LabeledInstance(id=i, text=t, label=l) for i, t, l in rows])


@pytest.fixture
def store_factory():
    return make_store

import json
from pathlib import Path

import pytest

from migroup.testing.stub_server import StubServer
from migroup.types import (
    DatasetDescriptor,
    InstructionInstance,
    MediaRef,
    PredictionTriplet,
)

REPO_ROOT = Path(__file__).resolve().parents[1]
DEMO_DIR = REPO_ROOT / "demo"


@pytest.fixture(scope="session")
def demo_dir() -> Path:
    return DEMO_DIR


@pytest.fixture(scope="session")
def demo_answers() -> dict:
    return json.loads((DEMO_DIR / "stub_answers.json").read_text(encoding="utf-8"))


@pytest.fixture()
def stub(demo_answers):
    with StubServer(demo_answers) as server:
        yield server


def make_instance(iid="i-1", question="What is shown?", gold="zebra", **kw) -> InstructionInstance:
    defaults = dict(
        modality1="a zebra on grass",
        modality2=MediaRef(uri=f"media/{iid}.png"),
        options=(),
    )
    defaults.update(kw)
    return InstructionInstance(
        instance_id=iid, question=question, gold_answer=gold, **defaults
    )


def make_descriptor(dataset_id="ds", n=1, template="default", **kw) -> DatasetDescriptor:
    defaults = dict(
        name=dataset_id,
        domain_tag="multimedia",
        instance_count=n,
        prompt_template_id=template,
    )
    defaults.update(kw)
    return DatasetDescriptor(dataset_id=dataset_id, **defaults)


def make_triplet(iid, y1, y2, ym) -> PredictionTriplet:
    return PredictionTriplet(instance_id=iid, y1=y1, y2=y2, ym=ym)


def planted_triplets(category: str, ids: list[str], gold: str = "x") -> list[PredictionTriplet]:
    """Triplets whose exact-match deltas sit at one interaction anchor."""
    out = []
    for iid in ids:
        if category == "redundancy":
            out.append(make_triplet(iid, gold, gold, gold))
        elif category == "uniqueness":
            out.append(make_triplet(iid, gold, "other", gold))
        elif category == "synergy":
            out.append(make_triplet(iid, "alpha", "beta", gold))
        else:
            raise ValueError(category)
    return out

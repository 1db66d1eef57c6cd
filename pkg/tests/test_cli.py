import json
from pathlib import Path

import pytest
import yaml

from migroup.cli import main
from migroup.fixtures import load_training_roster
from migroup.testing.stub_server import StubServer
from migroup.types import DatasetDescriptor, InstructionInstance, MediaRef, write_dataset

from conftest import DEMO_DIR


def write_config(path: Path, corpus_root: Path, out_root: Path, stub_url: str, **extra) -> Path:
    cfg = {
        "corpus_root": str(corpus_root),
        "output_root": str(out_root),
        "seed": 7,
        "determinism_mode": True,
        "similarity_id": "exact_match",
        "parallelism": 4,
        "sampling": {"num_draws": 3, "draw_size": 10, "replacement_within_draw": False},
        "boundaries": {"synergy_upper": 0.5, "uniqueness_upper": 1.5},
        "eval": {"method_id": "demo_model"},
        "endpoints": {
            role: {"endpoint_url": stub_url, "model_id": "stub-model"}
            for role in ("unimodal1", "unimodal2", "multimodal")
        },
    }
    cfg.update(extra)
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return path


def run(subcommand: str, config: Path, *flags: str) -> int:
    return main([subcommand, "--config", str(config), *flags])


def artifact_bytes(out_root: Path) -> dict[str, bytes]:
    runs = out_root / "runs"
    return {
        str(p.relative_to(runs)): p.read_bytes()
        for p in sorted(runs.rglob("*"))
        if p.is_file()
    }


@pytest.fixture()
def demo_config(tmp_path, stub):
    out_root = tmp_path / "out"
    config = write_config(tmp_path / "config.yaml", DEMO_DIR / "corpus", out_root, stub.chat_url)
    return config, out_root


PIPELINE = ["validate", "predict", "score", "distance", "group", "manifest", "eval", "report"]


class TestPipeline:
    def test_full_pipeline_and_warm_cache_determinism(self, demo_config):
        config, out_root = demo_config
        for sub in PIPELINE:
            assert run(sub, config) == 0, sub

        run_dir = next((out_root / "runs").iterdir())
        expected = [
            "validation/report.json",
            "predictions/demo_caption.jsonl",
            "scores/scores.json",
            "distance/distance_matrix.json",
            "distance/distance_matrix.csv",
            "groups/groups.json",
            "manifests/manifest_index.json",
            "manifests/train_G_R.jsonl",
            "eval/results.jsonl",
            "report/table.txt",
            "report/table.csv",
        ]
        for rel in expected:
            assert (run_dir / rel).is_file(), rel

        scores = json.loads((run_dir / "scores/scores.json").read_text())
        by_id = {r["dataset_id"]: r for r in scores["reports"]}
        assert by_id["demo_caption"]["mi_score"] == 2.0
        assert by_id["demo_select"]["mi_score"] == 1.0
        assert by_id["demo_fusion"]["mi_score"] == 0.0
        assert by_id["demo_caption"]["category"] == "redundancy"
        assert by_id["demo_select"]["category"] == "uniqueness"
        assert by_id["demo_fusion"]["category"] == "synergy"

        groups = json.loads((run_dir / "groups/groups.json").read_text())
        assert groups["anchor"]["groups"]["G_R"] == ["demo_caption"]
        assert groups["anchor"]["groups"]["G_U"] == ["demo_select"]
        assert groups["anchor"]["groups"]["G_S"] == ["demo_fusion"]
        assert groups["dp_cluster"]["groups"] == groups["anchor"]["groups"]
        assert groups["dp_cluster"]["disagreements"] == []

        results = [
            json.loads(line)
            for line in (run_dir / "eval/results.jsonl").read_text().splitlines()
        ]
        assert all(r["accuracy"] == 100.0 for r in results)

        # two more full runs against the warm cache must be byte-identical
        for sub in PIPELINE:
            assert run(sub, config) == 0
        second = artifact_bytes(out_root)
        for sub in PIPELINE:
            assert run(sub, config) == 0
        third = artifact_bytes(out_root)
        assert second == third
        assert second  # non-empty

    def test_composability_pipeline_subcommand(self, tmp_path, stub):
        out = tmp_path / "out"
        config = write_config(tmp_path / "c.yaml", DEMO_DIR / "corpus", out, stub.chat_url)
        for sub in PIPELINE:  # cold: warms the cache
            assert run(sub, config) == 0
        for sub in PIPELINE:  # warm stage-by-stage
            assert run(sub, config) == 0
        stagewise = artifact_bytes(out)
        assert run("pipeline", config) == 0  # warm one-shot
        assert artifact_bytes(out) == stagewise


class TestExitCodes:
    def test_unknown_config_key_is_input_error(self, tmp_path, stub):
        config = write_config(
            tmp_path / "c.yaml", DEMO_DIR / "corpus", tmp_path / "out", stub.chat_url,
            typo_key=True,
        )
        assert run("validate", config) == 2

    def test_missing_upstream_artifact_is_input_error(self, demo_config, capsys):
        config, _ = demo_config
        assert run("score", config) == 2
        err = capsys.readouterr().err
        assert "predict" in err  # names the prerequisite subcommand

    def test_transport_failure_exit_code(self, tmp_path, stub):
        stub.state.failure_mode = "always_500"
        config = write_config(tmp_path / "c.yaml", DEMO_DIR / "corpus", tmp_path / "out", stub.chat_url)
        assert run("predict", config) == 3

    def test_protocol_failure_exit_code(self, tmp_path, stub):
        stub.state.failure_mode = "empty_choices"
        config = write_config(tmp_path / "c.yaml", DEMO_DIR / "corpus", tmp_path / "out", stub.chat_url)
        assert run("predict", config) == 4

    def test_validation_failure_exit_code(self, tmp_path, stub):
        corpus = tmp_path / "corpus"
        desc = DatasetDescriptor(
            dataset_id="broken", name="broken", domain_tag="other",
            instance_count=99, prompt_template_id="default",
        )
        write_dataset(corpus, desc, [
            InstructionInstance(instance_id="a", question="q", gold_answer="g", modality1="m"),
        ])
        config = write_config(tmp_path / "c.yaml", corpus, tmp_path / "out", stub.chat_url)
        assert run("validate", config) == 2


class TestSingleDataset:
    def test_distance_with_one_dataset(self, tmp_path, stub):
        corpus = tmp_path / "corpus"
        desc = DatasetDescriptor(
            dataset_id="solo", name="solo", domain_tag="other",
            instance_count=2, prompt_template_id="default",
        )
        write_dataset(corpus, desc, [
            InstructionInstance(
                instance_id=f"s{k}", question=f"q{k}", gold_answer="g",
                modality1=f"ctx {k}", modality2=MediaRef(uri=f"m/{k}.png"),
            )
            for k in range(2)
        ])
        out = tmp_path / "out"
        config = write_config(tmp_path / "c.yaml", corpus, out, stub.chat_url)
        for sub in ("validate", "predict", "score", "distance"):
            assert run(sub, config) == 0
        run_dir = next((out / "runs").iterdir())
        matrix = json.loads((run_dir / "distance/distance_matrix.json").read_text())
        assert matrix["dataset_ids"] == ["solo"]
        assert matrix["entries"] == [[0.0]]
        # group still works: dp skipped below k, anchor emitted
        assert run("group", config) == 0
        groups = json.loads((run_dir / "groups/groups.json").read_text())
        assert "anchor" in groups and "dp_cluster" not in groups


class TestAnchorRosterThroughCli:
    def test_group_reproduces_published_lists(self, tmp_path):
        descriptors, published = load_training_roster()
        corpus = tmp_path / "corpus"
        answers = {}
        for d in descriptors:
            instances = []
            for k in range(4):
                iid = f"{d.dataset_id}-{k}"
                # prompts must differ across datasets: the cache is keyed by
                # rendered content, and identical prompts share one answer
                instances.append(
                    InstructionInstance(
                        instance_id=iid, question=f"question {k} on {d.dataset_id}",
                        gold_answer="gold",
                        modality1=f"{d.dataset_id} context {k}",
                        modality2=MediaRef(uri=f"m/{iid}.png"),
                    )
                )
                if d.declared_interaction == "redundancy":
                    answers[iid] = {"unimodal1": "gold", "unimodal2": "gold", "multimodal": "gold"}
                elif d.declared_interaction == "uniqueness":
                    answers[iid] = {"unimodal1": "gold", "unimodal2": "off", "multimodal": "gold"}
                else:
                    answers[iid] = {"unimodal1": "a", "unimodal2": "b", "multimodal": "gold"}
            write_dataset(
                corpus,
                DatasetDescriptor(
                    dataset_id=d.dataset_id, name=d.name, domain_tag=d.domain_tag,
                    instance_count=4, prompt_template_id="default",
                    declared_interaction=d.declared_interaction,
                ),
                instances,
            )
        with StubServer(answers) as stub:
            out = tmp_path / "out"
            config = write_config(
                tmp_path / "c.yaml", corpus, out, stub.chat_url,
                sampling={"num_draws": 2, "draw_size": 4, "replacement_within_draw": False},
            )
            for sub in ("validate", "predict", "score", "group"):
                assert run(sub, config) == 0
        run_dir = next((out / "runs").iterdir())
        groups = json.loads((run_dir / "groups/groups.json").read_text())
        for label, expected in published.items():
            assert set(groups["anchor"]["groups"][label]) == set(expected)
            assert set(groups["dp_cluster"]["groups"][label]) == set(expected)

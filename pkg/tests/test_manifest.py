import json
import re

import pytest

from migroup.errors import InputError
from migroup.fixtures import load_training_roster
from migroup.grouping import group_by_anchor
from migroup.manifest import (
    ExclusionPolicy,
    ExclusionRule,
    ShareGptRecord,
    TrainingConfig,
    Turn,
    build_group_manifests,
    format_options,
    read_manifest,
    to_sharegpt,
)
from migroup.scoring import CategoryBoundaries
from migroup.types import GroupAssignment

from conftest import make_descriptor, make_instance
from test_grouping import report_for

OPTION_LINE = re.compile(r"^[A-Z]\. ")


class TestToShareGpt:
    def test_fer_style_prompt_and_gold(self):
        inst = make_instance(
            "f1", question="What emotion does the face convey?", gold="happy",
            modality1=None, options=(),
        )
        desc = make_descriptor("fer2013", n=1, template="fer2013")
        record = to_sharegpt(inst, desc, "G_U")
        assert (
            "Choose from the following options: angry, disgust, fear, happy, neutral, sad, surprise"
            in record.conversations[0].value
        )
        assert record.conversations[1].value == "happy"
        assert record.conversations[0].speaker == "user"
        assert record.conversations[1].speaker == "assistant"

    def test_option_free_instance_has_no_lettered_block(self):
        inst = make_instance("c1", gold="a zebra grazing", options=())
        record = to_sharegpt(inst, make_descriptor("cap", n=1, template="default_context"), "G_R")
        assert not any(OPTION_LINE.match(line) for line in record.conversations[0].value.splitlines())

    def test_options_lettered_in_input_order(self):
        inst = make_instance("m1", gold="comedy", options=("drama", "comedy"))
        record = to_sharegpt(inst, make_descriptor("mov", n=1, template="default"), "G_S")
        lines = record.conversations[0].value.splitlines()
        assert "A. drama" in lines
        assert "B. comedy" in lines
        assert lines.index("A. drama") < lines.index("B. comedy")

    def test_media_handle_out_of_band(self):
        inst = make_instance("m1")
        record = to_sharegpt(inst, make_descriptor("ds", n=1, template="default"), "G_R")
        assert record.images == ("media/m1.png",)
        assert "media/m1.png" not in record.conversations[0].value

    def test_round_trip(self):
        inst = make_instance("r1", options=("x", "y"), gold="x")
        record = to_sharegpt(inst, make_descriptor("ds", n=1, template="default"), "G_U")
        assert ShareGptRecord.from_json(json.loads(json.dumps(record.to_json()))) == record

    def test_alternation_enforced(self):
        with pytest.raises(InputError):
            ShareGptRecord(
                conversations=(Turn("assistant", "hi"),),
                images=(),
                dataset_id="d",
                instance_id="i",
                group_label="G_R",
            )

    def test_too_many_options(self):
        with pytest.raises(InputError):
            format_options([str(i) for i in range(27)])


class TestTrainingConfig:
    def test_published_defaults(self):
        cfg = TrainingConfig(group_label="G_R", manifest_path="train_G_R.jsonl")
        text = cfg.to_text()
        assert "finetuning_type: LoRA" in text
        assert "per_device_train_batch_size: 2" in text
        assert "learning_rate: 1.0e-4" in text
        assert "lr_scheduler_type: cosine" in text
        assert "num_train_epochs: 3" in text
        assert "warmup_ratio: 0.1" in text
        assert "val_size: 0.1" in text

    def test_text_is_valid_yaml(self):
        import yaml

        cfg = TrainingConfig(group_label="G_S", manifest_path="train_G_S.jsonl")
        parsed = yaml.safe_load(cfg.to_text())
        assert parsed["learning_rate"] == pytest.approx(1e-4)
        assert parsed["num_train_epochs"] == 3
        assert parsed["group_label"] == "G_S"


class TestExclusionPolicy:
    def test_first_match_wins(self):
        policy = ExclusionPolicy(
            rules=(
                ExclusionRule("r1", "vqa_only", "vqa", "VQA-only benchmarks removed"),
                ExclusionRule("r2", "custom", "pathvqa", "never reached"),
            )
        )
        assert policy.rule_for("pathvqa").rule_id == "r1"
        assert policy.rule_for("flickr30k") is None

    def test_bad_pattern_rejected(self):
        with pytest.raises(InputError):
            ExclusionRule("r", "custom", "([", "broken")

    def test_bad_kind_rejected(self):
        with pytest.raises(InputError):
            ExclusionRule("r", "mystery", "x", "unknown kind")

    def test_load_sample_policy(self):
        from importlib import resources

        with resources.as_file(
            resources.files("migroup.fixtures").joinpath("sample_exclusions.yaml")
        ) as path:
            policy = ExclusionPolicy.load(path)
        assert {r.kind for r in policy.rules} == {"vqa_only", "pretraining_overlap"}
        assert policy.rule_for("vqa") is not None
        assert policy.rule_for("ok-vqa") is not None
        assert policy.rule_for("pathvqa") is None  # anchored pattern
        assert policy.rule_for("slake") is None


def demo_datasets():
    datasets = {}
    for ds_id, cat, template in (
        ("alpha", "redundancy", "default"),
        ("beta", "uniqueness", "default"),
        ("gamma", "synergy", "default_context"),
    ):
        instances = [
            make_instance(f"{ds_id}-{k}", gold=f"gold-{k}", options=())
            for k in range(4)
        ]
        datasets[ds_id] = (
            make_descriptor(ds_id, n=4, template=template, declared_interaction=cat),
            instances,
        )
    return datasets


def demo_groups() -> GroupAssignment:
    reports = [report_for("alpha", 2.0), report_for("beta", 1.0), report_for("gamma", 0.0)]
    return group_by_anchor(reports, CategoryBoundaries())


class TestBuildGroupManifests:
    def test_partition_mirrors_assignment(self, tmp_path):
        index = build_group_manifests(demo_groups(), demo_datasets(), ExclusionPolicy(), tmp_path)
        seen = set()
        by_label = {g.group_label: g for g in index.groups}
        assert by_label["G_R"].dataset_ids == ["alpha"]
        assert by_label["G_U"].dataset_ids == ["beta"]
        assert by_label["G_S"].dataset_ids == ["gamma"]
        for g in index.groups:
            records = read_manifest(tmp_path / g.manifest_path)
            assert len(records) == g.record_count == 4
            for r in records:
                key = (r.dataset_id, r.instance_id)
                assert key not in seen
                seen.add(key)
                assert r.group_label == g.group_label
        assert len(seen) == 12

    def test_counts_equal_line_counts(self, tmp_path):
        index = build_group_manifests(demo_groups(), demo_datasets(), ExclusionPolicy(), tmp_path)
        for g in index.groups:
            lines = (tmp_path / g.manifest_path).read_text().splitlines()
            assert len(lines) == g.record_count

    def test_deterministic_bytes(self, tmp_path):
        out1, out2 = tmp_path / "one", tmp_path / "two"
        build_group_manifests(demo_groups(), demo_datasets(), ExclusionPolicy(), out1)
        build_group_manifests(demo_groups(), demo_datasets(), ExclusionPolicy(), out2)
        for name in ("train_G_R.jsonl", "train_G_U.jsonl", "train_G_S.jsonl",
                     "training_config_G_R.yaml", "manifest_index.json", "exclusions_audit.jsonl"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    def test_exclusion_filters_and_audits(self, tmp_path):
        policy = ExclusionPolicy(
            rules=(ExclusionRule("no-beta", "custom", "^beta$", "testing filter arithmetic"),)
        )
        index = build_group_manifests(demo_groups(), demo_datasets(), policy, tmp_path)
        by_label = {g.group_label: g for g in index.groups}
        assert by_label["G_U"].record_count == 0
        assert by_label["G_U"].dataset_ids == []
        assert index.excluded == [
            {
                "dataset_id": "beta",
                "group_label": "G_U",
                "rule_id": "no-beta",
                "kind": "custom",
                "rationale": "testing filter arithmetic",
            }
        ]
        audit_lines = (tmp_path / index.audit_log_path).read_text().splitlines()
        assert len(audit_lines) == 1
        assert json.loads(audit_lines[0])["rule_id"] == "no-beta"
        assert any("G_U" in w for w in index.warnings)

    def test_unloadable_dataset_named(self, tmp_path):
        datasets = demo_datasets()
        del datasets["beta"]
        with pytest.raises(InputError, match="beta"):
            build_group_manifests(demo_groups(), datasets, ExclusionPolicy(), tmp_path)

    def test_overrides_recorded(self, tmp_path):
        index = build_group_manifests(
            demo_groups(), demo_datasets(), ExclusionPolicy(), tmp_path,
            config_overrides={"num_train_epochs": 5},
        )
        assert index.overrides == {"num_train_epochs": 5}
        text = (tmp_path / "training_config_G_R.yaml").read_text()
        assert "num_train_epochs: 5" in text

    def test_unknown_override_rejected(self, tmp_path):
        with pytest.raises(InputError, match="optimizer"):
            build_group_manifests(
                demo_groups(), demo_datasets(), ExclusionPolicy(), tmp_path,
                config_overrides={"optimizer": "lamb"},
            )

    def test_vqa_pattern_drops_counts_and_audits(self, tmp_path):
        descriptors, _published = load_training_roster()
        reports = [
            report_for(d.dataset_id, {"redundancy": 2.0, "uniqueness": 1.0, "synergy": 0.0}[d.declared_interaction])
            for d in descriptors
        ]
        groups = group_by_anchor(reports, CategoryBoundaries())
        datasets = {
            d.dataset_id: (
                make_descriptor(d.dataset_id, n=2, template="default"),
                [make_instance(f"{d.dataset_id}-{k}") for k in range(2)],
            )
            for d in descriptors
        }
        policy = ExclusionPolicy(
            rules=(ExclusionRule("vqa-only", "vqa_only", "vqa", "keep the mix beyond plain VQA"),)
        )
        index = build_group_manifests(groups, datasets, policy, tmp_path)
        excluded_ids = {e["dataset_id"] for e in index.excluded}
        assert excluded_ids == {"pathvqa", "vqarad", "ok-vqa"}
        assert all(e["rule_id"] == "vqa-only" for e in index.excluded)
        by_label = {g.group_label: g for g in index.groups}
        # G_R loses its three vqa members: 6 datasets -> 3, 2 records each
        assert by_label["G_R"].record_count == 6
        assert set(by_label["G_R"].dataset_ids) == {"slake", "nlvr", "flickr30k"}

    def test_published_roster_membership(self, tmp_path):
        descriptors, published = load_training_roster()
        reports = [
            report_for(d.dataset_id, {"redundancy": 2.0, "uniqueness": 1.0, "synergy": 0.0}[d.declared_interaction])
            for d in descriptors
        ]
        groups = group_by_anchor(reports, CategoryBoundaries())
        datasets = {
            d.dataset_id: (
                make_descriptor(d.dataset_id, n=1, template="default"),
                [make_instance(f"{d.dataset_id}-0")],
            )
            for d in descriptors
        }
        index = build_group_manifests(groups, datasets, ExclusionPolicy(), tmp_path)
        by_label = {g.group_label: set(g.dataset_ids) for g in index.groups}
        assert by_label == {k: set(v) for k, v in published.items()}

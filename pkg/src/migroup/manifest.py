"""Per-group instruction-tuning artifacts.

Each group gets a ShareGPT-format JSONL manifest (alternating user/assistant
turns, options lettered A., B., ... in input order, media handles carried
out-of-band in the images list) plus a flat key: value training config.
Output is deterministic: records sorted by (dataset_id, instance_id), files
written atomically.
"""

import json
import os
import re
import string
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import yaml

from .errors import InputError
from .templates import DEFAULT_TEMPLATES, TemplateRegistry
from .types import DatasetDescriptor, GroupAssignment, InstructionInstance

EXCLUSION_KINDS = ("vqa_only", "pretraining_overlap", "custom")


@dataclass(frozen=True)
class Turn:
    speaker: str  # "user" | "assistant"
    value: str


@dataclass(frozen=True)
class ShareGptRecord:
    conversations: tuple[Turn, ...]
    images: tuple[str, ...]
    dataset_id: str
    instance_id: str
    group_label: str

    def __post_init__(self):
        if not self.conversations:
            raise InputError("conversation must not be empty")
        for i, turn in enumerate(self.conversations):
            expected = "user" if i % 2 == 0 else "assistant"
            if turn.speaker != expected:
                raise InputError(
                    f"turn {i} must come from {expected!r}, got {turn.speaker!r} "
                    f"({self.dataset_id}/{self.instance_id})"
                )

    def to_json(self) -> dict:
        return {
            "conversations": [{"from": t.speaker, "value": t.value} for t in self.conversations],
            "images": list(self.images),
            "metadata": {
                "dataset_id": self.dataset_id,
                "instance_id": self.instance_id,
                "group_label": self.group_label,
            },
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ShareGptRecord":
        meta = obj["metadata"]
        return cls(
            conversations=tuple(Turn(t["from"], t["value"]) for t in obj["conversations"]),
            images=tuple(obj.get("images", ())),
            dataset_id=meta["dataset_id"],
            instance_id=meta["instance_id"],
            group_label=meta["group_label"],
        )


def format_options(options: Sequence[str]) -> str:
    """Letter options in input order: 'A. first\\nB. second\\n...'."""
    if len(options) > len(string.ascii_uppercase):
        raise InputError(f"too many options ({len(options)}) to letter A-Z")
    return "\n".join(f"{string.ascii_uppercase[i]}. {opt}" for i, opt in enumerate(options))


def to_sharegpt(
    instance: InstructionInstance,
    descriptor: DatasetDescriptor,
    group_label: str,
    *,
    registry: TemplateRegistry = DEFAULT_TEMPLATES,
) -> ShareGptRecord:
    """One training conversation: full multimodal prompt in, gold answer out."""
    template = registry.get(descriptor.prompt_template_id)
    text = template.instruction
    if template.wants_question:
        text = text.replace("{question}", instance.question)
    if template.wants_context:
        text = text.replace("{context}", instance.modality1 or "")
    elif instance.modality1:
        text = text + "\n" + instance.modality1
    if instance.options:
        text = text + "\n" + format_options(instance.options)
    images = (instance.modality2.uri,) if instance.modality2 is not None else ()
    return ShareGptRecord(
        conversations=(Turn("user", text), Turn("assistant", instance.gold_answer)),
        images=images,
        dataset_id=descriptor.dataset_id,
        instance_id=instance.instance_id,
        group_label=group_label,
    )


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters emitted alongside each group manifest.

    Defaults are the published training setup; any override arriving from a
    run config is recorded in the manifest index.
    """

    group_label: str
    manifest_path: str
    finetuning_type: str = "LoRA"
    per_device_train_batch_size: int = 2
    learning_rate: float = 1e-4
    lr_scheduler_type: str = "cosine"
    num_train_epochs: int = 3
    warmup_ratio: float = 0.1
    val_size: float = 0.1

    def to_text(self) -> str:
        lines = [
            f"finetuning_type: {self.finetuning_type}",
            f"per_device_train_batch_size: {self.per_device_train_batch_size}",
            f"learning_rate: {_format_float(self.learning_rate)}",
            f"lr_scheduler_type: {self.lr_scheduler_type}",
            f"num_train_epochs: {self.num_train_epochs}",
            f"warmup_ratio: {_format_float(self.warmup_ratio)}",
            f"val_size: {_format_float(self.val_size)}",
            f"group_label: {self.group_label}",
            f"manifest_path: {self.manifest_path}",
        ]
        return "\n".join(lines) + "\n"


def _format_float(x: float) -> str:
    if x != 0 and abs(x) < 1e-2:
        mantissa, exp = f"{x:e}".split("e")
        mantissa = mantissa.rstrip("0").rstrip(".")
        if "." not in mantissa:
            mantissa += ".0"
        return f"{mantissa}e{int(exp)}"
    return f"{x:g}"


HYPERPARAM_KEYS = (
    "finetuning_type",
    "per_device_train_batch_size",
    "learning_rate",
    "lr_scheduler_type",
    "num_train_epochs",
    "warmup_ratio",
    "val_size",
)


@dataclass(frozen=True)
class ExclusionRule:
    rule_id: str
    kind: str
    pattern: str  # regex, matched with re.search against dataset_id
    rationale: str

    def __post_init__(self):
        if self.kind not in EXCLUSION_KINDS:
            raise InputError(f"unknown exclusion kind {self.kind!r} in rule {self.rule_id!r}")
        try:
            re.compile(self.pattern)
        except re.error as exc:
            raise InputError(f"rule {self.rule_id!r}: bad pattern {self.pattern!r}: {exc}") from exc

    def matches(self, dataset_id: str) -> bool:
        return re.search(self.pattern, dataset_id) is not None


@dataclass(frozen=True)
class ExclusionPolicy:
    rules: tuple[ExclusionRule, ...] = ()

    @classmethod
    def load(cls, path: Path) -> "ExclusionPolicy":
        obj = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        rules = tuple(
            ExclusionRule(
                rule_id=r["rule_id"],
                kind=r["kind"],
                pattern=r["pattern"],
                rationale=r.get("rationale", ""),
            )
            for r in obj.get("rules", ())
        )
        return cls(rules=rules)

    def rule_for(self, dataset_id: str) -> ExclusionRule | None:
        """First matching rule wins; that rule owns the exclusion in the audit log."""
        for rule in self.rules:
            if rule.matches(dataset_id):
                return rule
        return None


@dataclass
class GroupManifest:
    group_label: str
    manifest_path: str
    config_path: str
    record_count: int
    dataset_ids: list[str]


@dataclass
class ManifestIndex:
    groups: list[GroupManifest]
    audit_log_path: str
    excluded: list[dict]
    warnings: list[str] = field(default_factory=list)
    overrides: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "groups": [
                {
                    "group_label": g.group_label,
                    "manifest_path": g.manifest_path,
                    "config_path": g.config_path,
                    "record_count": g.record_count,
                    "dataset_ids": g.dataset_ids,
                }
                for g in self.groups
            ],
            "audit_log_path": self.audit_log_path,
            "excluded": self.excluded,
            "warnings": self.warnings,
            "overrides": self.overrides,
        }


def _atomic_write(path: Path, data: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def build_group_manifests(
    groups: GroupAssignment,
    datasets: Mapping[str, tuple[DatasetDescriptor, Sequence[InstructionInstance]]],
    policy: ExclusionPolicy,
    output_dir: Path,
    *,
    registry: TemplateRegistry = DEFAULT_TEMPLATES,
    config_overrides: Mapping[str, object] | None = None,
) -> ManifestIndex:
    """Write one ShareGPT JSONL manifest and one training config per group."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    missing = sorted(ds for ds in groups.all_dataset_ids() if ds not in datasets)
    if missing:
        raise InputError(f"grouped datasets not loadable: {missing}")

    overrides = dict(config_overrides or {})
    unknown = sorted(set(overrides) - set(HYPERPARAM_KEYS))
    if unknown:
        raise InputError(f"unknown training config overrides: {unknown}")

    excluded: list[dict] = []
    warnings: list[str] = []
    index_groups: list[GroupManifest] = []

    for label, members in groups.groups:
        kept: list[str] = []
        for ds_id in members:
            rule = policy.rule_for(ds_id)
            if rule is None:
                kept.append(ds_id)
            else:
                excluded.append(
                    {
                        "dataset_id": ds_id,
                        "group_label": label,
                        "rule_id": rule.rule_id,
                        "kind": rule.kind,
                        "rationale": rule.rationale,
                    }
                )

        records = []
        for ds_id in sorted(kept):
            descriptor, instances = datasets[ds_id]
            for inst in sorted(instances, key=lambda i: i.instance_id):
                records.append(to_sharegpt(inst, descriptor, label, registry=registry))

        manifest_name = f"train_{label}.jsonl"
        config_name = f"training_config_{label}.yaml"
        lines = "".join(
            json.dumps(r.to_json(), sort_keys=True, ensure_ascii=False) + "\n" for r in records
        )
        _atomic_write(output_dir / manifest_name, lines)

        config = TrainingConfig(group_label=label, manifest_path=manifest_name, **overrides)
        _atomic_write(output_dir / config_name, config.to_text())

        if not records:
            warnings.append(f"group {label} is empty; manifest emitted with zero records")
        index_groups.append(
            GroupManifest(
                group_label=label,
                manifest_path=manifest_name,
                config_path=config_name,
                record_count=len(records),
                dataset_ids=sorted(kept),
            )
        )

    audit_name = "exclusions_audit.jsonl"
    _atomic_write(
        output_dir / audit_name,
        "".join(json.dumps(e, sort_keys=True) + "\n" for e in excluded),
    )
    index = ManifestIndex(
        groups=index_groups,
        audit_log_path=audit_name,
        excluded=excluded,
        warnings=warnings,
        overrides=overrides,
    )
    _atomic_write(
        output_dir / "manifest_index.json",
        json.dumps(index.to_json(), indent=2, sort_keys=True) + "\n",
    )
    return index


def read_manifest(path: Path) -> list[ShareGptRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(ShareGptRecord.from_json(json.loads(line)))
    return records

"""Domain types shared by every stage of the pipeline.

All types are plain frozen dataclasses: immutable after construction and
safe to share across threads. Serialization helpers keep the on-disk JSONL
layout (documented in docs/schemas.md) in one place.
"""

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError

REDUNDANCY = "redundancy"
UNIQUENESS = "uniqueness"
SYNERGY = "synergy"
CATEGORIES = (REDUNDANCY, UNIQUENESS, SYNERGY)

# group label per interaction category, fixed three-way partition
GROUP_LABELS = {REDUNDANCY: "G_R", UNIQUENESS: "G_U", SYNERGY: "G_S"}
ALL_GROUP_LABELS = ("G_R", "G_U", "G_S")

DOMAIN_TAGS = ("healthcare", "multimedia", "affect", "science", "hci", "other")

ROLES = ("unimodal1", "unimodal2", "multimodal")


def normalize_answer(text: str) -> str:
    """Trim and case-fold; the normalization used for gold-answer membership."""
    return text.strip().casefold()


@dataclass(frozen=True)
class MediaRef:
    """Opaque handle to a media payload (file path or URI). Never decoded here."""

    uri: str
    text: str | None = None  # optional text rendering of the media

    def to_json(self) -> dict:
        out: dict = {"uri": self.uri}
        if self.text is not None:
            out["text"] = self.text
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MediaRef":
        return cls(uri=obj["uri"], text=obj.get("text"))


@dataclass(frozen=True)
class InstructionInstance:
    """One multimodal example: two modality payloads, question, options, gold answer."""

    instance_id: str
    question: str
    gold_answer: str
    modality1: str | None = None
    modality2: MediaRef | None = None
    options: tuple[str, ...] = ()

    def to_json(self) -> dict:
        out: dict = {
            "instance_id": self.instance_id,
            "question": self.question,
            "gold_answer": self.gold_answer,
        }
        if self.modality1 is not None:
            out["modality1"] = self.modality1
        if self.modality2 is not None:
            out["modality2"] = self.modality2.to_json()
        if self.options:
            out["options"] = list(self.options)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "InstructionInstance":
        m2 = obj.get("modality2")
        return cls(
            instance_id=obj["instance_id"],
            question=obj["question"],
            gold_answer=obj["gold_answer"],
            modality1=obj.get("modality1"),
            modality2=MediaRef.from_json(m2) if m2 is not None else None,
            options=tuple(obj.get("options", ())),
        )


@dataclass(frozen=True)
class DatasetDescriptor:
    """Sidecar metadata for one dataset."""

    dataset_id: str
    name: str
    domain_tag: str
    instance_count: int
    prompt_template_id: str
    declared_interaction: str | None = None
    # which real-world modality was loaded into each slot (data-prep metadata)
    modality1_source: str | None = None
    modality2_source: str | None = None

    def __post_init__(self):
        if self.domain_tag not in DOMAIN_TAGS:
            raise InputError(f"unknown domain_tag {self.domain_tag!r} for dataset {self.dataset_id!r}")
        if self.declared_interaction is not None and self.declared_interaction not in CATEGORIES:
            raise InputError(
                f"unknown declared_interaction {self.declared_interaction!r} for dataset {self.dataset_id!r}"
            )
        if self.instance_count < 0:
            raise InputError(f"instance_count must be non-negative for dataset {self.dataset_id!r}")

    def to_json(self) -> dict:
        out = dataclasses.asdict(self)
        return {k: v for k, v in out.items() if v is not None}

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetDescriptor":
        return cls(
            dataset_id=obj["dataset_id"],
            name=obj["name"],
            domain_tag=obj["domain_tag"],
            instance_count=obj["instance_count"],
            prompt_template_id=obj["prompt_template_id"],
            declared_interaction=obj.get("declared_interaction"),
            modality1_source=obj.get("modality1_source"),
            modality2_source=obj.get("modality2_source"),
        )


@dataclass(frozen=True)
class RoleProvenance:
    """Where one role's prediction came from."""

    model_id: str
    endpoint: str
    timestamp: str
    cache_hit: bool

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RoleProvenance":
        return cls(**obj)


@dataclass(frozen=True)
class PredictionTriplet:
    """Outputs of the three model roles for one instance.

    Empty string is a legal output; absence is not.
    """

    instance_id: str
    y1: str
    y2: str
    ym: str
    provenance: tuple[tuple[str, RoleProvenance], ...] = ()

    def __post_init__(self):
        # canonical role order so equality and serialization are stable
        object.__setattr__(self, "provenance", tuple(sorted(self.provenance)))

    def provenance_for(self, role: str) -> RoleProvenance | None:
        for r, prov in self.provenance:
            if r == role:
                return prov
        return None

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "y1": self.y1,
            "y2": self.y2,
            "ym": self.ym,
            "provenance": {role: prov.to_json() for role, prov in self.provenance},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PredictionTriplet":
        prov = tuple(
            (role, RoleProvenance.from_json(p)) for role, p in sorted(obj.get("provenance", {}).items())
        )
        return cls(
            instance_id=obj["instance_id"],
            y1=obj["y1"],
            y2=obj["y2"],
            ym=obj["ym"],
            provenance=prov,
        )


@dataclass(frozen=True)
class SamplingPlan:
    """S seeded draws of C instances each."""

    num_draws: int
    draw_size: int
    seed: int
    replacement_within_draw: bool = False

    def __post_init__(self):
        if self.num_draws < 1:
            raise InputError("num_draws must be >= 1")
        if self.draw_size < 1:
            raise InputError("draw_size must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise InputError("seed must fit in 64 unsigned bits")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "SamplingPlan":
        return cls(
            num_draws=obj["num_draws"],
            draw_size=obj["draw_size"],
            seed=obj["seed"],
            replacement_within_draw=obj.get("replacement_within_draw", False),
        )


@dataclass(frozen=True)
class MiScoreReport:
    """A dataset's interaction score, per-draw scores, dispersion and category."""

    dataset_id: str
    mi_score: float
    per_draw_scores: tuple[float, ...]
    std_error: float
    category: str
    similarity_id: str
    sampling_plan: SamplingPlan
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.mi_score <= 2.0:
            raise InputError(f"mi_score {self.mi_score} outside [0, 2] for {self.dataset_id!r}")
        for s in self.per_draw_scores:
            if not 0.0 <= s <= 2.0:
                raise InputError(f"per-draw score {s} outside [0, 2] for {self.dataset_id!r}")
        if self.per_draw_scores:
            mean = math.fsum(self.per_draw_scores) / len(self.per_draw_scores)
            if abs(mean - self.mi_score) > 1e-9:
                raise InputError(
                    f"mi_score {self.mi_score} is not the mean of per-draw scores ({mean}) for {self.dataset_id!r}"
                )
        if self.std_error < 0:
            raise InputError(f"std_error must be non-negative for {self.dataset_id!r}")
        if self.category not in CATEGORIES:
            raise InputError(f"unknown category {self.category!r} for {self.dataset_id!r}")

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "mi_score": self.mi_score,
            "per_draw_scores": list(self.per_draw_scores),
            "std_error": self.std_error,
            "category": self.category,
            "similarity_id": self.similarity_id,
            "sampling_plan": self.sampling_plan.to_json(),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MiScoreReport":
        return cls(
            dataset_id=obj["dataset_id"],
            mi_score=obj["mi_score"],
            per_draw_scores=tuple(obj["per_draw_scores"]),
            std_error=obj["std_error"],
            category=obj["category"],
            similarity_id=obj["similarity_id"],
            sampling_plan=SamplingPlan.from_json(obj["sampling_plan"]),
            warnings=tuple(obj.get("warnings", ())),
        )


@dataclass(frozen=True)
class GroupAssignment:
    """A labeled three-way partition of datasets."""

    method: str  # "anchor" or "dp_cluster"
    groups: tuple[tuple[str, tuple[str, ...]], ...]  # (label, member dataset_ids)
    centroids: tuple[tuple[str, float], ...]
    disagreements: tuple[str, ...] = ()

    def __post_init__(self):
        labels = tuple(label for label, _ in self.groups)
        if sorted(labels) != sorted(ALL_GROUP_LABELS):
            raise InputError(f"group labels must be exactly {ALL_GROUP_LABELS}, got {labels}")
        seen: set[str] = set()
        for _, members in self.groups:
            for m in members:
                if m in seen:
                    raise InputError(f"dataset {m!r} appears in more than one group")
                seen.add(m)
        for label, c in self.centroids:
            if not 0.0 <= c <= 2.0:
                raise InputError(f"centroid {c} for {label} outside [0, 2]")

    def members(self, label: str) -> tuple[str, ...]:
        for lab, members in self.groups:
            if lab == label:
                return members
        raise KeyError(label)

    def centroid(self, label: str) -> float:
        for lab, c in self.centroids:
            if lab == label:
                return c
        raise KeyError(label)

    def all_dataset_ids(self) -> set[str]:
        return {m for _, members in self.groups for m in members}

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "groups": {label: list(members) for label, members in self.groups},
            "centroids": {label: c for label, c in self.centroids},
            "disagreements": list(self.disagreements),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroupAssignment":
        return cls(
            method=obj["method"],
            groups=tuple((label, tuple(members)) for label, members in obj["groups"].items()),
            centroids=tuple((label, c) for label, c in obj["centroids"].items()),
            disagreements=tuple(obj.get("disagreements", ())),
        )


@dataclass(frozen=True)
class ValidationIssue:
    instance_id: str | None
    message: str

    def to_json(self) -> dict:
        return {"instance_id": self.instance_id, "message": self.message}


@dataclass
class ValidationReport:
    dataset_id: str
    errors: list[ValidationIssue] = field(default_factory=list)
    warnings: list[ValidationIssue] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return not self.errors

    def to_json(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "accepted": self.accepted,
            "errors": [e.to_json() for e in self.errors],
            "warnings": [w.to_json() for w in self.warnings],
        }


def validate_dataset(
    instances: list[InstructionInstance], descriptor: DatasetDescriptor
) -> ValidationReport:
    """Check every dataset invariant; violations are data, not failures.

    The dataset is accepted iff the error list is empty. The report is a
    pure function of its inputs (stable ordering, no timestamps).
    """
    report = ValidationReport(dataset_id=descriptor.dataset_id)
    err = report.errors.append

    seen: set[str] = set()
    for inst in instances:
        iid = inst.instance_id
        if not iid:
            err(ValidationIssue(None, "empty instance_id"))
            continue
        if iid in seen:
            err(ValidationIssue(iid, "duplicate id"))
        seen.add(iid)
        if inst.modality1 is None and inst.modality2 is None:
            err(ValidationIssue(iid, "at least one of modality1/modality2 must be present"))
        if inst.options:
            normalized = [normalize_answer(o) for o in inst.options]
            if normalize_answer(inst.gold_answer) not in normalized:
                err(ValidationIssue(iid, "gold not in options"))

    if descriptor.instance_count != len(instances):
        err(
            ValidationIssue(
                None,
                f"descriptor instance_count {descriptor.instance_count} "
                f"!= loaded instance count {len(instances)}",
            )
        )
    return report


# --- on-disk layout -------------------------------------------------------
#
# <corpus_root>/<dataset_id>/descriptor.json
# <corpus_root>/<dataset_id>/instances.jsonl     (one instance per line)

DESCRIPTOR_FILENAME = "descriptor.json"
INSTANCES_FILENAME = "instances.jsonl"


def load_dataset(corpus_root: Path, dataset_id: str) -> tuple[DatasetDescriptor, list[InstructionInstance]]:
    ds_dir = Path(corpus_root) / dataset_id
    desc_path = ds_dir / DESCRIPTOR_FILENAME
    inst_path = ds_dir / INSTANCES_FILENAME
    if not desc_path.is_file():
        raise InputError(f"dataset {dataset_id!r}: missing {desc_path}")
    if not inst_path.is_file():
        raise InputError(f"dataset {dataset_id!r}: missing {inst_path}")
    descriptor = DatasetDescriptor.from_json(json.loads(desc_path.read_text(encoding="utf-8")))
    if descriptor.dataset_id != dataset_id:
        raise InputError(
            f"descriptor id {descriptor.dataset_id!r} does not match directory {dataset_id!r}"
        )
    instances = []
    with inst_path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                instances.append(InstructionInstance.from_json(json.loads(line)))
            except (KeyError, ValueError) as exc:
                raise InputError(f"dataset {dataset_id!r}: bad instance at line {lineno}: {exc}") from exc
    return descriptor, instances


def list_dataset_ids(corpus_root: Path) -> list[str]:
    root = Path(corpus_root)
    if not root.is_dir():
        raise InputError(f"corpus root {root} is not a directory")
    return sorted(p.name for p in root.iterdir() if (p / DESCRIPTOR_FILENAME).is_file())


def load_corpus(corpus_root: Path) -> list[tuple[DatasetDescriptor, list[InstructionInstance]]]:
    return [load_dataset(corpus_root, ds_id) for ds_id in list_dataset_ids(corpus_root)]


def write_dataset(
    corpus_root: Path, descriptor: DatasetDescriptor, instances: list[InstructionInstance]
) -> None:
    ds_dir = Path(corpus_root) / descriptor.dataset_id
    ds_dir.mkdir(parents=True, exist_ok=True)
    (ds_dir / DESCRIPTOR_FILENAME).write_text(
        json.dumps(descriptor.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with (ds_dir / INSTANCES_FILENAME).open("w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_json(), sort_keys=True, ensure_ascii=False) + "\n")

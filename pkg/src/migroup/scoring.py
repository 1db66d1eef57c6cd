"""Dataset-level multimodal interaction scoring.

For each of S seeded draws of C instances, the per-draw score is the mean
over drawn instances of delta(y1, ym) + delta(y2, ym); the dataset score is
the mean of the per-draw scores and always lies in [0, 2]. A score near 2
means the modalities carry redundant information, near 1 that one modality
carries it, near 0 that it only emerges from their combination.
"""

import hashlib
import math
import statistics
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError
from .similarity import SimilarityFunction, SimilarityRegistry, DEFAULT_REGISTRY, batch_score
from .types import (
    DatasetDescriptor,
    InstructionInstance,
    MiScoreReport,
    PredictionTriplet,
    REDUNDANCY,
    SYNERGY,
    SamplingPlan,
    UNIQUENESS,
)


@dataclass(frozen=True)
class CategoryBoundaries:
    """Decision boundaries between the score anchors 0 / 1 / 2.

    Scores in [0, synergy_upper) are synergy-dominant, [synergy_upper,
    uniqueness_upper) uniqueness-dominant, [uniqueness_upper, 2] redundancy-
    dominant. Defaults sit at the midpoints between anchors.
    """

    synergy_upper: float = 0.5
    uniqueness_upper: float = 1.5

    def __post_init__(self):
        if not 0.0 < self.synergy_upper < self.uniqueness_upper < 2.0:
            raise InputError(
                f"boundaries must satisfy 0 < synergy_upper < uniqueness_upper < 2, "
                f"got ({self.synergy_upper}, {self.uniqueness_upper})"
            )

    def categorize(self, score: float) -> str:
        if score < self.synergy_upper:
            return SYNERGY
        if score < self.uniqueness_upper:
            return UNIQUENESS
        return REDUNDANCY

    def to_json(self) -> dict:
        return {"synergy_upper": self.synergy_upper, "uniqueness_upper": self.uniqueness_upper}

    @classmethod
    def from_json(cls, obj: dict) -> "CategoryBoundaries":
        return cls(**obj)


@dataclass(frozen=True)
class DrawResult:
    indices: tuple[int, ...]
    clamped: bool


def draw_indices(
    plan: SamplingPlan, dataset_size: int, draw_index: int, *, stream: int = 0
) -> DrawResult:
    """Seeded instance indices for one draw.

    Fully determined by (seed, draw_index) for the default stream; draws are
    mutually independent RNG streams. Without replacement the draw is clamped
    to the dataset size (flagged); within-draw order is then sorted, which is
    irrelevant to the mean but keeps sums bitwise stable.
    """
    if dataset_size < 1:
        raise InputError("dataset_size must be >= 1")
    if draw_index < 0:
        raise InputError("draw_index must be >= 0")
    ss = np.random.SeedSequence(entropy=plan.seed, spawn_key=(stream, draw_index))
    rng = np.random.default_rng(ss)
    if plan.replacement_within_draw:
        idx = rng.integers(0, dataset_size, size=plan.draw_size)
        return DrawResult(tuple(int(i) for i in idx), clamped=False)
    size = min(plan.draw_size, dataset_size)
    idx = rng.permutation(dataset_size)[:size]
    return DrawResult(tuple(sorted(int(i) for i in idx)), clamped=size < plan.draw_size)


def _dataset_stream(dataset_id: str) -> int:
    digest = hashlib.sha256(dataset_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def mi_score(
    triplets: Sequence[PredictionTriplet | None],
    fn: SimilarityFunction,
    plan: SamplingPlan,
    bounds: CategoryBoundaries,
    *,
    dataset_id: str = "",
    registry: SimilarityRegistry = DEFAULT_REGISTRY,
    stream: int = 0,
) -> MiScoreReport:
    """Score one dataset from its aligned prediction triplets."""
    if not triplets:
        raise InputError(f"dataset {dataset_id!r}: no triplets to score")

    draws = [draw_indices(plan, len(triplets), s, stream=stream) for s in range(plan.num_draws)]

    needed = sorted({i for d in draws for i in d.indices})
    missing = [i for i in needed if triplets[i] is None]
    if missing:
        labels = ", ".join(str(i) for i in missing[:20])
        raise InputError(
            f"dataset {dataset_id!r}: missing prediction triplets for sampled positions [{labels}]"
        )

    # one delta-pair evaluation per distinct instance, reused across draws
    pairs: list[tuple[str, str]] = []
    for i in needed:
        t = triplets[i]
        pairs.append((t.y1, t.ym))
        pairs.append((t.y2, t.ym))
    deltas = batch_score(fn, pairs, registry=registry)
    contribution = {
        i: deltas[2 * pos] + deltas[2 * pos + 1] for pos, i in enumerate(needed)
    }

    per_draw = tuple(
        math.fsum(contribution[i] for i in d.indices) / len(d.indices) for d in draws
    )
    if all(s == per_draw[0] for s in per_draw):
        score = per_draw[0]  # exact under exhaustive draws
    else:
        score = math.fsum(per_draw) / len(per_draw)
    std_error = statistics.stdev(per_draw) / math.sqrt(len(per_draw)) if len(per_draw) > 1 else 0.0

    warnings = []
    if any(d.clamped for d in draws):
        warnings.append(
            f"draw_size {plan.draw_size} exceeds dataset size {len(triplets)}; draws clamped"
        )
    return MiScoreReport(
        dataset_id=dataset_id,
        mi_score=score,
        per_draw_scores=per_draw,
        std_error=std_error,
        category=bounds.categorize(score),
        similarity_id=fn.similarity_id,
        sampling_plan=plan,
        warnings=tuple(warnings),
    )


def align_triplets(
    instances: Sequence[InstructionInstance],
    triplets_by_id: Mapping[str, PredictionTriplet],
) -> list[PredictionTriplet | None]:
    return [triplets_by_id.get(inst.instance_id) for inst in instances]


def score_corpus(
    datasets: Sequence[tuple[DatasetDescriptor, Sequence[InstructionInstance]]],
    triplet_store: Mapping[str, Mapping[str, PredictionTriplet]],
    fn: SimilarityFunction,
    plan: SamplingPlan,
    bounds: CategoryBoundaries,
    *,
    registry: SimilarityRegistry = DEFAULT_REGISTRY,
) -> list[MiScoreReport]:
    """One report per dataset, ordered by dataset_id."""
    reports = []
    for descriptor, instances in sorted(datasets, key=lambda d: d[0].dataset_id):
        ds_id = descriptor.dataset_id
        by_id = triplet_store.get(ds_id)
        if by_id is None:
            raise InputError(f"dataset {ds_id!r}: no prediction triplets in store")
        aligned = align_triplets(instances, by_id)
        missing_ids = [
            inst.instance_id for inst, t in zip(instances, aligned) if t is None
        ]
        if missing_ids:
            shown = ", ".join(missing_ids[:20])
            raise InputError(f"dataset {ds_id!r}: missing triplets for instances [{shown}]")
        try:
            reports.append(
                mi_score(
                    aligned,
                    fn,
                    plan,
                    bounds,
                    dataset_id=ds_id,
                    registry=registry,
                    stream=_dataset_stream(ds_id),
                )
            )
        except InputError:
            raise
        except Exception as exc:  # tag unexpected failures with the dataset
            raise InputError(f"dataset {ds_id!r}: scoring failed: {exc}") from exc
    return reports

"""Prediction scoring, comparison tables and plot-ready series.

Accuracies live in [0, 100] with one-decimal rounding. Table and plot
emission is a pure projection of the input results: no cell is recomputed
or altered. Published baseline numbers ship as a read-only transcribed
fixture and are never presented as computed output.
"""

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .errors import InputError
from .similarity import SimilarityFunction, SimilarityRegistry, DEFAULT_REGISTRY, batch_score
from .types import DatasetDescriptor, InstructionInstance

PLOT_KINDS = ("bar_single_vs_group", "radar_cross_dataset", "bar_opensource")

RADAR_METHODS = (
    "mint",
    "unselective_all",
    "mixlora",
    "insta_g1",
    "insta_g2",
    "insta_g3",
    "base_model",
)

REQUIRED_METHODS = {
    "bar_single_vs_group": ("mint", "single_task"),
    "radar_cross_dataset": RADAR_METHODS,
    "bar_opensource": ("mint", "base_model"),
}


@dataclass(frozen=True)
class PerInstanceOutcome:
    instance_id: str
    predicted: str
    gold: str
    correct: bool

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "predicted": self.predicted,
            "gold": self.gold,
            "correct": self.correct,
        }


@dataclass(frozen=True)
class EvalResult:
    dataset_id: str
    method_id: str
    accuracy: float
    n: int | None  # None for ingested external rows with unpublished test sizes
    per_instance: tuple[PerInstanceOutcome, ...] | None = None
    metric_id: str | None = None
    threshold: float | None = None
    missing_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 100.0:
            raise InputError(f"accuracy {self.accuracy} outside [0, 100]")
        if self.n is not None and self.n < 1:
            raise InputError("n must be positive when present")
        if self.per_instance is not None:
            recomputed = 100.0 * sum(o.correct for o in self.per_instance) / len(self.per_instance)
            if abs(recomputed - self.accuracy) > 0.05:
                raise InputError(
                    f"accuracy {self.accuracy} inconsistent with per-instance flags ({recomputed:.3f})"
                )

    def to_json(self) -> dict:
        out: dict = {
            "dataset_id": self.dataset_id,
            "method_id": self.method_id,
            "accuracy": self.accuracy,
            "n": self.n,
        }
        if self.metric_id is not None:
            out["metric_id"] = self.metric_id
        if self.threshold is not None:
            out["threshold"] = self.threshold
        if self.missing_ids:
            out["missing_ids"] = list(self.missing_ids)
        if self.per_instance is not None:
            out["per_instance"] = [o.to_json() for o in self.per_instance]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "EvalResult":
        per = obj.get("per_instance")
        return cls(
            dataset_id=obj["dataset_id"],
            method_id=obj["method_id"],
            accuracy=obj["accuracy"],
            n=obj.get("n"),
            per_instance=tuple(PerInstanceOutcome(**o) for o in per) if per is not None else None,
            metric_id=obj.get("metric_id"),
            threshold=obj.get("threshold"),
            missing_ids=tuple(obj.get("missing_ids", ())),
        )


def score_predictions(
    predictions: Sequence[Mapping[str, str]],
    gold: tuple[DatasetDescriptor, Sequence[InstructionInstance]],
    fn: SimilarityFunction,
    correctness_threshold: float = 1.0,
    *,
    method_id: str = "scored",
    registry: SimilarityRegistry = DEFAULT_REGISTRY,
) -> EvalResult:
    """Mark a prediction correct iff delta(predicted, gold) >= threshold.

    Instances without a prediction count as incorrect and are listed.
    """
    descriptor, instances = gold
    if not instances:
        raise InputError(f"dataset {descriptor.dataset_id!r} has no instances to score against")
    by_id: dict[str, str] = {}
    for p in predictions:
        iid = p["instance_id"]
        if iid in by_id:
            raise InputError(f"duplicate prediction for instance {iid!r}")
        by_id[iid] = p["text"]
    known = {inst.instance_id for inst in instances}
    unknown = sorted(set(by_id) - known)
    if unknown:
        raise InputError(f"predictions reference unknown instances: {unknown[:20]}")

    scored_pairs = [
        (by_id[inst.instance_id], inst.gold_answer)
        for inst in instances
        if inst.instance_id in by_id
    ]
    deltas = iter(batch_score(fn, scored_pairs, registry=registry))

    outcomes = []
    missing = []
    for inst in instances:
        if inst.instance_id in by_id:
            correct = next(deltas) >= correctness_threshold
            outcomes.append(
                PerInstanceOutcome(inst.instance_id, by_id[inst.instance_id], inst.gold_answer, correct)
            )
        else:
            missing.append(inst.instance_id)
            outcomes.append(PerInstanceOutcome(inst.instance_id, "", inst.gold_answer, False))

    accuracy = round(100.0 * sum(o.correct for o in outcomes) / len(outcomes), 1)
    return EvalResult(
        dataset_id=descriptor.dataset_id,
        method_id=method_id,
        accuracy=accuracy,
        n=len(outcomes),
        per_instance=tuple(outcomes),
        metric_id=fn.similarity_id,
        threshold=correctness_threshold,
        missing_ids=tuple(missing),
    )


@dataclass(frozen=True)
class ComparisonTable:
    row_order: tuple[str, ...]  # dataset ids
    column_order: tuple[str, ...]  # method ids
    cells: tuple[tuple[float | None, ...], ...]  # row-major, None = missing
    column_means: tuple[float | None, ...]
    best_flags: tuple[tuple[bool, ...], ...]

    def cell(self, dataset_id: str, method_id: str) -> float | None:
        return self.cells[self.row_order.index(dataset_id)][self.column_order.index(method_id)]

    def best_methods(self, dataset_id: str) -> tuple[str, ...]:
        i = self.row_order.index(dataset_id)
        return tuple(m for m, f in zip(self.column_order, self.best_flags[i]) if f)

    def render_text(self) -> str:
        headers = ["dataset", *self.column_order]
        rows = [headers]
        for ds, vals, flags in zip(self.row_order, self.cells, self.best_flags):
            rows.append(
                [ds]
                + [
                    ("-" if v is None else (f"*{v:.1f}" if f else f"{v:.1f}"))
                    for v, f in zip(vals, flags)
                ]
            )
        rows.append(["mean", *("-" if m is None else f"{m:.1f}" for m in self.column_means)])
        widths = [max(len(r[c]) for r in rows) for c in range(len(headers))]
        lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows]
        return "\n".join(lines) + "\n"

    def render_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["dataset", *self.column_order])
        for ds, vals in zip(self.row_order, self.cells):
            writer.writerow([ds, *("" if v is None else f"{v:.1f}" for v in vals)])
        writer.writerow(["mean", *("" if m is None else f"{m:.4f}" for m in self.column_means)])
        return buf.getvalue()


MISSING = "missing"


def comparison_table(
    results: Sequence[EvalResult],
    row_order: Sequence[str],
    column_order: Sequence[str],
) -> ComparisonTable:
    """Arrange results into a dataset x method grid with column means and best flags."""
    by_cell: dict[tuple[str, str], float] = {}
    for r in results:
        key = (r.dataset_id, r.method_id)
        if key in by_cell and by_cell[key] != r.accuracy:
            raise InputError(
                f"conflicting duplicate cell for {key}: {by_cell[key]} vs {r.accuracy}"
            )
        by_cell[key] = r.accuracy

    cells = tuple(
        tuple(by_cell.get((ds, m)) for m in column_order) for ds in row_order
    )
    best_flags = []
    for row in cells:
        present = [v for v in row if v is not None]
        top = max(present) if present else None
        best_flags.append(tuple(v is not None and v == top for v in row))
    column_means = []
    for c in range(len(column_order)):
        vals = [row[c] for row in cells if row[c] is not None]
        column_means.append(sum(vals) / len(vals) if vals else None)
    return ComparisonTable(
        row_order=tuple(row_order),
        column_order=tuple(column_order),
        cells=cells,
        column_means=tuple(column_means),
        best_flags=tuple(best_flags),
    )


@dataclass(frozen=True)
class PlotSeries:
    method_id: str
    points: tuple[tuple[str, float], ...]  # (dataset_id, accuracy)


@dataclass(frozen=True)
class PlotData:
    kind: str
    series: tuple[PlotSeries, ...]
    dataset_order: tuple[str, ...]
    axis: dict

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "axis": self.axis,
            "dataset_order": list(self.dataset_order),
            "series": [
                {"method_id": s.method_id, "points": [{"dataset_id": d, "accuracy": a} for d, a in s.points]}
                for s in self.series
            ],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["method_id", "dataset_id", "accuracy"])
        for s in self.series:
            for ds, acc in s.points:
                writer.writerow([s.method_id, ds, f"{acc:.1f}"])
        return buf.getvalue()


def plot_data(
    results: Sequence[EvalResult],
    kind: str,
    *,
    dataset_order: Sequence[str] | None = None,
) -> PlotData:
    """One series per method, one point per dataset, values copied verbatim."""
    if kind not in PLOT_KINDS:
        raise InputError(f"unknown plot kind {kind!r}")
    methods_present = {r.method_id for r in results}
    for required in REQUIRED_METHODS[kind]:
        if required not in methods_present:
            raise InputError(f"plot kind {kind!r} requires method {required!r}")

    if dataset_order is None:
        seen: dict[str, None] = {}
        for r in results:
            seen.setdefault(r.dataset_id, None)
        dataset_order = tuple(seen)
    else:
        dataset_order = tuple(dataset_order)

    by_cell = {(r.dataset_id, r.method_id): r.accuracy for r in results}
    method_order = [m for m in REQUIRED_METHODS[kind]]
    for r in results:
        if r.method_id not in method_order:
            method_order.append(r.method_id)

    series = []
    for m in method_order:
        points = tuple(
            (ds, by_cell[(ds, m)]) for ds in dataset_order if (ds, m) in by_cell
        )
        if points:
            series.append(PlotSeries(method_id=m, points=points))
    axis = {"value_label": "accuracy_percent", "value_range": [0.0, 100.0]}
    return PlotData(kind=kind, series=tuple(series), dataset_order=dataset_order, axis=axis)


def load_published_results(path: Path | None = None) -> tuple[list[EvalResult], dict]:
    """Load the transcribed published-results fixture.

    Returns (results, meta) where meta carries the dataset/method rosters
    and the provenance note. These rows are external inputs, not outputs.
    """
    if path is None:
        text = (
            resources.files("migroup.fixtures").joinpath("published_results.json").read_text("utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    obj = json.loads(text)
    results = [
        EvalResult(
            dataset_id=ds,
            method_id=m,
            accuracy=acc,
            n=None,
            metric_id="external",
        )
        for ds, per_method in obj["accuracies"].items()
        for m, acc in per_method.items()
    ]
    meta = {
        "note": obj.get("note", ""),
        "methods": obj["methods"],
        "datasets": obj["datasets"],
        "external_only": obj.get("external_only", []),
    }
    return results, meta


def write_results_jsonl(path: Path, results: Sequence[EvalResult]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def read_results_jsonl(path: Path) -> list[EvalResult]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(EvalResult.from_json(json.loads(line)))
    return out

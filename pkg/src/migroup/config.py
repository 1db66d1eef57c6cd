"""Run configuration: one YAML file, strict keys, one seed.

Unknown keys are rejected everywhere so typos fail loudly. All sampling
randomness flows from the single top-level seed.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import InputError
from .inference import ModelRoleConfig, check_role_configs
from .scoring import CategoryBoundaries
from .types import ROLES, SamplingPlan

_TOP_KEYS = {
    "corpus_root",
    "output_root",
    "seed",
    "determinism_mode",
    "similarity_id",
    "parallelism",
    "sampling",
    "boundaries",
    "exclusion_policy",
    "templates_file",
    "endpoints",
    "eval",
    "report",
    "cluster_k",
    "training_overrides",
}
_SAMPLING_KEYS = {"num_draws", "draw_size", "replacement_within_draw"}
_BOUNDARY_KEYS = {"synergy_upper", "uniqueness_upper"}
_ENDPOINT_KEYS = {
    "endpoint_url",
    "model_id",
    "prompt_template_id",
    "max_output_tokens",
    "temperature",
    "request_timeout",
    "max_retries",
    "min_request_interval",
    "api_key_env",
    "ablate_question_in_unimodal2",
}
_EVAL_KEYS = {"method_id", "predictions_dir", "threshold", "similarity_id"}
_REPORT_KEYS = {"external_results", "row_order", "column_order"}


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise InputError(f"unknown keys in {where}: {unknown}")


@dataclass(frozen=True)
class EvalSettings:
    method_id: str = "model"
    predictions_dir: str | None = None
    threshold: float = 1.0
    similarity_id: str | None = None  # None: reuse the run similarity_id


@dataclass(frozen=True)
class ReportSettings:
    external_results: str | None = None  # "builtin" or a path
    row_order: tuple[str, ...] | None = None
    column_order: tuple[str, ...] | None = None


@dataclass(frozen=True)
class RunConfig:
    corpus_root: Path
    output_root: Path
    seed: int
    similarity_id: str
    sampling: SamplingPlan
    boundaries: CategoryBoundaries
    endpoints: dict[str, ModelRoleConfig] = field(default_factory=dict)
    determinism_mode: bool = True
    parallelism: int = 4
    exclusion_policy: Path | None = None
    templates_file: Path | None = None
    cluster_k: int = 3
    eval: EvalSettings = EvalSettings()
    report: ReportSettings = ReportSettings()
    training_overrides: dict = field(default_factory=dict)

    def run_id(self) -> str:
        digest = hashlib.sha256(
            json.dumps(self.canonical(), sort_keys=True).encode("utf-8")
        ).hexdigest()
        return digest[:12]

    def canonical(self) -> dict:
        return {
            "corpus_root": str(self.corpus_root),
            "output_root": str(self.output_root),
            "seed": self.seed,
            "similarity_id": self.similarity_id,
            "sampling": self.sampling.to_json(),
            "boundaries": self.boundaries.to_json(),
            "endpoints": {
                role: {
                    "endpoint_url": cfg.endpoint_url,
                    "model_id": cfg.model_id,
                    "prompt_template_id": cfg.prompt_template_id,
                    "max_output_tokens": cfg.max_output_tokens,
                    "temperature": cfg.temperature,
                    "ablate_question_in_unimodal2": cfg.ablate_question_in_unimodal2,
                }
                for role, cfg in sorted(self.endpoints.items())
            },
            "determinism_mode": self.determinism_mode,
            "parallelism": self.parallelism,
            "exclusion_policy": str(self.exclusion_policy) if self.exclusion_policy else None,
            "templates_file": str(self.templates_file) if self.templates_file else None,
            "cluster_k": self.cluster_k,
            "eval": {
                "method_id": self.eval.method_id,
                "predictions_dir": self.eval.predictions_dir,
                "threshold": self.eval.threshold,
                "similarity_id": self.eval.similarity_id,
            },
            "report": {
                "external_results": self.report.external_results,
                "row_order": list(self.report.row_order) if self.report.row_order else None,
                "column_order": list(self.report.column_order) if self.report.column_order else None,
            },
            "training_overrides": dict(sorted(self.training_overrides.items())),
        }


def load_run_config(path: Path, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a run config; CLI flag overrides applied on top."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise InputError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise InputError(f"config file {path} must hold a mapping")
    _check_keys(raw, _TOP_KEYS, "run config")

    overrides = overrides or {}
    base_dir = path.parent

    def resolve(p: str | None) -> Path | None:
        if p is None:
            return None
        candidate = Path(p)
        return candidate if candidate.is_absolute() else (base_dir / candidate)

    corpus_root = resolve(raw.get("corpus_root"))
    if corpus_root is None:
        raise InputError("config missing required key corpus_root")
    if not corpus_root.is_dir():
        raise InputError(f"corpus_root {corpus_root} is not a directory")

    out_override = overrides.get("output_root")
    output_root = Path(out_override) if out_override else resolve(raw.get("output_root"))
    if output_root is None:
        raise InputError("config missing required key output_root")

    seed = int(overrides.get("seed", raw.get("seed", 0)))

    sampling_raw = dict(raw.get("sampling", {}))
    _check_keys(sampling_raw, _SAMPLING_KEYS, "sampling")
    sampling = SamplingPlan(
        num_draws=int(overrides.get("num_draws", sampling_raw.get("num_draws", 5))),
        draw_size=int(overrides.get("draw_size", sampling_raw.get("draw_size", 100))),
        seed=seed,
        replacement_within_draw=bool(sampling_raw.get("replacement_within_draw", False)),
    )

    boundaries_raw = dict(raw.get("boundaries", {}))
    _check_keys(boundaries_raw, _BOUNDARY_KEYS, "boundaries")
    boundaries = CategoryBoundaries(
        synergy_upper=float(boundaries_raw.get("synergy_upper", 0.5)),
        uniqueness_upper=float(boundaries_raw.get("uniqueness_upper", 1.5)),
    )

    determinism_mode = bool(raw.get("determinism_mode", True))
    endpoints: dict[str, ModelRoleConfig] = {}
    endpoints_raw = raw.get("endpoints") or {}
    unknown_roles = sorted(set(endpoints_raw) - set(ROLES))
    if unknown_roles:
        raise InputError(f"unknown endpoint roles: {unknown_roles}")
    for role, cfg_raw in endpoints_raw.items():
        cfg_raw = dict(cfg_raw or {})
        _check_keys(cfg_raw, _ENDPOINT_KEYS, f"endpoints.{role}")
        for required in ("endpoint_url", "model_id"):
            if required not in cfg_raw:
                raise InputError(f"endpoints.{role} missing required key {required}")
        endpoints[role] = ModelRoleConfig(role=role, **cfg_raw)
    if endpoints:
        check_role_configs(endpoints, determinism_mode)

    exclusion_policy = resolve(raw.get("exclusion_policy"))
    if exclusion_policy is not None and not exclusion_policy.is_file():
        raise InputError(f"exclusion_policy {exclusion_policy} does not exist")
    templates_file = resolve(raw.get("templates_file"))
    if templates_file is not None and not templates_file.is_file():
        raise InputError(f"templates_file {templates_file} does not exist")

    eval_raw = dict(raw.get("eval", {}))
    _check_keys(eval_raw, _EVAL_KEYS, "eval")
    eval_settings = EvalSettings(
        method_id=eval_raw.get("method_id", "model"),
        predictions_dir=eval_raw.get("predictions_dir"),
        threshold=float(eval_raw.get("threshold", 1.0)),
        similarity_id=eval_raw.get("similarity_id"),
    )

    report_raw = dict(raw.get("report", {}))
    _check_keys(report_raw, _REPORT_KEYS, "report")
    report_settings = ReportSettings(
        external_results=report_raw.get("external_results"),
        row_order=tuple(report_raw["row_order"]) if report_raw.get("row_order") else None,
        column_order=tuple(report_raw["column_order"]) if report_raw.get("column_order") else None,
    )

    similarity_id = str(overrides.get("similarity_id", raw.get("similarity_id", "exact_match")))
    cluster_k = int(overrides.get("cluster_k", raw.get("cluster_k", 3)))

    return RunConfig(
        corpus_root=corpus_root,
        output_root=output_root,
        seed=seed,
        similarity_id=similarity_id,
        sampling=sampling,
        boundaries=boundaries,
        endpoints=endpoints,
        determinism_mode=determinism_mode,
        parallelism=int(raw.get("parallelism", 4)),
        exclusion_policy=exclusion_policy,
        templates_file=templates_file,
        cluster_k=cluster_k,
        eval=eval_settings,
        report=report_settings,
        training_overrides=dict(raw.get("training_overrides", {})),
    )

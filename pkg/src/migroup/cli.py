"""Command-line entry point wiring the pipeline stages.

Each subcommand writes its artifact to a deterministic path under
``<output_root>/runs/<run_id>/`` (run id = digest of the effective config)
and prints one machine-readable JSON summary line. Exit codes: 0 ok,
2 input error, 3 transport error, 4 protocol error.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from . import evalreport, grouping, inference, manifest as manifest_mod, scoring, similarity, types
from .config import RunConfig, load_run_config
from .errors import InputError, MigroupError
from .templates import DEFAULT_TEMPLATES, TemplateRegistry

SUBCOMMANDS = ("validate", "predict", "score", "distance", "group", "manifest", "eval", "report")

EMBED_URL_ENV = "MIGROUP_EMBEDDINGS_URL"
EMBED_MODEL_ENV = "MIGROUP_EMBEDDINGS_MODEL"
EMBED_KEY_ENV = "MIGROUP_EMBEDDINGS_API_KEY"


class RunContext:
    def __init__(self, config: RunConfig):
        self.config = config
        self.run_id = config.run_id()
        self.run_dir = Path(config.output_root) / "runs" / self.run_id
        self.cache_dir = Path(config.output_root) / "cache"
        self.templates = self._load_templates()
        self.registry = self._build_similarity_registry()

    def _load_templates(self) -> TemplateRegistry:
        registry = TemplateRegistry()
        for tid in DEFAULT_TEMPLATES.ids():
            registry.register(DEFAULT_TEMPLATES.get(tid))
        if self.config.templates_file:
            registry.load_file(self.config.templates_file)
        corpus_templates = Path(self.config.corpus_root) / "templates.json"
        if corpus_templates.is_file():
            registry.load_file(corpus_templates)
        return registry

    def _build_similarity_registry(self) -> similarity.SimilarityRegistry:
        registry = similarity.SimilarityRegistry()
        for sid in similarity.DEFAULT_REGISTRY.ids():
            registry.register(similarity.DEFAULT_REGISTRY.get(sid))
        url = os.environ.get(EMBED_URL_ENV)
        if url:
            client = similarity.EmbeddingClient(
                endpoint_url=url,
                model_id=os.environ.get(EMBED_MODEL_ENV, "embedding"),
                api_key=os.environ.get(EMBED_KEY_ENV),
            )
            registry.register(
                similarity.SimilarityFunction.make("embedding_cosine", "embedding_cosine"), client
            )
        return registry

    def similarity_fn(self, similarity_id: str | None = None) -> similarity.SimilarityFunction:
        sid = similarity_id or self.config.similarity_id
        fn = self.registry.get(sid)
        if fn.kind == "embedding_cosine" and not os.environ.get(EMBED_URL_ENV):
            raise InputError(f"similarity {sid!r} needs {EMBED_URL_ENV} set")
        return fn

    def stage_dir(self, stage: str) -> Path:
        d = self.run_dir / stage
        d.mkdir(parents=True, exist_ok=True)
        return d

    def require_artifact(self, path: Path, produced_by: str) -> Path:
        if not path.exists():
            raise InputError(
                f"missing upstream artifact {path}; run the `{produced_by}` subcommand first"
            )
        return path

    def corpus(self):
        return types.load_corpus(self.config.corpus_root)

    def summary(self, subcommand: str, artifacts: list[Path], status: str = "ok", **extra) -> None:
        rel = [str(p) for p in artifacts]
        line = {"subcommand": subcommand, "run_id": self.run_id, "status": status, "artifacts": rel}
        line.update(extra)
        print(json.dumps(line, sort_keys=True))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_validate(ctx: RunContext) -> int:
    reports = []
    for descriptor, instances in ctx.corpus():
        # surface unknown template ids at validation time
        try:
            ctx.templates.get(descriptor.prompt_template_id)
            template_error = None
        except InputError as exc:
            template_error = str(exc)
        report = types.validate_dataset(instances, descriptor)
        if template_error:
            report.errors.append(types.ValidationIssue(None, template_error))
        reports.append(report)
    artifact = ctx.stage_dir("validation") / "report.json"
    _write_json(artifact, {"datasets": [r.to_json() for r in reports]})
    rejected = [r.dataset_id for r in reports if not r.accepted]
    if rejected:
        ctx.summary("validate", [artifact], status="invalid", rejected=sorted(rejected))
        raise InputError(f"validation failed for datasets: {sorted(rejected)}")
    ctx.summary("validate", [artifact], datasets=len(reports))
    return 0


def cmd_predict(ctx: RunContext) -> int:
    cfg = ctx.config
    if not cfg.endpoints:
        raise InputError("config has no endpoints section; predict needs all three roles")
    inference.check_role_configs(cfg.endpoints, cfg.determinism_mode)
    cache = inference.PredictionCache(ctx.cache_dir)
    client = inference.ChatClient()
    out_dir = ctx.stage_dir("predictions")
    artifacts = []
    for descriptor, instances in ctx.corpus():
        triplets = inference.predict_dataset(
            instances,
            cfg.endpoints,
            cfg.parallelism,
            cache,
            client,
            default_template_id=descriptor.prompt_template_id,
            registry=ctx.templates,
            checkpoint_path=out_dir / f"{descriptor.dataset_id}.checkpoint.json",
        )
        path = out_dir / f"{descriptor.dataset_id}.jsonl"
        inference.write_triplets_jsonl(path, triplets)
        artifacts.append(path)
    ctx.summary("predict", artifacts)
    return 0


def _load_triplet_store(ctx: RunContext, corpus) -> dict:
    pred_dir = ctx.run_dir / "predictions"
    store = {}
    for descriptor, _instances in corpus:
        path = pred_dir / f"{descriptor.dataset_id}.jsonl"
        ctx.require_artifact(path, "predict")
        store[descriptor.dataset_id] = {
            t.instance_id: t for t in inference.read_triplets_jsonl(path)
        }
    return store


def cmd_score(ctx: RunContext) -> int:
    corpus = ctx.corpus()
    store = _load_triplet_store(ctx, corpus)
    fn = ctx.similarity_fn()
    reports = scoring.score_corpus(
        corpus, store, fn, ctx.config.sampling, ctx.config.boundaries, registry=ctx.registry
    )
    artifact = ctx.stage_dir("scores") / "scores.json"
    _write_json(
        artifact,
        {
            "similarity_id": fn.similarity_id,
            "sampling_plan": ctx.config.sampling.to_json(),
            "boundaries": ctx.config.boundaries.to_json(),
            "reports": [r.to_json() for r in reports],
        },
    )
    ctx.summary("score", [artifact], datasets=len(reports))
    return 0


def _load_reports(ctx: RunContext) -> list[types.MiScoreReport]:
    path = ctx.require_artifact(ctx.run_dir / "scores" / "scores.json", "score")
    obj = json.loads(path.read_text(encoding="utf-8"))
    return [types.MiScoreReport.from_json(r) for r in obj["reports"]]


def cmd_distance(ctx: RunContext) -> int:
    reports = _load_reports(ctx)
    matrix = grouping.distance_matrix(reports)
    out = ctx.stage_dir("distance")
    json_path = out / "distance_matrix.json"
    csv_path = out / "distance_matrix.csv"
    _write_json(json_path, matrix.to_json())
    matrix.write_csv(csv_path)
    ctx.summary("distance", [json_path, csv_path], datasets=len(reports))
    return 0


def cmd_group(ctx: RunContext) -> int:
    reports = _load_reports(ctx)
    anchor = grouping.group_by_anchor(reports, ctx.config.boundaries)
    clustered = None
    notes = []
    if len(reports) >= ctx.config.cluster_k:
        clustered = grouping.group_by_clustering(reports, ctx.config.cluster_k)
    else:
        notes.append(
            f"dp_cluster skipped: {len(reports)} datasets < k={ctx.config.cluster_k}"
        )
    artifact = ctx.stage_dir("groups") / "groups.json"
    obj = {"anchor": anchor.to_json(), "notes": notes}
    if clustered is not None:
        obj["dp_cluster"] = clustered.to_json()
    _write_json(artifact, obj)
    ctx.summary("group", [artifact], notes=notes)
    return 0


def cmd_manifest(ctx: RunContext, method: str = "anchor") -> int:
    path = ctx.require_artifact(ctx.run_dir / "groups" / "groups.json", "group")
    obj = json.loads(path.read_text(encoding="utf-8"))
    if method not in obj:
        raise InputError(f"groups.json has no {method!r} assignment")
    groups = types.GroupAssignment.from_json(obj[method])
    datasets = {d.dataset_id: (d, insts) for d, insts in ctx.corpus()}
    policy = (
        manifest_mod.ExclusionPolicy.load(ctx.config.exclusion_policy)
        if ctx.config.exclusion_policy
        else manifest_mod.ExclusionPolicy()
    )
    out_dir = ctx.stage_dir("manifests")
    index = manifest_mod.build_group_manifests(
        groups,
        datasets,
        policy,
        out_dir,
        registry=ctx.templates,
        config_overrides=ctx.config.training_overrides,
    )
    artifacts = [out_dir / "manifest_index.json"] + [
        out_dir / g.manifest_path for g in index.groups
    ]
    ctx.summary("manifest", artifacts, warnings=index.warnings)
    return 0


def cmd_eval(ctx: RunContext) -> int:
    corpus = ctx.corpus()
    fn = ctx.similarity_fn(ctx.config.eval.similarity_id)
    results = []
    if ctx.config.eval.predictions_dir:
        pred_dir = Path(ctx.config.eval.predictions_dir)
        for descriptor, instances in corpus:
            path = pred_dir / f"{descriptor.dataset_id}.jsonl"
            if not path.is_file():
                raise InputError(f"eval predictions file {path} does not exist")
            predictions = [
                json.loads(line)
                for line in path.read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
            results.append(
                evalreport.score_predictions(
                    predictions,
                    (descriptor, instances),
                    fn,
                    ctx.config.eval.threshold,
                    method_id=ctx.config.eval.method_id,
                    registry=ctx.registry,
                )
            )
    else:
        store = _load_triplet_store(ctx, corpus)
        for descriptor, instances in corpus:
            predictions = [
                {"instance_id": iid, "text": t.ym} for iid, t in sorted(store[descriptor.dataset_id].items())
            ]
            results.append(
                evalreport.score_predictions(
                    predictions,
                    (descriptor, instances),
                    fn,
                    ctx.config.eval.threshold,
                    method_id=ctx.config.eval.method_id,
                    registry=ctx.registry,
                )
            )
    artifact = ctx.stage_dir("eval") / "results.jsonl"
    evalreport.write_results_jsonl(artifact, results)
    ctx.summary("eval", [artifact], datasets=len(results))
    return 0


def cmd_report(ctx: RunContext) -> int:
    path = ctx.require_artifact(ctx.run_dir / "eval" / "results.jsonl", "eval")
    results = evalreport.read_results_jsonl(path)
    external = ctx.config.report.external_results
    if external:
        fixture_path = None if external == "builtin" else Path(external)
        ext_results, _meta = evalreport.load_published_results(fixture_path)
        results.extend(ext_results)

    row_order = ctx.config.report.row_order or tuple(
        sorted({r.dataset_id for r in results})
    )
    column_order = ctx.config.report.column_order or tuple(
        sorted({r.method_id for r in results})
    )
    table = evalreport.comparison_table(results, row_order, column_order)
    out = ctx.stage_dir("report")
    text_path = out / "table.txt"
    csv_path = out / "table.csv"
    text_path.write_text(table.render_text(), encoding="utf-8")
    csv_path.write_text(table.render_csv(), encoding="utf-8")
    artifacts = [text_path, csv_path]

    methods_present = {r.method_id for r in results}
    for kind in evalreport.PLOT_KINDS:
        required = set(evalreport.REQUIRED_METHODS[kind])
        if required <= methods_present:
            data = evalreport.plot_data(results, kind, dataset_order=row_order)
            plot_csv = out / f"plot_{kind}.csv"
            plot_json = out / f"plot_{kind}.json"
            plot_csv.write_text(data.to_csv(), encoding="utf-8")
            _write_json(plot_json, data.to_json())
            artifacts.extend([plot_csv, plot_json])
    ctx.summary("report", artifacts)
    return 0


def run_subcommand(name: str, ctx: RunContext, *, manifest_method: str = "anchor") -> int:
    handlers = {
        "validate": cmd_validate,
        "predict": cmd_predict,
        "score": cmd_score,
        "distance": cmd_distance,
        "group": cmd_group,
        "eval": cmd_eval,
        "report": cmd_report,
    }
    if name == "manifest":
        return cmd_manifest(ctx, manifest_method)
    if name == "pipeline":
        for stage in SUBCOMMANDS:
            run_subcommand(stage, ctx, manifest_method=manifest_method)
        return 0
    try:
        handler = handlers[name]
    except KeyError:
        raise InputError(f"unknown subcommand {name!r}") from None
    return handler(ctx)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="migroup",
        description="Score cross-modal interaction, group datasets, emit tuning manifests.",
    )
    parser.add_argument("subcommand", choices=[*SUBCOMMANDS, "pipeline"])
    parser.add_argument("--config", required=True, type=Path, help="run config YAML")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--similarity", default=None, help="override similarity_id")
    parser.add_argument("--draws", type=int, default=None, help="override sampling.num_draws")
    parser.add_argument("--draw-size", type=int, default=None, help="override sampling.draw_size")
    parser.add_argument("--k", type=int, default=None, help="override cluster_k")
    parser.add_argument("--out", type=Path, default=None, help="override output_root")
    parser.add_argument(
        "--method",
        choices=["anchor", "dp_cluster"],
        default="anchor",
        help="grouping used by the manifest subcommand",
    )
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.similarity is not None:
        overrides["similarity_id"] = args.similarity
    if args.draws is not None:
        overrides["num_draws"] = args.draws
    if args.draw_size is not None:
        overrides["draw_size"] = args.draw_size
    if args.k is not None:
        overrides["cluster_k"] = args.k
    if args.out is not None:
        overrides["output_root"] = args.out
    try:
        config = load_run_config(args.config, overrides)
        ctx = RunContext(config)
        return run_subcommand(args.subcommand, ctx, manifest_method=args.method)
    except MigroupError as exc:
        print(
            json.dumps(
                {
                    "status": "error",
                    "category": type(exc).__name__,
                    "exit_code": exc.exit_code,
                    "message": str(exc),
                },
                sort_keys=True,
            ),
            file=sys.stderr,
        )
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())

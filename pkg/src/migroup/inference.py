"""Chat-completions client for the three model roles, with a disk cache.

Every (model, role, template, rendered prompt, media) combination is cached
on disk so a warm re-run needs zero network calls and reproduces byte-
identical triplets. Transient endpoint failures (connection errors, 429,
5xx) retry with exponential backoff; malformed payloads raise a protocol
error carrying the raw body.
"""

import hashlib
import json
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import requests

from .errors import InputError, ProtocolError, TransportError
from .templates import PromptRecord, TemplateRegistry, DEFAULT_TEMPLATES, render_prompt
from .types import InstructionInstance, PredictionTriplet, ROLES, RoleProvenance


@dataclass(frozen=True)
class ModelRoleConfig:
    role: str
    endpoint_url: str
    model_id: str
    prompt_template_id: str | None = None  # None: use the dataset descriptor's template
    max_output_tokens: int = 64
    temperature: float = 0.0
    request_timeout: float = 30.0
    max_retries: int = 3
    min_request_interval: float = 0.0  # simple per-endpoint rate limit, seconds
    api_key_env: str | None = None
    ablate_question_in_unimodal2: bool = False

    def __post_init__(self):
        if self.role not in ROLES:
            raise InputError(f"unknown role {self.role!r}")
        if self.max_output_tokens < 1:
            raise InputError("max_output_tokens must be positive")
        if self.temperature < 0:
            raise InputError("temperature must be >= 0")
        if self.max_retries < 0:
            raise InputError("max_retries must be >= 0")

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env) if self.api_key_env else None


def check_role_configs(configs: Mapping[str, ModelRoleConfig], determinism_mode: bool) -> None:
    """Each of the three roles exactly once; temperature 0 under determinism."""
    if sorted(configs) != sorted(ROLES):
        raise InputError(f"roles must be configured exactly once each; got {sorted(configs)}")
    for role, cfg in configs.items():
        if cfg.role != role:
            raise InputError(f"config under key {role!r} declares role {cfg.role!r}")
        if determinism_mode and cfg.temperature != 0.0:
            raise InputError(f"determinism_mode requires temperature 0 (role {role!r})")


class PredictionCache:
    """Content-addressed disk cache of endpoint responses.

    Entry key: sha256 over (model_id, role, template_id, rendered prompt,
    media digest). Values hold the raw response, the extracted answer, and
    the original provenance, so cache hits reproduce answers byte-for-byte.
    Writers go through an atomic rename; readers need no locks.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()

    @staticmethod
    def key(model_id: str, role: str, template_id: str, prompt_text: str, media_digest: str) -> str:
        payload = json.dumps(
            [model_id, role, template_id, prompt_text, media_digest], ensure_ascii=False
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @staticmethod
    def media_digest(prompt: PromptRecord) -> str:
        # media are opaque handles; the digest covers the handle, not pixels
        if prompt.media is None:
            return "none"
        return hashlib.sha256(prompt.media.uri.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.is_file():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, entry: dict) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = json.dumps(entry, sort_keys=True, ensure_ascii=False)
        with self._write_lock:
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    fh.write(data)
                os.replace(tmp, path)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


class _EndpointThrottle:
    """Enforces a minimum interval between requests to one endpoint."""

    def __init__(self):
        self._lock = threading.Lock()
        self._last: dict[str, float] = {}

    def wait(self, endpoint: str, interval: float, sleep=time.sleep, clock=time.monotonic) -> None:
        if interval <= 0:
            return
        while True:
            with self._lock:
                now = clock()
                last = self._last.get(endpoint, -interval)
                if now - last >= interval:
                    self._last[endpoint] = now
                    return
                delay = interval - (now - last)
            sleep(delay)


class ChatClient:
    """Thin chat-completions transport with retries and backoff."""

    RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})

    def __init__(
        self,
        *,
        session: requests.Session | None = None,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        sleep=time.sleep,
    ):
        self._session = session or requests.Session()
        self._backoff_base = backoff_base
        self._backoff_cap = backoff_cap
        self._sleep = sleep
        self._throttle = _EndpointThrottle()

    def complete(self, cfg: ModelRoleConfig, prompt: PromptRecord, *, user: str) -> tuple[str, dict, int]:
        """Return (answer_text, raw_response, retries_used)."""
        content: list[dict] = [{"type": "text", "text": prompt.text}]
        if prompt.media is not None:
            content.append({"type": "image_url", "image_url": {"url": prompt.media.uri}})
        payload = {
            "model": cfg.model_id,
            "messages": [{"role": "user", "content": content}],
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_output_tokens,
            "user": user,
        }
        headers = {"Content-Type": "application/json"}
        key = cfg.api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"

        last_error: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            self._throttle.wait(cfg.endpoint_url, cfg.min_request_interval, sleep=self._sleep)
            try:
                resp = self._session.post(
                    cfg.endpoint_url, json=payload, headers=headers, timeout=cfg.request_timeout
                )
            except requests.RequestException as exc:
                last_error = TransportError(f"endpoint {cfg.endpoint_url} unreachable: {exc}")
            else:
                if resp.status_code == 200:
                    return (*self._parse(resp.text), attempt)
                if resp.status_code in self.RETRYABLE_STATUS:
                    last_error = TransportError(
                        f"endpoint {cfg.endpoint_url} returned {resp.status_code}",
                        status=resp.status_code,
                        body=resp.text[:2000],
                    )
                else:
                    raise TransportError(
                        f"endpoint {cfg.endpoint_url} returned {resp.status_code}",
                        status=resp.status_code,
                        body=resp.text[:2000],
                    )
            if attempt < cfg.max_retries:
                self._sleep(min(self._backoff_base * 2**attempt, self._backoff_cap))
        raise last_error  # type: ignore[misc]

    @staticmethod
    def _parse(body: str) -> tuple[str, dict]:
        try:
            obj = json.loads(body)
        except ValueError as exc:
            raise ProtocolError(f"response is not JSON: {exc}", raw_body=body[:2000]) from exc
        try:
            choices = obj["choices"]
            if not choices:
                raise ProtocolError("response has an empty choices list", raw_body=body[:2000])
            content = choices[0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat response: {exc}", raw_body=body[:2000]) from exc
        if not isinstance(content, str):
            raise ProtocolError("message content is not a string", raw_body=body[:2000])
        return content, obj


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def predict_role(
    instance: InstructionInstance,
    cfg: ModelRoleConfig,
    template_id: str,
    cache: PredictionCache,
    client: ChatClient,
    *,
    registry: TemplateRegistry = DEFAULT_TEMPLATES,
) -> tuple[str, RoleProvenance]:
    prompt = render_prompt(
        template_id,
        instance,
        cfg.role,
        registry=registry,
        ablate_question_in_unimodal2=cfg.ablate_question_in_unimodal2,
    )
    key = cache.key(cfg.model_id, cfg.role, template_id, prompt.cache_text(), cache.media_digest(prompt))
    entry = cache.get(key)
    if entry is not None:
        prov = RoleProvenance(
            model_id=entry["model_id"],
            endpoint=entry["endpoint"],
            timestamp=entry["timestamp"],
            cache_hit=True,
        )
        return entry["answer"], prov

    user_tag = f"{instance.instance_id}:{cfg.role}"
    answer, raw, retries = client.complete(cfg, prompt, user=user_tag)
    timestamp = _utcnow()
    cache.put(
        key,
        {
            "answer": answer,
            "raw_response": raw,
            "model_id": cfg.model_id,
            "endpoint": cfg.endpoint_url,
            "role": cfg.role,
            "template_id": template_id,
            "timestamp": timestamp,
            "retries": retries,
        },
    )
    return answer, RoleProvenance(
        model_id=cfg.model_id, endpoint=cfg.endpoint_url, timestamp=timestamp, cache_hit=False
    )


def predict_triplet(
    instance: InstructionInstance,
    configs: Mapping[str, ModelRoleConfig],
    cache: PredictionCache,
    client: ChatClient,
    *,
    default_template_id: str = "default",
    registry: TemplateRegistry = DEFAULT_TEMPLATES,
) -> PredictionTriplet:
    """Elicit y1, y2, ym for one instance (cache first, then the endpoints)."""
    check_role_configs(configs, determinism_mode=False)
    answers: dict[str, str] = {}
    provenance: list[tuple[str, RoleProvenance]] = []
    for role in ROLES:
        cfg = configs[role]
        template_id = cfg.prompt_template_id or default_template_id
        answer, prov = predict_role(instance, cfg, template_id, cache, client, registry=registry)
        answers[role] = answer
        provenance.append((role, prov))
    return PredictionTriplet(
        instance_id=instance.instance_id,
        y1=answers["unimodal1"],
        y2=answers["unimodal2"],
        ym=answers["multimodal"],
        provenance=tuple(provenance),
    )


class PredictionRunError(TransportError):
    """A dataset run failed part-way; carries the resume checkpoint path."""

    def __init__(self, message: str, checkpoint_path: Path, cause: Exception):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
        self.cause = cause
        # keep the categorized exit code of the underlying failure
        if isinstance(cause, (TransportError, ProtocolError, InputError)):
            self.exit_code = cause.exit_code


def predict_dataset(
    instances: Sequence[InstructionInstance],
    configs: Mapping[str, ModelRoleConfig],
    parallelism: int,
    cache: PredictionCache,
    client: ChatClient,
    *,
    default_template_id: str = "default",
    registry: TemplateRegistry = DEFAULT_TEMPLATES,
    checkpoint_path: Path | None = None,
) -> list[PredictionTriplet]:
    """Predict all instances; output order matches input order.

    At most ``parallelism`` instances are in flight at once. If any instance
    fails after retries, a checkpoint listing completed instance ids is
    written and the run fails; a re-run serves completed work from the cache.
    """
    if parallelism < 1:
        raise InputError("parallelism must be >= 1")
    check_role_configs(configs, determinism_mode=False)

    results: list[PredictionTriplet | None] = [None] * len(instances)
    errors: list[tuple[int, Exception]] = []
    lock = threading.Lock()

    def work(idx: int) -> None:
        try:
            triplet = predict_triplet(
                instances[idx],
                configs,
                cache,
                client,
                default_template_id=default_template_id,
                registry=registry,
            )
        except Exception as exc:  # noqa: BLE001 - collected and re-raised below
            with lock:
                errors.append((idx, exc))
            return
        results[idx] = triplet

    if parallelism == 1:
        for i in range(len(instances)):
            work(i)
            if errors:
                break
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(work, range(len(instances))))

    if errors:
        errors.sort(key=lambda e: e[0])
        idx, cause = errors[0]
        completed = [t.instance_id for t in results if t is not None]
        ckpt = checkpoint_path or Path(tempfile.gettempdir()) / "migroup_predict_checkpoint.json"
        ckpt.parent.mkdir(parents=True, exist_ok=True)
        ckpt.write_text(
            json.dumps({"completed_instance_ids": sorted(completed)}, indent=2) + "\n",
            encoding="utf-8",
        )
        raise PredictionRunError(
            f"prediction failed for instance {instances[idx].instance_id!r}: {cause} "
            f"(checkpoint at {ckpt})",
            checkpoint_path=ckpt,
            cause=cause,
        )
    return [t for t in results if t is not None]


def write_triplets_jsonl(path: Path, triplets: Sequence[PredictionTriplet]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(json.dumps(t.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


def read_triplets_jsonl(path: Path) -> list[PredictionTriplet]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(PredictionTriplet.from_json(json.loads(line)))
    return out

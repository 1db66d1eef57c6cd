"""FastAPI app exposing the chat-completions and embeddings contracts."""

import threading
import time

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .config import AdapterConfig
from .engines import ImageDecodeError, build_engines


def _error(status: int, message: str, error_type: str = "invalid_request_error") -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"message": message, "type": error_type}}
    )


def extract_parts(messages) -> tuple[str, list[str], str | None]:
    """Pull prompt text and image urls out of the last user message."""
    if not isinstance(messages, list) or not messages:
        raise ValueError("messages must be a non-empty list")
    last_user = None
    for msg in messages:
        if not isinstance(msg, dict) or "role" not in msg or "content" not in msg:
            raise ValueError("each message needs role and content")
        if msg["role"] == "user":
            last_user = msg
    if last_user is None:
        raise ValueError("no user message present")
    content = last_user["content"]
    if isinstance(content, str):
        return content, [], None
    if not isinstance(content, list):
        raise ValueError("content must be a string or a list of parts")
    texts, images = [], []
    for part in content:
        if not isinstance(part, dict) or "type" not in part:
            raise ValueError("each content part needs a type")
        if part["type"] == "text":
            texts.append(part.get("text", ""))
        elif part["type"] == "image_url":
            url = (part.get("image_url") or {}).get("url")
            if not url:
                raise ValueError("image_url part needs image_url.url")
            images.append(url)
        else:
            raise ValueError(f"unsupported part type {part['type']!r}")
    return "\n".join(texts), images, None


def create_app(config: AdapterConfig) -> FastAPI:
    chat_engine, embedding_engine = build_engines(config)
    app = FastAPI(title="local-adapter", version="0.1.0")
    slots = threading.BoundedSemaphore(config.max_concurrent)

    @app.get("/v1/models")
    async def models():
        return {
            "object": "list",
            "data": [
                {"id": chat_engine.model_id, "object": "model"},
                {"id": embedding_engine.model_id, "object": "model"},
            ],
        }

    @app.post("/v1/chat/completions")
    async def chat_completions(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "request body is not JSON")
        if not isinstance(payload, dict) or "model" not in payload or "messages" not in payload:
            return _error(400, "payload needs model and messages")
        try:
            prompt_text, image_urls, _ = extract_parts(payload["messages"])
        except ValueError as exc:
            return _error(400, str(exc))

        if not slots.acquire(blocking=False):
            return _error(429, "too many concurrent requests", "overloaded_error")
        try:
            try:
                answer = chat_engine.generate(
                    prompt_text,
                    image_urls,
                    user=str(payload.get("user", "")),
                    temperature=float(payload.get("temperature", 0.0)),
                )
            except ImageDecodeError as exc:
                return _error(400, str(exc))
        finally:
            slots.release()

        return {
            "id": "local-" + format(abs(hash(prompt_text)) % 16**8, "08x"),
            "object": "chat.completion",
            "created": int(time.time()),
            "model": chat_engine.model_id,
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": answer},
                    "finish_reason": "stop",
                }
            ],
        }

    @app.post("/v1/embeddings")
    async def embeddings(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "request body is not JSON")
        if not isinstance(payload, dict):
            return _error(400, "payload must be an object")
        texts = payload.get("input")
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            return _error(400, "input must be a list of strings")
        if len(texts) > config.max_batch_size:
            return _error(
                413,
                f"batch of {len(texts)} exceeds max_batch_size {config.max_batch_size}",
                "batch_too_large",
            )
        if not slots.acquire(blocking=False):
            return _error(429, "too many concurrent requests", "overloaded_error")
        try:
            vectors = embedding_engine.embed(texts)
        finally:
            slots.release()
        return {
            "object": "list",
            "model": embedding_engine.model_id,
            "data": [
                {"object": "embedding", "index": i, "embedding": v}
                for i, v in enumerate(vectors)
            ],
        }

    return app

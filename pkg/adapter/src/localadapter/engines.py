"""Chat and embedding engines behind one small interface.

The mock engines need no model weights: chat answers come from a canned
table keyed by ``"<instance_id>:<role>"`` in the request's ``user`` field
(digest-derived echo otherwise), embeddings are token-hash unit vectors.
Both are pure functions of their inputs, so temperature-0 requests are
reproducible across calls and restarts.

The hf engines wrap local model weights behind the same interface; they
import their heavy dependencies lazily and are only constructed in
``--mode hf``.
"""

import base64
import binascii
import hashlib
import math

from .config import AdapterConfig


class ImageDecodeError(ValueError):
    """An image part's payload cannot be decoded."""


def validate_image_url(url: str) -> None:
    """Reject undecodable inline payloads; opaque references pass through.

    Only ``data:`` URLs carry bytes to decode; files and remote URLs are
    treated as opaque handles in mock mode.
    """
    if not url:
        raise ImageDecodeError("empty image url")
    if url.startswith("data:"):
        _, _, payload = url.partition(",")
        if not payload:
            raise ImageDecodeError("data url carries no payload")
        try:
            base64.b64decode(payload, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise ImageDecodeError(f"image payload is not valid base64: {exc}") from exc


class MockChatEngine:
    def __init__(self, config: AdapterConfig):
        self.model_id = config.chat_model_id
        self._answers = config.answers

    def generate(self, prompt_text: str, image_urls: list[str], user: str, temperature: float) -> str:
        for url in image_urls:
            validate_image_url(url)
        if user and ":" in user:
            instance_id, role = user.rsplit(":", 1)
            per_role = self._answers.get(instance_id)
            if per_role and role in per_role:
                return per_role[role]
        digest = hashlib.sha256(prompt_text.encode("utf-8")).hexdigest()[:12]
        return f"echo:{digest}"


class MockEmbeddingEngine:
    def __init__(self, config: AdapterConfig):
        self.model_id = config.embedding_model_id
        self.dim = config.embedding_dim

    def embed(self, texts: list[str]) -> list[list[float]]:
        return [self._one(t) for t in texts]

    def _one(self, text: str) -> list[float]:
        buckets = [0.0] * self.dim
        for token in text.casefold().split():
            digest = hashlib.sha256(token.encode("utf-8")).digest()
            idx = int.from_bytes(digest[:4], "big") % self.dim
            sign = 1.0 if digest[4] % 2 == 0 else -1.0
            buckets[idx] += sign
        norm = math.sqrt(sum(b * b for b in buckets))
        if norm == 0.0:
            buckets[0] = 1.0
            norm = 1.0
        return [b / norm for b in buckets]


class HfChatEngine:
    """Vision-language generation from local weights (needs the `models` extra)."""

    def __init__(self, config: AdapterConfig):
        from transformers import pipeline  # deferred: heavy import

        self.model_id = config.chat_model_id
        self._seed = config.seed
        self._pipe = pipeline(
            "image-text-to-text", model=config.chat_model_id, device=config.device
        )

    def generate(self, prompt_text: str, image_urls: list[str], user: str, temperature: float) -> str:
        import transformers

        transformers.set_seed(self._seed)
        content = [{"type": "text", "text": prompt_text}]
        for url in image_urls:
            content.append({"type": "image", "url": url})
        messages = [{"role": "user", "content": content}]
        out = self._pipe(
            text=messages,
            max_new_tokens=64,
            do_sample=temperature > 0,
            temperature=temperature if temperature > 0 else None,
        )
        return out[0]["generated_text"][-1]["content"]


class HfEmbeddingEngine:
    """Sentence embeddings from local weights (needs the `models` extra)."""

    def __init__(self, config: AdapterConfig):
        from sentence_transformers import SentenceTransformer  # deferred

        self.model_id = config.embedding_model_id
        self._model = SentenceTransformer(config.embedding_model_id, device=config.device)

    def embed(self, texts: list[str]) -> list[list[float]]:
        if not texts:
            return []
        vectors = self._model.encode(texts, normalize_embeddings=True, convert_to_numpy=True)
        return [v.tolist() for v in vectors]


def build_engines(config: AdapterConfig):
    if config.mode == "mock":
        return MockChatEngine(config), MockEmbeddingEngine(config)
    return HfChatEngine(config), HfEmbeddingEngine(config)

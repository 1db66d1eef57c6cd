"""Wire-contract conformance suite for chat + embeddings endpoints.

Runs against the in-process stub by default. Point it at any live server
implementing the same contracts by setting MIGROUP_CONFORMANCE_CHAT_URL and
MIGROUP_CONFORMANCE_EMBEDDINGS_URL (the adapter's test suite does exactly
that).
"""

import json
import math
import os
from importlib import resources

import pytest
import requests
from jsonschema import validate

from migroup.similarity import EmbeddingClient, SimilarityFunction, SimilarityRegistry, score
from migroup.testing.stub_server import StubServer

CHAT_ENV = "MIGROUP_CONFORMANCE_CHAT_URL"
EMBED_ENV = "MIGROUP_CONFORMANCE_EMBEDDINGS_URL"


def load_schema(name: str) -> dict:
    text = resources.files("migroup.fixtures.wire").joinpath(name).read_text("utf-8")
    return json.loads(text)


@pytest.fixture(scope="module")
def endpoints():
    chat = os.environ.get(CHAT_ENV)
    embed = os.environ.get(EMBED_ENV)
    if chat and embed:
        yield chat, embed
        return
    with StubServer() as server:
        yield server.chat_url, server.embeddings_url


def chat_payload(text: str, image_url: str | None = None) -> dict:
    content = [{"type": "text", "text": text}]
    if image_url:
        content.append({"type": "image_url", "image_url": {"url": image_url}})
    return {
        "model": "conformance-model",
        "messages": [{"role": "user", "content": content}],
        "temperature": 0.0,
        "max_tokens": 64,
        "user": "conformance:multimodal",
    }


class TestChatContract:
    def test_request_shape_matches_schema(self):
        validate(chat_payload("hello", "file:///img.png"), load_schema("chat_completions_request.schema.json"))

    def test_text_only_round_trip(self, endpoints):
        chat_url, _ = endpoints
        resp = requests.post(chat_url, json=chat_payload("name one color"), timeout=30)
        assert resp.status_code == 200
        body = resp.json()
        validate(body, load_schema("chat_completions_response.schema.json"))
        assert isinstance(body["choices"][0]["message"]["content"], str)

    def test_image_part_round_trip(self, endpoints):
        chat_url, _ = endpoints
        payload = chat_payload("describe the image", "file:///media/demo.png")
        resp = requests.post(chat_url, json=payload, timeout=60)
        assert resp.status_code == 200
        validate(resp.json(), load_schema("chat_completions_response.schema.json"))

    def test_temperature_zero_is_deterministic(self, endpoints):
        chat_url, _ = endpoints
        payload = chat_payload("repeat after me: determinism")
        a = requests.post(chat_url, json=payload, timeout=30).json()
        b = requests.post(chat_url, json=payload, timeout=30).json()
        assert a["choices"][0]["message"]["content"] == b["choices"][0]["message"]["content"]


class TestEmbeddingsContract:
    def test_shape_and_order(self, endpoints):
        _, embed_url = endpoints
        payload = {"model": "conformance-embed", "input": ["alpha", "beta", "alpha"]}
        validate(payload, load_schema("embeddings_request.schema.json"))
        resp = requests.post(embed_url, json=payload, timeout=30)
        assert resp.status_code == 200
        body = resp.json()
        validate(body, load_schema("embeddings_response.schema.json"))
        rows = sorted(body["data"], key=lambda d: d["index"])
        assert len(rows) == 3
        dims = {len(r["embedding"]) for r in rows}
        assert len(dims) == 1
        # identical texts yield identical vectors
        assert rows[0]["embedding"] == rows[2]["embedding"]

    def test_empty_input(self, endpoints):
        _, embed_url = endpoints
        resp = requests.post(embed_url, json={"model": "m", "input": []}, timeout=30)
        assert resp.status_code == 200
        assert resp.json()["data"] == []

    def test_reflexivity_through_endpoint(self, endpoints):
        _, embed_url = endpoints
        registry = SimilarityRegistry()
        fn = SimilarityFunction.make("emb", "embedding_cosine")
        registry.register(fn, EmbeddingClient(embed_url, "conformance-embed", backoff_base=0.0))
        assert score(fn, "zebra", "zebra", registry=registry) == pytest.approx(1.0, abs=1e-6)

    def test_cosine_range_through_endpoint(self, endpoints):
        _, embed_url = endpoints
        client = EmbeddingClient(embed_url, "conformance-embed", backoff_base=0.0)
        vectors = client.embed(["red house", "green tree", "red house by the green tree"])
        for u in vectors:
            norm = math.sqrt(sum(x * x for x in u))
            assert norm == pytest.approx(1.0, rel=1e-3) or norm > 0

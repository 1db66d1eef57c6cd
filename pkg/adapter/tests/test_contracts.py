import base64
import math

import pytest
import requests
from jsonschema import validate

from localadapter.config import AdapterConfig
from localadapter.engines import ImageDecodeError, MockChatEngine, MockEmbeddingEngine, validate_image_url

from support import load_schema


def chat_payload(text: str, image_url: str | None = None, user: str = "") -> dict:
    content = [{"type": "text", "text": text}]
    if image_url:
        content.append({"type": "image_url", "image_url": {"url": image_url}})
    return {
        "model": "local-chat-mock",
        "messages": [{"role": "user", "content": content}],
        "temperature": 0.0,
        "max_tokens": 64,
        "user": user,
    }


class TestChatEndpoint:
    def test_text_only_matches_response_schema(self, chat_url):
        resp = requests.post(chat_url, json=chat_payload("name one color"), timeout=10)
        assert resp.status_code == 200
        body = resp.json()
        validate(body, load_schema("chat_completions_response.schema.json"))
        assert body["model"] == "local-chat-mock"  # advertised id matches loaded model

    def test_canned_answer_by_instance_and_role(self, chat_url):
        resp = requests.post(
            chat_url,
            json=chat_payload("What is the main subject?", user="cap-0001:multimodal"),
            timeout=10,
        )
        assert resp.json()["choices"][0]["message"]["content"] == "zebra"

    def test_image_part_accepted(self, chat_url):
        inline = "data:image/png;base64," + base64.b64encode(b"\x89PNG fake").decode()
        resp = requests.post(chat_url, json=chat_payload("describe", inline), timeout=10)
        assert resp.status_code == 200
        validate(resp.json(), load_schema("chat_completions_response.schema.json"))

    def test_undecodable_image_is_400(self, chat_url):
        resp = requests.post(
            chat_url, json=chat_payload("describe", "data:image/png;base64,@@not-base64@@"),
            timeout=10,
        )
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_temperature_zero_determinism(self, chat_url):
        payload = chat_payload("repeat: determinism")
        a = requests.post(chat_url, json=payload, timeout=10).json()
        b = requests.post(chat_url, json=payload, timeout=10).json()
        assert (
            a["choices"][0]["message"]["content"] == b["choices"][0]["message"]["content"]
        )

    def test_malformed_payload_is_400(self, chat_url):
        resp = requests.post(chat_url, json={"model": "x"}, timeout=10)
        assert resp.status_code == 400
        resp = requests.post(chat_url, json={"model": "x", "messages": []}, timeout=10)
        assert resp.status_code == 400


class TestEmbeddingsEndpoint:
    def test_shape_and_schema(self, embeddings_url):
        payload = {"model": "local-embed-mock", "input": ["a", "b b", "a"]}
        resp = requests.post(embeddings_url, json=payload, timeout=10)
        assert resp.status_code == 200
        body = resp.json()
        validate(body, load_schema("embeddings_response.schema.json"))
        rows = sorted(body["data"], key=lambda d: d["index"])
        assert len(rows) == 3
        assert len({len(r["embedding"]) for r in rows}) == 1
        assert rows[0]["embedding"] == rows[2]["embedding"]

    def test_empty_input_is_empty_list(self, embeddings_url):
        resp = requests.post(embeddings_url, json={"model": "m", "input": []}, timeout=10)
        assert resp.status_code == 200
        assert resp.json()["data"] == []

    def test_oversize_batch_is_413(self, embeddings_url):
        resp = requests.post(
            embeddings_url, json={"model": "m", "input": ["x"] * 33}, timeout=10
        )
        assert resp.status_code == 413

    def test_bad_input_is_400(self, embeddings_url):
        resp = requests.post(embeddings_url, json={"model": "m", "input": "text"}, timeout=10)
        assert resp.status_code == 400

    def test_identical_texts_identical_vectors_across_requests(self, embeddings_url):
        a = requests.post(embeddings_url, json={"model": "m", "input": ["zebra"]}, timeout=10).json()
        b = requests.post(embeddings_url, json={"model": "m", "input": ["zebra"]}, timeout=10).json()
        assert a["data"][0]["embedding"] == b["data"][0]["embedding"]

    def test_vectors_unit_norm(self, embeddings_url):
        body = requests.post(
            embeddings_url, json={"model": "m", "input": ["red house", ""]}, timeout=10
        ).json()
        for row in body["data"]:
            norm = math.sqrt(sum(x * x for x in row["embedding"]))
            assert norm == pytest.approx(1.0, abs=1e-9)


class TestEngines:
    def test_mock_chat_deterministic_across_instances(self):
        config = AdapterConfig()
        a = MockChatEngine(config).generate("same prompt", [], user="", temperature=0.0)
        b = MockChatEngine(config).generate("same prompt", [], user="", temperature=0.0)
        assert a == b  # survives restarts: derived from content only

    def test_mock_embeddings_deterministic_across_instances(self):
        config = AdapterConfig()
        a = MockEmbeddingEngine(config).embed(["token hash"])
        b = MockEmbeddingEngine(config).embed(["token hash"])
        assert a == b

    def test_image_validation(self):
        validate_image_url("file:///media/x.png")  # opaque handles pass
        validate_image_url("data:image/png;base64," + base64.b64encode(b"ok").decode())
        with pytest.raises(ImageDecodeError):
            validate_image_url("data:image/png;base64,")
        with pytest.raises(ImageDecodeError):
            validate_image_url("data:image/png;base64,!!!")

    def test_advertised_ids_match_loaded(self):
        config = AdapterConfig(chat_model_id="c-1", embedding_model_id="e-1")
        assert MockChatEngine(config).model_id == "c-1"
        assert MockEmbeddingEngine(config).model_id == "e-1"

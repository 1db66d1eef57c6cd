"""Adapter configuration."""

import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class AdapterConfig:
    host: str = "127.0.0.1"
    port: int = 8091
    mode: str = "mock"  # "mock" (no weights) or "hf" (local model weights)
    chat_model_id: str = "local-chat-mock"
    embedding_model_id: str = "local-embed-mock"
    device: str = "cpu"
    max_batch_size: int = 128
    max_concurrent: int = 16
    embedding_dim: int = 64
    seed: int = 0
    answers_path: Path | None = None  # mock mode: {instance_id: {role: answer}}
    answers: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("mock", "hf"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.max_batch_size < 1:
            raise ValueError("max_batch_size must be positive")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be positive")
        if self.answers_path is not None and not self.answers:
            loaded = json.loads(Path(self.answers_path).read_text(encoding="utf-8"))
            object.__setattr__(self, "answers", loaded)

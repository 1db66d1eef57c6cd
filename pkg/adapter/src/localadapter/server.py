"""Standalone entry point: `local-adapter --mode mock --port 8091`."""

import argparse
from pathlib import Path

import uvicorn

from .app import create_app
from .config import AdapterConfig


def build_config(argv=None) -> AdapterConfig:
    parser = argparse.ArgumentParser(description="Serve chat + embeddings contracts locally.")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8091)
    parser.add_argument("--mode", choices=["mock", "hf"], default="mock")
    parser.add_argument("--chat-model", default=None, help="model id (hf mode: local weights path/name)")
    parser.add_argument("--embedding-model", default=None)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-batch-size", type=int, default=128)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--answers", type=Path, default=None, help="mock answers JSON {instance_id: {role: text}}")
    args = parser.parse_args(argv)

    kwargs = dict(
        host=args.host,
        port=args.port,
        mode=args.mode,
        device=args.device,
        max_batch_size=args.max_batch_size,
        seed=args.seed,
        answers_path=args.answers,
    )
    if args.chat_model:
        kwargs["chat_model_id"] = args.chat_model
    if args.embedding_model:
        kwargs["embedding_model_id"] = args.embedding_model
    return AdapterConfig(**kwargs)


def main(argv=None) -> int:
    config = build_config(argv)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Local adapter: offline chat-completions and embeddings endpoints."""

__version__ = "0.1.0"

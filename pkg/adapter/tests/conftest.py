import socket
import threading
import time

import pytest
import requests
import uvicorn

from localadapter.app import create_app
from localadapter.config import AdapterConfig

from support import DEMO_ANSWERS


class LiveServer:
    """uvicorn on an ephemeral port, in a daemon thread."""

    def __init__(self, config: AdapterConfig):
        self.config = config
        sock = socket.socket()
        sock.bind((config.host, 0))
        self.port = sock.getsockname()[1]
        sock.close()
        app = create_app(config)
        self._server = uvicorn.Server(
            uvicorn.Config(app, host=config.host, port=self.port, log_level="error")
        )
        self._thread = threading.Thread(target=self._server.run, daemon=True)

    @property
    def base_url(self) -> str:
        return f"http://{self.config.host}:{self.port}"

    def start(self):
        self._thread.start()
        deadline = time.monotonic() + 10
        while time.monotonic() < deadline:
            try:
                requests.get(self.base_url + "/v1/models", timeout=1)
                return self
            except requests.ConnectionError:
                time.sleep(0.05)
        raise RuntimeError("adapter did not come up in time")

    def stop(self):
        self._server.should_exit = True
        self._thread.join(timeout=10)


@pytest.fixture(scope="session")
def live_adapter():
    config = AdapterConfig(answers_path=DEMO_ANSWERS, max_batch_size=32)
    server = LiveServer(config).start()
    yield server
    server.stop()


@pytest.fixture(scope="session")
def chat_url(live_adapter):
    return live_adapter.base_url + "/v1/chat/completions"


@pytest.fixture(scope="session")
def embeddings_url(live_adapter):
    return live_adapter.base_url + "/v1/embeddings"

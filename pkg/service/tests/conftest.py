from __future__ import annotations

import threading

import pytest

from icll_service.app import make_server
from icll_service.config import ServiceConfig


@pytest.fixture()
def service_factory():
    servers = []

    def start(**overrides) -> str:
        config = ServiceConfig(**{"lm_model": "bigram:42", "embedding_model": "hash:16", **overrides})
        server = make_server(config)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        servers.append(server)
        host, port = server.server_address[:2]
        return f"http://{host}:{port}"

    yield start
    for server in servers:
        server.shutdown()


@pytest.fixture()
def service(service_factory) -> str:
    return service_factory()

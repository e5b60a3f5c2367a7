"""HTTP layer: JSON in, JSON out, deterministic bodies.

Endpoints:
  GET  /healthz      -> {"status": "ok"}
  POST /v1/logprobs  {context, continuation, model?} -> {tokens, logprobs}
  POST /v1/embed     {text} | {audio_b64}            -> {embedding, dim}
  POST /v1/generate  {prompt, max_tokens?}           -> {text}
  POST /v1/tokenize  {text}                          -> {tokens, count}

Errors are {"error": {"code", "message"}} with 4xx/5xx. A bounded worker
pool guards the model; requests beyond it get 429. Responses are serialized
with sorted keys so identical requests yield byte-identical bodies.

The `model` field on /v1/logprobs is accepted and ignored: one process
serves one configured model, and identifiers live in config, not the API.
"""

from __future__ import annotations

import base64
import binascii
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .backends import make_embedder, make_lm, pieces
from .config import ServiceConfig


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class ServiceApp:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.lm = make_lm(config.lm_model)
        self.embedder = make_embedder(config.embedding_model)
        self._slots = threading.Semaphore(config.max_batch_size)

    # -- request handling ---------------------------------------------------

    def handle(self, method: str, path: str, body: dict) -> tuple[int, dict]:
        if method == "GET" and path == "/healthz":
            return 200, {"status": "ok"}
        if method != "POST":
            raise ApiError(405, "method_not_allowed", f"{method} not supported")
        if not self._slots.acquire(blocking=False):
            raise ApiError(429, "saturated", "worker pool exhausted, retry later")
        try:
            if path == "/v1/logprobs":
                return 200, self._logprobs(body)
            if path == "/v1/embed":
                return 200, self._embed(body)
            if path == "/v1/generate":
                return 200, self._generate(body)
            if path == "/v1/tokenize":
                return 200, self._tokenize(body)
            raise ApiError(404, "not_found", f"no such endpoint {path}")
        finally:
            self._slots.release()

    def _require_lm(self):
        if self.lm is None:
            raise ApiError(503, "model_not_loaded", "no LM model configured")
        return self.lm

    def _check_budget(self, n_tokens: int) -> None:
        budget = self.config.max_context_tokens
        if n_tokens > budget:
            raise ApiError(
                413,
                "context_overflow",
                f"required {n_tokens} tokens, available {budget}",
            )

    def _logprobs(self, body: dict) -> dict:
        context = body.get("context")
        continuation = body.get("continuation")
        if not isinstance(context, str) or not isinstance(continuation, str):
            raise ApiError(400, "bad_request", "context and continuation must be strings")
        if not continuation:
            raise ApiError(400, "bad_request", "continuation must be non-empty")
        lm = self._require_lm()
        self._check_budget(len(pieces(context)) + len(pieces(continuation)))
        tokens, logprobs = lm.logprobs(context, continuation)
        return {"tokens": tokens, "logprobs": logprobs}

    def _embed(self, body: dict) -> dict:
        text = body.get("text")
        audio_b64 = body.get("audio_b64")
        if (text is None) == (audio_b64 is None):
            raise ApiError(400, "bad_request", "provide exactly one of text or audio_b64")
        if self.embedder is None:
            raise ApiError(503, "model_not_loaded", "no embedding model configured")
        if text is not None:
            if not isinstance(text, str) or not text:
                raise ApiError(400, "bad_request", "text must be a non-empty string")
            vec = self.embedder.embed_text(text)
        else:
            try:
                data = base64.b64decode(audio_b64, validate=True)
            except (binascii.Error, TypeError) as e:
                raise ApiError(400, "bad_request", f"invalid base64 audio: {e}") from e
            if not data:
                raise ApiError(400, "bad_request", "audio payload is empty")
            vec = self.embedder.embed_audio(data)
        return {"embedding": vec, "dim": len(vec)}

    def _generate(self, body: dict) -> dict:
        prompt = body.get("prompt")
        if not isinstance(prompt, str) or not prompt:
            raise ApiError(400, "bad_request", "prompt must be a non-empty string")
        max_tokens = body.get("max_tokens", 8)
        if not isinstance(max_tokens, int) or max_tokens < 1:
            raise ApiError(400, "bad_request", "max_tokens must be a positive integer")
        lm = self._require_lm()
        self._check_budget(len(pieces(prompt)))
        return {"text": lm.generate(prompt, max_tokens)}

    def _tokenize(self, body: dict) -> dict:
        text = body.get("text")
        if not isinstance(text, str):
            raise ApiError(400, "bad_request", "text field missing")
        toks = pieces(text)
        return {"tokens": toks, "count": len(toks)}


class _Handler(BaseHTTPRequestHandler):
    app: ServiceApp  # set by make_server

    def _reply(self, status: int, obj: dict) -> None:
        data = json.dumps(obj, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _dispatch(self, method: str) -> None:
        try:
            body = {}
            length = int(self.headers.get("Content-Length") or 0)
            if length:
                try:
                    body = json.loads(self.rfile.read(length).decode("utf-8"))
                except (json.JSONDecodeError, UnicodeDecodeError) as e:
                    raise ApiError(400, "bad_request", f"invalid JSON body: {e}") from e
                if not isinstance(body, dict):
                    raise ApiError(400, "bad_request", "body must be a JSON object")
            status, obj = self.app.handle(method, self.path, body)
            self._reply(status, obj)
        except ApiError as e:
            self._reply(e.status, {"error": {"code": e.code, "message": e.message}})
        except Exception as e:  # defensive: never leak a stack trace as HTML
            self._reply(500, {"error": {"code": "internal", "message": str(e)}})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def log_message(self, *args):
        pass


def make_server(config: ServiceConfig, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"app": ServiceApp(config)})
    return ThreadingHTTPServer((host, port), handler)

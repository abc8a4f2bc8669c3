"""Minimal HTTP translation service over an immutable checkpoint.

One process, one checkpoint. Requests decode concurrently against shared
read-only parameters; a bounded semaphore caps the number of in-flight
decodes while excess requests queue. There is no batching across requests
and no hot swap: restart the process to change models.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .checkpoint import Checkpoint
from .errors import ConfigError, InputError
from .langs import require_registered
from .model import translate_batch
from .subword import SubwordModel

log = logging.getLogger(__name__)

MAX_BODY_BYTES = 1 << 20
DEFAULT_WORKERS = 4


class TranslationService:
    """Shared state behind the HTTP handlers.

    Constructed empty (not ready) so the server can bind and answer health
    probes while the checkpoint loads; ``load`` flips it to ready.
    """

    def __init__(self, workers: int = DEFAULT_WORKERS, max_out: int = 64):
        if workers < 1:
            raise ConfigError(f"workers must be positive, got {workers}")
        self._slots = threading.BoundedSemaphore(workers)
        self.max_out = max_out
        self.ckpt: Checkpoint | None = None
        self.model: SubwordModel | None = None

    @property
    def ready(self) -> bool:
        return self.ckpt is not None and self.model is not None

    def load(self, ckpt: Checkpoint, model: SubwordModel) -> None:
        if ckpt.vocab_hash and ckpt.vocab_hash != model.vocab_hash:
            raise ConfigError("vocabulary hash mismatch between checkpoint and subword model")
        self.model = model
        self.ckpt = ckpt

    def translate(self, text: str, src: str, tgt: str) -> dict:
        require_registered(src)
        require_registered(tgt)
        with self._slots:
            hyp = translate_batch(
                self.ckpt.params, self.ckpt.mconfig, self.model, [text], tgt,
                max_out=self.max_out,
            )[0]
        return {
            "translation": hyp,
            "direction": {"src": src, "tgt": tgt},
            "model_step": self.ckpt.step,
        }


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt: str, *args) -> None:
        log.debug("%s %s", self.address_string(), fmt % args)

    def _reply(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        service = self.server.service
        if self.path != "/health":
            self._reply(404, {"error": f"no such endpoint {self.path!r}"})
        elif service.ready:
            self._reply(200, {"status": "ready", "model_step": service.ckpt.step})
        else:
            self._reply(503, {"status": "loading"})

    def do_POST(self) -> None:
        service = self.server.service
        if self.path != "/translate":
            self._reply(404, {"error": f"no such endpoint {self.path!r}"})
            return
        if not service.ready:
            self._reply(503, {"error": "model is still loading"})
            return
        try:
            length = int(self.headers.get("Content-Length") or 0)
        except ValueError:
            self._reply(400, {"error": "bad Content-Length"})
            return
        if length > MAX_BODY_BYTES:
            self._reply(413, {"error": f"body exceeds {MAX_BODY_BYTES} bytes"})
            return
        try:
            payload = json.loads(self.rfile.read(length).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._reply(400, {"error": "body must be a UTF-8 JSON object"})
            return
        if not isinstance(payload, dict):
            self._reply(400, {"error": "body must be a JSON object"})
            return
        missing = [key for key in ("text", "src", "tgt") if key not in payload]
        if missing:
            self._reply(400, {"error": f"missing fields: {', '.join(missing)}"})
            return
        if not all(isinstance(payload[key], str) for key in ("text", "src", "tgt")):
            self._reply(400, {"error": "text, src, and tgt must be strings"})
            return
        try:
            result = service.translate(payload["text"], payload["src"], payload["tgt"])
        except (InputError, ConfigError) as exc:
            self._reply(400, {"error": str(exc)})
            return
        self._reply(200, result)


class TranslationServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], service: TranslationService):
        super().__init__(address, _Handler)
        self.service = service


def make_server(
    service: TranslationService, host: str = "127.0.0.1", port: int = 8080
) -> TranslationServer:
    """Bind the service; ``port`` 0 picks a free port (see server_address)."""
    return TranslationServer((host, port), service)

"""Threaded stand-in for a chat-completion endpoint, used by tests and offline demos."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable


class _QuietServer(ThreadingHTTPServer):
    daemon_threads = True

    def handle_error(self, request, client_address):
        pass  # clients that time out leave broken pipes behind; nothing to report


class MockChatServer:
    """Serves scripted replies on ``/v1/chat/completions`` and records every request body.

    ``script`` is either a list of reply strings consumed in order (the last one
    repeats) or a callable mapping the request body to a reply string. A reply
    may also be an ``(status, text)`` tuple to force an HTTP error status.
    """

    def __init__(self, script: list | Callable[[dict], object], delay: float = 0.0):
        self.script = script
        self.delay = delay
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def _next_reply(self, body: dict):
        with self._lock:
            self.requests.append(body)
            if callable(self.script):
                return self.script(body)
            idx = min(len(self.requests) - 1, len(self.script) - 1)
            return self.script[idx]

    def start(self) -> "MockChatServer":
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (http.server naming)
                length = int(self.headers.get("Content-Length", 0))
                try:
                    body = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError:
                    self._send(400, {"error": "bad json"})
                    return
                if not self.path.rstrip("/").endswith("/chat/completions"):
                    self._send(404, {"error": "not found"})
                    return
                reply = server._next_reply(body)
                if server.delay:
                    time.sleep(server.delay)
                status = 200
                if isinstance(reply, tuple):
                    status, reply = reply
                if status != 200:
                    self._send(status, {"error": reply})
                    return
                self._send(200, {
                    "id": f"mock-{len(server.requests)}",
                    "object": "chat.completion",
                    "model": body.get("model", "mock"),
                    "choices": [{"index": 0, "finish_reason": "stop",
                                 "message": {"role": "assistant", "content": reply}}],
                })

            def _send(self, status, payload):
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self._httpd = _QuietServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "MockChatServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

"""Loopback HTTP server exposing the documented wire contract, backed by the
reference backends. Used by the conformance suite and connector tests; fault
injection knobs cover delay, abort, and bad-response cases."""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ragbench.pipeline.model import IndexSpec
from ragbench.refbackends.embedder import HashEmbedder, HashEmbedderConfig
from ragbench.refbackends.generator import TemplateGenerator
from ragbench.refbackends.stores import make_store
from ragbench.errors import DuplicateId, UnknownFileId


@dataclass
class LoopbackBehavior:
    first_token_delay_ms: float = 0.0
    inter_token_delay_ms: float = 0.0
    abort_after_tokens: int | None = None
    embed_drop_one: bool = False  # respond with one embedding too few
    metrics_text: str = "ttft_ms 42.0\ntpot_ms 11.0\nkv_cache_utilization 0.37\n"
    fail_next: int = 0            # respond 500 to the next N requests


class LoopbackServer:
    """Threaded loopback instance of the reference embedder/generator/store."""

    def __init__(self, embedder_config: HashEmbedderConfig | None = None):
        self.embedder = HashEmbedder(embedder_config or HashEmbedderConfig())
        self.generator = TemplateGenerator()
        self.behavior = LoopbackBehavior()
        self.store = None
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # silence request logging
                pass

            def _json_body(self) -> dict:
                length = int(self.headers.get("Content-Length", 0))
                if not length:
                    return {}
                return json.loads(self.rfile.read(length))

            def _reply(self, payload: dict, status: int = 200) -> None:
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/metrics":
                    body = server.behavior.metrics_text.encode("utf-8")
                    self.send_response(200)
                    self.send_header("Content-Type", "text/plain")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                else:
                    self._reply({"error": "not_found"}, status=404)

            def do_POST(self):
                if server.behavior.fail_next > 0:
                    server.behavior.fail_next -= 1
                    self._reply({"error": "injected_failure"}, status=500)
                    return
                try:
                    body = self._json_body()
                except json.JSONDecodeError:
                    self._reply({"error": "bad_json"}, status=400)
                    return
                if self.path == "/v1/embeddings":
                    self._handle_embeddings(body)
                elif self.path == "/v1/completions":
                    self._handle_completions(body)
                elif self.path.startswith("/v1/store/"):
                    self._handle_store(self.path.rsplit("/", 1)[1], body)
                else:
                    self._reply({"error": "not_found"}, status=404)

            def _handle_embeddings(self, body: dict) -> None:
                texts = body.get("input", [])
                matrix = server.embedder.embed(list(texts))
                rows = [
                    {"index": i, "embedding": [float(x) for x in vec]}
                    for i, vec in enumerate(matrix)
                ]
                if server.behavior.embed_drop_one and rows:
                    rows = rows[:-1]
                self._reply({"data": rows})

            def _handle_completions(self, body: dict) -> None:
                result = server.generator.generate(body.get("prompt", ""), body.get("max_tokens"))
                tokens = result.text.split() or [result.text]
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Connection", "close")
                self.end_headers()
                behavior = server.behavior
                if behavior.first_token_delay_ms > 0:
                    time.sleep(behavior.first_token_delay_ms / 1000.0)
                for i, token in enumerate(tokens):
                    if behavior.abort_after_tokens is not None and i >= behavior.abort_after_tokens:
                        self.wfile.flush()
                        self.connection.close()  # simulate mid-stream disconnect
                        return
                    if i and behavior.inter_token_delay_ms > 0:
                        time.sleep(behavior.inter_token_delay_ms / 1000.0)
                    self.wfile.write(f"data: {json.dumps({'text': token})}\n\n".encode())
                    self.wfile.flush()
                self.wfile.write(b"data: [DONE]\n\n")
                self.wfile.flush()

            def _handle_store(self, op: str, body: dict) -> None:
                with server._lock:
                    try:
                        self._reply(server._store_op(op, body))
                    except UnknownFileId:
                        self._reply({"error": "unknown_file_id"})
                    except DuplicateId:
                        self._reply({"error": "duplicate_id"})
                    except Exception as exc:
                        self._reply({"error": f"{type(exc).__name__}: {exc}"}, status=500)

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    def _store_op(self, op: str, body: dict) -> dict:
        if op == "create_collection":
            spec = IndexSpec(
                kind=body.get("kind", "Flat"),
                nlist=body.get("nlist", 16),
                nprobe=body.get("nprobe", 4),
                metric=body.get("metric", "cosine"),
                buffer_threshold=body.get("buffer_threshold", 1024),
            )
            self.store = make_store(spec, int(body["dim"]), seed=body.get("seed", 0))
            return {"ok": True}
        if self.store is None:
            return {"error": "no_collection"}
        if op == "insert":
            outcomes = []
            for item in body.get("items", []):
                out = self.store.insert(item["id"], item["vector"])
                outcomes.append({"rebuilt": out.rebuilt, "rebuild_duration_s": out.rebuild_duration_s})
            return {"outcomes": outcomes}
        if op == "delete":
            for cid in body.get("ids", []):
                self.store.delete(cid)
            return {"ok": True}
        if op == "search":
            results = self.store.search(body["vector"], int(body["k"]), body.get("nprobe"))
            return {"results": [[cid, score] for cid, score in results]}
        if op == "build_index":
            return {"seconds": self.store.build_index()}
        if op == "stats":
            return self.store.stats()
        return {"error": f"unknown_op:{op}"}

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> str:
        self._thread.start()
        return self.base_url

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> "LoopbackServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()

"""HTTP clients for embeddings, streaming generation, remote stores, and
serving-metrics scrapes.

Retries with exponential backoff apply only to idempotent calls (embed,
search, scrape); generation is never retried. Each endpoint owns an in-flight
semaphore bounding concurrent requests.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field

import numpy as np
import requests

from ragbench.errors import (
    DimensionMismatch,
    DuplicateId,
    RemoteError,
    RemoteTimeout,
    ScrapeParseError,
    StreamAborted,
    UnknownFileId,
    Unsupported,
)
from ragbench.refbackends.generator import GenerationResult
from ragbench.refbackends.stores import InsertOutcome

STORE_OPS = ("create_collection", "insert", "delete", "search", "build_index", "stats")


@dataclass
class EndpointConfig:
    base_url: str
    timeout_ms: int = 10_000
    max_retries: int = 2
    backoff_base_ms: int = 50
    max_in_flight: int = 8
    auth_token: str | None = None

    def validate(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.timeout_ms < 1:
            raise ValueError("timeout_ms must be >= 1")


class _HttpClient:
    def __init__(self, endpoint: EndpointConfig):
        endpoint.validate()
        self.endpoint = endpoint
        self._session = requests.Session()
        self._slots = threading.BoundedSemaphore(endpoint.max_in_flight)

    @property
    def _timeout_s(self) -> float:
        return self.endpoint.timeout_ms / 1000.0

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.endpoint.auth_token:
            headers["Authorization"] = f"Bearer {self.endpoint.auth_token}"
        return headers

    def _post_idempotent(self, path: str, payload: dict) -> dict:
        """POST with retry/backoff for transient failures (idempotent ops only)."""
        url = self.endpoint.base_url.rstrip("/") + path
        last_exc: Exception | None = None
        for attempt in range(self.endpoint.max_retries + 1):
            if attempt:
                time.sleep(self.endpoint.backoff_base_ms * (2 ** (attempt - 1)) / 1000.0)
            with self._slots:
                try:
                    resp = self._session.post(
                        url, json=payload, headers=self._headers(), timeout=self._timeout_s
                    )
                except requests.Timeout as exc:
                    last_exc = RemoteTimeout(f"POST {url} timed out")
                    continue
                except requests.ConnectionError as exc:
                    last_exc = RemoteError(0, f"connection failed: {exc}")
                    continue
            if resp.status_code >= 500:
                last_exc = RemoteError(resp.status_code, resp.text)
                continue
            if resp.status_code != 200:
                raise RemoteError(resp.status_code, resp.text)
            return resp.json()
        raise last_exc if last_exc is not None else RemoteError(0, "no attempts made")


class RemoteEmbedder(_HttpClient):
    """Remote embeddings endpoint behind the in-process embedder interface."""

    backend_name = "remote"

    def __init__(self, endpoint: EndpointConfig, dim: int, model: str = "default"):
        super().__init__(endpoint)
        self.dim = dim
        self.model = model

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim), dtype=np.float64)
        data = self._post_idempotent("/v1/embeddings", {"model": self.model, "input": list(texts)})
        rows = data.get("data")
        if not isinstance(rows, list) or len(rows) != len(texts):
            raise RemoteError(200, f"expected {len(texts)} embeddings, got {len(rows or [])}")
        rows = sorted(rows, key=lambda r: r.get("index", 0))
        matrix = np.asarray([r["embedding"] for r in rows], dtype=np.float64)
        if matrix.shape != (len(texts), self.dim):
            raise DimensionMismatch(f"expected shape {(len(texts), self.dim)}, got {matrix.shape}")
        return matrix


def embed_remote(texts: list[str], endpoint: EndpointConfig, dim: int) -> np.ndarray:
    return RemoteEmbedder(endpoint, dim).embed(texts)


class RemoteGenerator(_HttpClient):
    """Token-streaming generation client; TTFT/TPOT measured from the stream."""

    backend_name = "remote"

    def __init__(self, endpoint: EndpointConfig, model: str = "default"):
        super().__init__(endpoint)
        self.model = model

    def generate(self, prompt: str, max_tokens: int | None = None) -> GenerationResult:
        url = self.endpoint.base_url.rstrip("/") + "/v1/completions"
        payload = {"model": self.model, "prompt": prompt, "stream": True}
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens
        tokens: list[str] = []
        token_times: list[float] = []
        done = False
        with self._slots:
            t_send = time.perf_counter()
            try:
                resp = self._session.post(
                    url, json=payload, headers=self._headers(),
                    timeout=self._timeout_s, stream=True,
                )
            except requests.Timeout as exc:
                raise RemoteTimeout(f"POST {url} timed out") from exc
            except requests.ConnectionError as exc:
                raise RemoteError(0, f"connection failed: {exc}") from exc
            if resp.status_code != 200:
                raise RemoteError(resp.status_code, resp.text)
            try:
                for raw in resp.iter_lines(chunk_size=1):
                    if not raw:
                        continue
                    line = raw.decode("utf-8", errors="replace")
                    if not line.startswith("data:"):
                        continue
                    body = line[5:].strip()
                    if body == "[DONE]":
                        done = True
                        break
                    try:
                        delta = json.loads(body)
                    except json.JSONDecodeError:
                        continue
                    tokens.append(delta.get("text", ""))
                    token_times.append(time.perf_counter())
            except (requests.exceptions.ChunkedEncodingError, requests.ConnectionError,
                    requests.Timeout) as exc:
                raise StreamAborted(" ".join(tokens), str(exc)) from exc
        text = " ".join(tokens)
        if not done:
            raise StreamAborted(text, "stream ended before [DONE]")
        if not token_times:
            raise StreamAborted("", "no tokens received")
        ttft_ms = (token_times[0] - t_send) * 1000.0
        tpot_ms = None
        if len(token_times) > 1:
            tpot_ms = (token_times[-1] - token_times[0]) / (len(token_times) - 1) * 1000.0
        return GenerationResult(text=text, ttft_ms=ttft_ms, tpot_ms=tpot_ms)


def generate_remote(prompt: str, endpoint: EndpointConfig, max_tokens: int | None = None) -> GenerationResult:
    return RemoteGenerator(endpoint).generate(prompt, max_tokens)


class RemoteStoreClient(_HttpClient):
    """Thin adapter mapping the standard store interface to the wire contract."""

    backend_name = "remote"

    def __init__(self, endpoint: EndpointConfig, dim: int, metric: str = "cosine",
                 index: dict | None = None, capabilities: tuple = STORE_OPS):
        super().__init__(endpoint)
        self.dim = dim
        self.metric = metric
        self.capabilities = tuple(capabilities)
        self._count = 0
        spec = {"dim": dim, "metric": metric}
        spec.update(index or {})
        self._call("create_collection", spec)

    def _call(self, op: str, payload: dict) -> dict:
        if op not in self.capabilities:
            raise Unsupported(op, backend="remote")
        data = self._post_idempotent(f"/v1/store/{op}", payload)
        if isinstance(data, dict) and data.get("error"):
            self._raise_normalized(data["error"])
        return data

    @staticmethod
    def _raise_normalized(error: str):
        if error == "unknown_file_id":
            raise UnknownFileId("remote store: unknown id")
        if error == "duplicate_id":
            raise DuplicateId("remote store: duplicate id")
        raise RemoteError(200, error)

    def insert(self, chunk_id: str, vector: np.ndarray) -> InsertOutcome:
        data = self._call("insert", {"items": [{"id": chunk_id, "vector": list(map(float, vector))}]})
        outcome = (data.get("outcomes") or [{}])[0]
        return InsertOutcome(
            rebuilt=bool(outcome.get("rebuilt", False)),
            rebuild_duration_s=float(outcome.get("rebuild_duration_s", 0.0)),
        )

    def delete(self, chunk_id: str) -> None:
        self._call("delete", {"ids": [chunk_id]})

    def search(self, vector: np.ndarray, k: int, nprobe: int | None = None):
        if k < 1:
            raise ValueError("k must be >= 1")  # rejected locally, no network call
        payload = {"vector": list(map(float, vector)), "k": k}
        if nprobe is not None:
            payload["nprobe"] = nprobe
        data = self._call("search", payload)
        return [(str(cid), float(score)) for cid, score in data.get("results", [])]

    def build_index(self) -> float:
        data = self._call("build_index", {})
        return float(data.get("seconds", 0.0))

    def stats(self) -> dict:
        return self._call("stats", {})

    @property
    def count(self) -> int:
        return int(self.stats().get("count", 0))


@dataclass(frozen=True)
class ServingMetricsSnapshot:
    ttft_ms: float | None
    tpot_ms: float | None
    kv_cache_utilization: float | None
    timestamp: float = field(default_factory=time.time)

    def __post_init__(self):
        kv = self.kv_cache_utilization
        if kv is not None and not (0.0 <= kv <= 1.0):
            raise ValueError(f"kv_cache_utilization out of [0,1]: {kv}")


# Exposition names -> (snapshot field, scale). Seconds-based names from common
# serving engines are converted to milliseconds.
_METRIC_NAME_MAP = {
    "ttft_ms": ("ttft_ms", 1.0),
    "tpot_ms": ("tpot_ms", 1.0),
    "kv_cache_utilization": ("kv_cache_utilization", 1.0),
    "vllm:time_to_first_token_seconds_mean": ("ttft_ms", 1000.0),
    "vllm:time_per_output_token_seconds_mean": ("tpot_ms", 1000.0),
    "vllm:gpu_cache_usage_perc": ("kv_cache_utilization", 1.0),
}


def parse_metrics_exposition(text: str) -> dict[str, float]:
    """Parse 'name value' lines; '#' comments and blanks are skipped."""
    values: dict[str, float] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise ScrapeParseError(line_no, line)
        try:
            values[parts[0]] = float(parts[1])
        except ValueError as exc:
            raise ScrapeParseError(line_no, line) from exc
    return values


def scrape_metrics(endpoint: EndpointConfig) -> ServingMetricsSnapshot:
    """Fetch and parse the serving-metrics exposition; missing metrics yield
    absent fields, not errors."""
    endpoint.validate()
    url = endpoint.base_url.rstrip("/") + "/metrics"
    try:
        resp = requests.get(url, timeout=endpoint.timeout_ms / 1000.0)
    except requests.Timeout as exc:
        raise RemoteTimeout(f"GET {url} timed out") from exc
    if resp.status_code != 200:
        raise RemoteError(resp.status_code, resp.text)
    values = parse_metrics_exposition(resp.text)
    fields: dict[str, float | None] = {"ttft_ms": None, "tpot_ms": None, "kv_cache_utilization": None}
    for name, value in values.items():
        mapped = _METRIC_NAME_MAP.get(name)
        if mapped:
            fields[mapped[0]] = value * mapped[1]
    return ServingMetricsSnapshot(**fields)

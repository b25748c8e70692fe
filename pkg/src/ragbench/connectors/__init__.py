"""Clients for external services behind the reference-backend interfaces.

Wire contract (JSON over HTTP, used by all clients and the loopback server):

    POST /v1/embeddings   {"model", "input": [str...]}
        -> {"data": [{"index": int, "embedding": [float...]}...]}
    POST /v1/completions  {"model", "prompt", "max_tokens", "stream": true}
        -> event stream: "data: {\"text\": tok}" per token, then "data: [DONE]"
    POST /v1/store/<op>   op in create_collection | insert | delete | search
                          | build_index | stats
    GET  /metrics         text exposition, one "name value" pair per line
"""

from ragbench.connectors.clients import (
    EndpointConfig,
    RemoteEmbedder,
    RemoteGenerator,
    RemoteStoreClient,
    ServingMetricsSnapshot,
    embed_remote,
    generate_remote,
    parse_metrics_exposition,
    scrape_metrics,
)
from ragbench.connectors.conformance import run_store_conformance
from ragbench.connectors.loopback import LoopbackServer
from ragbench.connectors.scrape import ServingMetricsProbe

__all__ = [
    "EndpointConfig",
    "LoopbackServer",
    "RemoteEmbedder",
    "RemoteGenerator",
    "RemoteStoreClient",
    "ServingMetricsProbe",
    "ServingMetricsSnapshot",
    "embed_remote",
    "generate_remote",
    "parse_metrics_exposition",
    "run_store_conformance",
    "scrape_metrics",
]

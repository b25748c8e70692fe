"""Monitor probe that appends serving-metrics snapshots to the trace stream."""

from __future__ import annotations

from ragbench.connectors.clients import EndpointConfig, scrape_metrics
from ragbench.monitor.probes import Probe


class ServingMetricsProbe(Probe):
    """Scrapes a serving endpoint's /metrics exposition each monitor cycle."""

    def __init__(self, endpoint: EndpointConfig):
        self.endpoint = endpoint
        self.name = "serving"

    def metric_names(self):
        return ["serving.ttft_ms", "serving.tpot_ms", "serving.kv_cache_utilization"]

    def read(self) -> dict:
        snap = scrape_metrics(self.endpoint)
        return {
            "ttft_ms": snap.ttft_ms,
            "tpot_ms": snap.tpot_ms,
            "kv_cache_utilization": snap.kv_cache_utilization,
        }

    def derive(self, prev, raw):
        samples = []
        for key in ("ttft_ms", "tpot_ms", "kv_cache_utilization"):
            if raw.get(key) is not None:
                samples.append((f"serving.{key}", float(raw[key])))
        return samples

"""Decoupled resource-monitoring daemon with bounded trace buffers."""

from ragbench.monitor.daemon import (
    FlushReport,
    Monitor,
    MonitorConfig,
    adapt_interval,
    start_monitor,
    stop_monitor,
)
from ragbench.monitor.ring import RingBuffer, WriteOutcome
from ragbench.monitor.tracefile import (
    RECORD_SIZE,
    TraceData,
    TraceWriter,
    pack_record,
    parse_trace,
)

__all__ = [
    "FlushReport",
    "Monitor",
    "MonitorConfig",
    "RECORD_SIZE",
    "RingBuffer",
    "TraceData",
    "TraceWriter",
    "WriteOutcome",
    "adapt_interval",
    "pack_record",
    "parse_trace",
    "start_monitor",
    "stop_monitor",
]

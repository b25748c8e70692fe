"""Sampling daemon: probe groups feed per-metric ring buffers; a single drain
task owns the trace file. Runs at reduced scheduling priority and shares no
state with the pipeline it observes."""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from ragbench.errors import (
    AllProbesUnavailable,
    OutputUnwritable,
    SecondStartRejected,
)
from ragbench.monitor.probes import Probe, ProbeReadError, build_probes
from ragbench.monitor.ring import RingBuffer
from ragbench.monitor.tracefile import RECORD_SIZE, TraceWriter, pack_record

LOW_STREAK_CYCLES = 16
MAX_INTERVAL_FACTOR = 64
DRAIN_PERIOD_S = 0.5
MONITOR_NICE = 10

_active_outputs: dict[str, "Monitor"] = {}
_active_lock = threading.Lock()


@dataclass
class MonitorConfig:
    output_path: str | Path = "monitor.trace"
    interval_ms: int = 100
    per_metric_buffer_bytes: int = 2 * 1024 * 1024
    probes: tuple = ("system", "process")
    watched_pids: tuple = ()
    watched_cgroups: tuple = ()
    budget_fraction: float = 0.5
    annotation: str | None = None
    extra_probes: tuple = ()  # pre-built Probe instances (e.g. serving scrape)

    def validate(self) -> None:
        if self.interval_ms < 1:
            raise ValueError("interval_ms must be >= 1")
        if self.per_metric_buffer_bytes < 64 * 1024:
            raise ValueError("per_metric_buffer_bytes must be >= 64 KiB")
        if not (0.0 < self.budget_fraction <= 1.0):
            raise ValueError("budget_fraction must be in (0, 1]")


@dataclass
class FlushReport:
    samples_written: int
    samples_dropped: int
    trace_bytes: int
    per_metric: dict = field(default_factory=dict)
    probe_errors: dict = field(default_factory=dict)
    partial: bool = False


def adapt_interval(
    base_ms: float,
    current_ms: float,
    last_collection_ms: float,
    budget_fraction: float,
    low_streak: int,
) -> tuple[float, int]:
    """Adaptive sampling period.

    Doubles (capped at 64x the configured interval) when a collection cycle
    overruns the budget fraction; halves (floored at the configured interval)
    after 16 consecutive cycles below a quarter of the budget.
    Returns (new interval, new low streak).
    """
    if last_collection_ms > budget_fraction * current_ms:
        return (min(current_ms * 2.0, base_ms * MAX_INTERVAL_FACTOR), 0)
    if last_collection_ms < (budget_fraction / 4.0) * current_ms:
        low_streak += 1
        if low_streak >= LOW_STREAK_CYCLES and current_ms > base_ms:
            return (max(current_ms / 2.0, base_ms), 0)
        return (current_ms, low_streak)
    return (current_ms, 0)


class _ProbeGroup:
    def __init__(self, kind: str, probes: list[Probe], monitor: "Monitor"):
        self.kind = kind
        self.probes = probes
        self.monitor = monitor
        self.interval_metric = f"monitor.interval_ms.{kind}"
        self.thread = threading.Thread(
            target=self._loop, name=f"ragbench-monitor-{kind}", daemon=True
        )
        self.errors = 0

    def _loop(self) -> None:
        self.monitor._register_thread()
        try:
            os.setpriority(os.PRIO_PROCESS, threading.get_native_id(), MONITOR_NICE)
        except (OSError, AttributeError):
            pass
        cfg = self.monitor.config
        base_ms = float(cfg.interval_ms)
        interval_ms = base_ms
        low_streak = 0
        snapshots: dict[int, dict | None] = {i: None for i in range(len(self.probes))}
        stop = self.monitor._stop_event
        deadline = time.monotonic()
        while not stop.is_set():
            t0 = time.monotonic()
            for i, probe in enumerate(self.probes):
                try:
                    samples, snapshots[i] = probe.collect(snapshots[i])
                except ProbeReadError:
                    self.errors += 1
                    continue
                ts = time.monotonic_ns()
                for name, value in samples:
                    self.monitor._record(name, ts, value)
            collection_ms = (time.monotonic() - t0) * 1000.0
            new_interval, low_streak = adapt_interval(
                base_ms, interval_ms, collection_ms, cfg.budget_fraction, low_streak
            )
            if new_interval != interval_ms:
                interval_ms = new_interval
                self.monitor._record(self.interval_metric, time.monotonic_ns(), interval_ms)
            deadline += interval_ms / 1000.0
            now = time.monotonic()
            if deadline < now:  # overran; skip ahead rather than bursting
                deadline = now + interval_ms / 1000.0
            stop.wait(max(0.0, deadline - now))


class Monitor:
    """Handle for a running monitoring daemon; create via start_monitor()."""

    def __init__(self, config: MonitorConfig):
        config.validate()
        self.config = config
        self.unavailable: list[str] = []

        if not config.probes and not config.extra_probes:
            raise AllProbesUnavailable("no probes configured")
        by_kind: dict[str, list[Probe]] = {}
        for kind in config.probes:
            probes = build_probes([kind], list(config.watched_pids), list(config.watched_cgroups))
            ok = [p for p in probes if p.available()]
            self.unavailable.extend(p.name for p in probes if p not in ok)
            if ok:
                by_kind[kind] = ok
        extra = [p for p in config.extra_probes if p.available()]
        self.unavailable.extend(p.name for p in config.extra_probes if p not in extra)
        if extra:
            by_kind["extra"] = extra
        if not by_kind:
            raise AllProbesUnavailable(
                f"all configured probes unavailable: {self.config.probes}"
            )

        path = str(Path(config.output_path).resolve())
        with _active_lock:
            if path in _active_outputs:
                raise SecondStartRejected(f"monitor already writing to {path}")
            _active_outputs[path] = self
        self._path_key = path

        names: list[str] = []
        for probes in by_kind.values():
            for p in probes:
                names.extend(p.metric_names())
        names.extend(f"monitor.interval_ms.{kind}" for kind in by_kind)
        self._metric_ids = {name: i for i, name in enumerate(sorted(names))}
        self._rings = {
            mid: RingBuffer(config.per_metric_buffer_bytes, RECORD_SIZE)
            for mid in self._metric_ids.values()
        }

        try:
            self._writer = TraceWriter(
                config.output_path,
                {mid: name for name, mid in self._metric_ids.items()},
                epoch_ns=time.time_ns(),
                annotation=config.annotation,
            )
        except OSError as exc:
            with _active_lock:
                _active_outputs.pop(path, None)
            raise OutputUnwritable(f"cannot open {config.output_path}: {exc}") from exc

        self._stop_event = threading.Event()
        self._groups = [_ProbeGroup(kind, probes, self) for kind, probes in by_kind.items()]
        self._drain_thread = threading.Thread(
            target=self._drain_loop, name="ragbench-monitor-drain", daemon=True
        )
        self._report: FlushReport | None = None
        self._write_lock = threading.Lock()
        self._thread_tids: list[int] = []
        for g in self._groups:
            g.thread.start()
        self._drain_thread.start()

    def _register_thread(self) -> None:
        self._thread_tids.append(threading.get_native_id())

    def threads_cpu_seconds(self) -> float:
        """Total CPU time consumed so far by the monitor's own threads.

        On a saturated interpreter this bounds how much the monitor can have
        delayed the workload; read it while the threads are still alive.
        Prefers schedstat (ns resolution) over stat's 10ms ticks.
        """
        total = 0.0
        clk = os.sysconf("SC_CLK_TCK")
        for tid in list(self._thread_tids):
            try:
                with open(f"/proc/self/task/{tid}/schedstat") as fh:
                    total += int(fh.read().split()[0]) / 1e9
            except (OSError, ValueError, IndexError):
                try:
                    with open(f"/proc/self/task/{tid}/stat") as fh:
                        data = fh.read()
                    rest = data[data.rindex(")") + 2:].split()
                    total += (int(rest[11]) + int(rest[12])) / clk
                except (OSError, ValueError):
                    continue
        return total

    # -- sampling side -----------------------------------------------------

    def _record(self, name: str, ts_ns: int, value: float) -> None:
        mid = self._metric_ids.get(name)
        if mid is None:
            return
        self._rings[mid].write(pack_record(mid, ts_ns, value))

    def _drain_once(self) -> None:
        with self._write_lock:
            for ring in self._rings.values():
                data = ring.drain()
                if data:
                    self._writer.append(data)
            self._writer.flush()

    def _drain_loop(self) -> None:
        self._register_thread()
        try:
            os.setpriority(os.PRIO_PROCESS, threading.get_native_id(), MONITOR_NICE)
        except (OSError, AttributeError):
            pass
        while not self._stop_event.wait(DRAIN_PERIOD_S):
            self._drain_once()

    # -- lifecycle ----------------------------------------------------------

    def stop(self) -> FlushReport:
        """Flush everything and finalize the trace; idempotent."""
        if self._report is not None:
            return self._report
        self._stop_event.set()
        for g in self._groups:
            g.thread.join(timeout=10.0)
        self._drain_thread.join(timeout=10.0)
        self._drain_once()

        per_metric = {}
        total_written = total_dropped = 0
        ids_to_names = {mid: name for name, mid in self._metric_ids.items()}
        for mid, ring in self._rings.items():
            written = ring.drained
            per_metric[ids_to_names[mid]] = {
                "emitted": ring.emitted,
                "written": written,
                "dropped": ring.dropped,
            }
            total_written += written
            total_dropped += ring.dropped
        trace_bytes = self._writer.finalize(total_written, total_dropped)
        with _active_lock:
            _active_outputs.pop(self._path_key, None)
        self._report = FlushReport(
            samples_written=total_written,
            samples_dropped=total_dropped,
            trace_bytes=trace_bytes,
            per_metric=per_metric,
            probe_errors={g.kind: g.errors for g in self._groups},
        )
        return self._report

    def buffer_bytes(self) -> int:
        return sum(r.capacity for r in self._rings.values())

    @property
    def metric_count(self) -> int:
        return len(self._metric_ids)


def start_monitor(config: MonitorConfig) -> Monitor:
    return Monitor(config)


def stop_monitor(handle: Monitor) -> FlushReport:
    return handle.stop()

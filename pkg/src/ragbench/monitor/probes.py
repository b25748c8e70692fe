"""Resource probes reading /proc and cgroup files.

Each probe exposes `metric_names()` and `collect(prev)`, returning
(samples, raw snapshot). Counter-based metrics (jiffies, io bytes) become
rates against the previous snapshot; gauges are emitted every cycle; the
first cycle emits gauges only.
"""

from __future__ import annotations

import os
import time
from pathlib import Path

from ragbench.errors import ProbeUnavailable

Sample = tuple[str, float]

_CLK_TCK = os.sysconf("SC_CLK_TCK") if hasattr(os, "sysconf") else 100
_PAGE_SIZE = os.sysconf("SC_PAGE_SIZE") if hasattr(os, "sysconf") else 4096


class ProbeReadError(Exception):
    pass


class _ProcFile:
    """Cached fd over a procfs file; pread at offset 0 re-reads fresh content
    without the open/close syscall pair every sampling cycle."""

    def __init__(self, path: str, size: int = 8192):
        self.path = path
        self.size = size
        self._fd: int | None = None

    def read(self) -> str:
        if self._fd is None:
            self._fd = os.open(self.path, os.O_RDONLY)
        try:
            return os.pread(self._fd, self.size, 0).decode("ascii", errors="replace")
        except OSError:
            # stale fd (e.g. watched pid died and respawned): retry once fresh
            try:
                os.close(self._fd)
            except OSError:
                pass
            self._fd = os.open(self.path, os.O_RDONLY)
            return os.pread(self._fd, self.size, 0).decode("ascii", errors="replace")


class Probe:
    name = "probe"

    def metric_names(self) -> list[str]:
        raise NotImplementedError

    def read(self) -> dict:
        raise NotImplementedError

    def available(self) -> bool:
        try:
            self.read()
            return True
        except Exception:
            return False

    def collect(self, prev: dict | None) -> tuple[list[Sample], dict]:
        try:
            raw = self.read()
        except Exception as exc:
            raise ProbeReadError(f"{self.name}: {exc}") from exc
        raw["_ts"] = time.monotonic()
        return self.derive(prev, raw), raw

    def derive(self, prev: dict | None, raw: dict) -> list[Sample]:
        raise NotImplementedError


def _rate(prev: dict, raw: dict, key: str) -> float | None:
    dt = raw["_ts"] - prev["_ts"]
    if dt <= 0:
        return None
    return (raw[key] - prev[key]) / dt


class SystemCpuProbe(Probe):
    name = "sys.cpu"

    def __init__(self):
        self._file = _ProcFile("/proc/stat", 512)

    def metric_names(self):
        return ["sys.cpu.util_pct"]

    def read(self) -> dict:
        fields = self._file.read().split("\n", 1)[0].split()
        values = [int(v) for v in fields[1:]]
        idle = values[3] + (values[4] if len(values) > 4 else 0)
        total = sum(values)
        return {"busy": total - idle, "total": total}

    def derive(self, prev, raw):
        if prev is None:
            return []
        d_total = raw["total"] - prev["total"]
        if d_total <= 0:
            return []
        util = 100.0 * (raw["busy"] - prev["busy"]) / d_total
        return [("sys.cpu.util_pct", util)]


class SystemMemProbe(Probe):
    name = "sys.mem"

    def __init__(self):
        self._file = _ProcFile("/proc/meminfo", 1024)

    def metric_names(self):
        return ["sys.mem.used_bytes", "sys.mem.available_bytes"]

    def read(self) -> dict:
        info = {}
        for line in self._file.read().splitlines():
            key, _, rest = line.partition(":")
            if key in ("MemTotal", "MemAvailable"):
                info[key] = int(rest.split()[0]) * 1024
                if len(info) == 2:
                    break
        return {"total": info["MemTotal"], "available": info.get("MemAvailable", info["MemTotal"])}

    def derive(self, prev, raw):
        return [
            ("sys.mem.used_bytes", float(raw["total"] - raw["available"])),
            ("sys.mem.available_bytes", float(raw["available"])),
        ]


class SystemIoProbe(Probe):
    name = "sys.io"

    def __init__(self):
        self._file = _ProcFile("/proc/diskstats", 16384)

    def metric_names(self):
        return ["sys.io.read_bytes_s", "sys.io.write_bytes_s"]

    def read(self) -> dict:
        read_sectors = write_sectors = 0
        for line in self._file.read().splitlines():
            f = line.split()
            if len(f) < 10 or f[2].startswith(("loop", "ram")):
                continue
            read_sectors += int(f[5])
            write_sectors += int(f[9])
        return {"read_bytes": read_sectors * 512, "write_bytes": write_sectors * 512}

    def derive(self, prev, raw):
        if prev is None:
            return []
        samples = []
        for key, metric in (("read_bytes", "sys.io.read_bytes_s"), ("write_bytes", "sys.io.write_bytes_s")):
            rate = _rate(prev, raw, key)
            if rate is not None:
                samples.append((metric, rate))
        return samples


class ProcessCpuMemProbe(Probe):
    def __init__(self, pid: int):
        self.pid = pid
        self.name = f"proc.{pid}"
        self._file = _ProcFile(f"/proc/{pid}/stat", 1024)

    def metric_names(self):
        return [f"proc.{self.pid}.cpu_pct", f"proc.{self.pid}.rss_bytes"]

    def read(self) -> dict:
        data = self._file.read()
        # comm may contain spaces; fields resume after the closing paren
        rest = data[data.rindex(")") + 2:].split()
        utime, stime = int(rest[11]), int(rest[12])
        rss_pages = int(rest[21])
        return {"cpu_s": (utime + stime) / _CLK_TCK, "rss": rss_pages * _PAGE_SIZE}

    def derive(self, prev, raw):
        samples = [(f"proc.{self.pid}.rss_bytes", float(raw["rss"]))]
        if prev is not None:
            rate = _rate(prev, raw, "cpu_s")
            if rate is not None:
                samples.append((f"proc.{self.pid}.cpu_pct", 100.0 * rate))
        return samples


class ProcessIoProbe(Probe):
    def __init__(self, pid: int):
        self.pid = pid
        self.name = f"proc.{pid}.io"
        self._file = _ProcFile(f"/proc/{pid}/io", 512)

    def metric_names(self):
        return [f"proc.{self.pid}.io.read_bytes_s", f"proc.{self.pid}.io.write_bytes_s"]

    def read(self) -> dict:
        out = {}
        for line in self._file.read().splitlines():
            key, _, value = line.partition(":")
            if key in ("read_bytes", "write_bytes"):
                out[key] = int(value)
        return {"read_bytes": out.get("read_bytes", 0), "write_bytes": out.get("write_bytes", 0)}

    def derive(self, prev, raw):
        if prev is None:
            return []
        samples = []
        for key, metric in (
            ("read_bytes", f"proc.{self.pid}.io.read_bytes_s"),
            ("write_bytes", f"proc.{self.pid}.io.write_bytes_s"),
        ):
            rate = _rate(prev, raw, key)
            if rate is not None:
                samples.append((metric, rate))
        return samples


class CgroupProbe(Probe):
    """cgroup v2 layout (cpu.stat / memory.current) with v1 fallbacks."""

    def __init__(self, cgroup_path: str):
        self.path = Path(cgroup_path)
        self.tag = self.path.name or "root"
        self.name = f"cg.{self.tag}"

    def metric_names(self):
        return [f"cg.{self.tag}.cpu_pct", f"cg.{self.tag}.mem_bytes"]

    def read(self) -> dict:
        raw: dict = {}
        cpu_stat = self.path / "cpu.stat"
        if cpu_stat.exists():
            for line in cpu_stat.read_text().splitlines():
                key, _, value = line.partition(" ")
                if key == "usage_usec":
                    raw["cpu_s"] = int(value) / 1e6
        elif (self.path / "cpuacct.usage").exists():
            raw["cpu_s"] = int((self.path / "cpuacct.usage").read_text()) / 1e9
        mem = self.path / "memory.current"
        if mem.exists():
            raw["mem"] = int(mem.read_text())
        elif (self.path / "memory.usage_in_bytes").exists():
            raw["mem"] = int((self.path / "memory.usage_in_bytes").read_text())
        if not raw:
            raise ProbeUnavailable(f"no readable cgroup stats under {self.path}")
        return raw

    def derive(self, prev, raw):
        samples = []
        if "mem" in raw:
            samples.append((f"cg.{self.tag}.mem_bytes", float(raw["mem"])))
        if prev is not None and "cpu_s" in raw and "cpu_s" in prev:
            rate = _rate(prev, raw, "cpu_s")
            if rate is not None:
                samples.append((f"cg.{self.tag}.cpu_pct", 100.0 * rate))
        return samples


# Pluggable accelerator probes; nothing registered by default and absence is
# skipped silently.
_ACCELERATOR_FACTORIES: dict[str, type] = {}


def register_accelerator_probe(name: str, factory: type) -> None:
    _ACCELERATOR_FACTORIES[name] = factory


def accelerator_probes() -> list[Probe]:
    probes = []
    for factory in _ACCELERATOR_FACTORIES.values():
        try:
            probes.append(factory())
        except Exception:
            continue
    return probes


def build_probes(kinds: list[str], watched_pids: list[int], watched_cgroups: list[str]) -> list[Probe]:
    """Instantiate probes for the configured kinds; unknown kinds raise."""
    probes: list[Probe] = []
    for kind in kinds:
        if kind == "system":
            probes.extend([SystemCpuProbe(), SystemMemProbe(), SystemIoProbe()])
        elif kind == "process":
            pids = list(watched_pids) or [os.getpid()]
            for pid in pids:
                probes.append(ProcessCpuMemProbe(pid))
                probes.append(ProcessIoProbe(pid))
        elif kind == "cgroup":
            for cg in watched_cgroups:
                probes.append(CgroupProbe(cg))
        elif kind == "accelerator":
            probes.extend(accelerator_probes())
        else:
            raise ValueError(f"unknown probe kind {kind!r}")
    return probes

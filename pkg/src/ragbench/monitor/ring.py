"""Bounded circular byte buffer with drop-oldest semantics.

Records are fixed-size blobs; logical positions grow monotonically and wrap
physically, so a record may straddle the end of the storage array and is
reassembled intact on drain.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass


@dataclass(frozen=True)
class WriteOutcome:
    dropped_oldest: bool


class RingBuffer:
    def __init__(self, capacity_bytes: int, record_size: int):
        if record_size <= 0:
            raise ValueError("record_size must be positive")
        self.capacity = max(int(capacity_bytes), record_size)
        self.record_size = record_size
        self._buf = bytearray(self.capacity)
        self._tail = 0  # logical byte offset of oldest byte
        self._head = 0  # logical byte offset one past newest byte
        self._lock = threading.Lock()
        self.emitted = 0
        self.dropped = 0
        self.drained = 0

    def _put(self, data: bytes) -> None:
        pos = self._head % self.capacity
        first = min(len(data), self.capacity - pos)
        self._buf[pos:pos + first] = data[:first]
        if first < len(data):  # wrap
            self._buf[: len(data) - first] = data[first:]
        self._head += len(data)

    def _take(self, n: int) -> bytes:
        pos = self._tail % self.capacity
        first = min(n, self.capacity - pos)
        out = bytes(self._buf[pos:pos + first])
        if first < n:
            out += bytes(self._buf[: n - first])
        self._tail += n
        return out

    def write(self, record: bytes) -> WriteOutcome:
        if len(record) != self.record_size:
            raise ValueError(f"record must be {self.record_size} bytes, got {len(record)}")
        dropped_any = False
        with self._lock:
            self.emitted += 1
            while self.capacity - (self._head - self._tail) < self.record_size:
                self._tail += self.record_size  # evict oldest whole record
                self.dropped += 1
                dropped_any = True
            self._put(record)
        return WriteOutcome(dropped_oldest=dropped_any)

    def drain(self) -> bytes:
        """Remove and return all buffered complete records."""
        with self._lock:
            available = self._head - self._tail
            n_records = available // self.record_size
            data = self._take(n_records * self.record_size)
            self.drained += n_records
            return data

    @property
    def size_bytes(self) -> int:
        with self._lock:
            return self._head - self._tail

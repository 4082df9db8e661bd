"""
AEDAT 2.0 reader/writer for DVS-only recordings.

File layout:
- zero or more ASCII header lines, each starting with '#' and ending in '\\n'
- body of 8-byte records: 4-byte big-endian address, 4-byte big-endian
  timestamp in microseconds

Address word (DAVIS240 convention):
- bits 22-30: y
- bits 12-21: x
- bit 11: polarity (1 = ON)
- bit 31 set marks APS/IMU packets, which are rejected
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import DvsConvError, MalformedAddressError, ParseError

NATIVE_GEOMETRY = (240, 180)
SUBSAMPLED_GEOMETRY = (36, 36)

Y_SHIFT, Y_MASK = 22, 0x1FF
X_SHIFT, X_MASK = 12, 0x3FF
POL_SHIFT = 11
TYPE_BIT = 1 << 31

HEADER_FIRST_LINE = "#!AER-DAT2.0"
HEADER_END = "#End Of ASCII Header"

RECORD_DTYPE = np.dtype([("address", ">u4"), ("timestamp", ">u4")])


class Polarity(enum.IntEnum):
    OFF = 0
    ON = 1


class DvsEvent(NamedTuple):
    timestamp_us: int
    x: int
    y: int
    polarity: Polarity


@dataclass(frozen=True, eq=False)
class EventStream:
    """Immutable, timestamp-sorted event sequence backed by numpy columns."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    geometry: tuple[int, int] = NATIVE_GEOMETRY
    header: tuple[str, ...] = field(default=())

    def __post_init__(self):
        cols = {}
        for name, dtype in (("t", np.int64), ("x", np.int16), ("y", np.int16), ("p", np.int8)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            cols[name] = arr
            object.__setattr__(self, name, arr)
        n = len(cols["t"])
        if any(len(a) != n for a in cols.values()):
            raise ValueError("event columns differ in length")
        object.__setattr__(self, "geometry", tuple(int(g) for g in self.geometry))

    @classmethod
    def empty(cls, geometry=NATIVE_GEOMETRY) -> "EventStream":
        z = np.zeros(0)
        return cls(z, z, z, z, geometry)

    @classmethod
    def from_events(cls, events, geometry=NATIVE_GEOMETRY) -> "EventStream":
        events = list(events)
        if not events:
            return cls.empty(geometry)
        t, x, y, p = (np.array(c) for c in zip(*events))
        return cls(t, x, y, p, geometry)

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i):
        if isinstance(i, slice) or isinstance(i, np.ndarray):
            return EventStream(self.t[i], self.x[i], self.y[i], self.p[i], self.geometry, self.header)
        return DvsEvent(int(self.t[i]), int(self.x[i]), int(self.y[i]), Polarity(int(self.p[i])))

    def __iter__(self) -> Iterator[DvsEvent]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in "txyp")
        )

    @property
    def events(self) -> list[DvsEvent]:
        return list(self)

    def validate(self) -> None:
        w, h = self.geometry
        if len(self) == 0:
            return
        if self.x.min() < 0 or self.x.max() >= w or self.y.min() < 0 or self.y.max() >= h:
            raise DvsConvError(f"event address outside {w}x{h} geometry")
        if self.t.min() < 0 or np.any(np.diff(self.t) < 0):
            raise DvsConvError("timestamps must be non-negative and non-decreasing")


def decode_address(word: int) -> tuple[int, int, Polarity]:
    word = int(word)
    if word < 0 or word > 0xFFFFFFFF:
        raise MalformedAddressError(word & 0xFFFFFFFF)
    x = (word >> X_SHIFT) & X_MASK
    y = (word >> Y_SHIFT) & Y_MASK
    if word & TYPE_BIT or x >= NATIVE_GEOMETRY[0] or y >= NATIVE_GEOMETRY[1]:
        raise MalformedAddressError(word)
    return x, y, Polarity((word >> POL_SHIFT) & 1)


def encode_address(x: int, y: int, polarity) -> int:
    if not (0 <= x < NATIVE_GEOMETRY[0] and 0 <= y < NATIVE_GEOMETRY[1]):
        raise ValueError(f"address ({x}, {y}) outside {NATIVE_GEOMETRY[0]}x{NATIVE_GEOMETRY[1]}")
    return (int(y) << Y_SHIFT) | (int(x) << X_SHIFT) | ((int(polarity) & 1) << POL_SHIFT)


def decode_addresses(words: np.ndarray):
    """Vectorised decode: (x, y, polarity, malformed mask)."""
    words = np.asarray(words, dtype=np.uint32)
    x = ((words >> X_SHIFT) & X_MASK).astype(np.int16)
    y = ((words >> Y_SHIFT) & Y_MASK).astype(np.int16)
    p = ((words >> POL_SHIFT) & 1).astype(np.int8)
    bad = (x >= NATIVE_GEOMETRY[0]) | (y >= NATIVE_GEOMETRY[1]) | ((words & TYPE_BIT) != 0)
    return x, y, p, bad


def encode_addresses(x, y, p) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint32)
    y = np.asarray(y, dtype=np.uint32)
    p = np.asarray(p, dtype=np.uint32) & 1
    return (y << Y_SHIFT) | (x << X_SHIFT) | (p << POL_SHIFT)


def _split_header(data: bytes) -> tuple[list[str], int]:
    lines = []
    pos = 0
    while pos < len(data) and data[pos:pos + 1] == b"#":
        end = data.find(b"\n", pos)
        if end < 0:
            raise ParseError(f"unterminated header line at byte offset {pos}")
        line = data[pos:end].decode("latin-1").rstrip("\r")
        lines.append(line)
        pos = end + 1
        if line.startswith(HEADER_END):
            break
    return lines, pos


def read_stream(data: bytes) -> EventStream:
    header, body_start = _split_header(data)
    body = memoryview(data)[body_start:]
    if len(body) % RECORD_DTYPE.itemsize:
        bad = body_start + (len(body) // 8) * 8
        raise ParseError(f"truncated record at byte offset {bad}")
    rec = np.frombuffer(body, dtype=RECORD_DTYPE)
    x, y, p, bad = decode_addresses(rec["address"])
    if bad.any():
        i = int(np.argmax(bad))
        raise MalformedAddressError(int(rec["address"][i]), body_start + 8 * i)
    t = rec["timestamp"].astype(np.int64)
    if len(t) > 1 and np.any(np.diff(t) < 0):
        i = int(np.argmax(np.diff(t) < 0)) + 1
        raise ParseError(f"timestamp decreases at byte offset {body_start + 8 * i}")
    return EventStream(t, x, y, p, NATIVE_GEOMETRY, tuple(header))


def canonical_header() -> bytes:
    lines = [HEADER_FIRST_LINE, "# This is a raw AE data file - do not edit", "# Data format is int32 address, int32 timestamp (8 bytes total)", "# Timestamps tick is 1 us", HEADER_END]
    return "".join(line + "\r\n" for line in lines).encode("ascii")


def write_stream(stream: EventStream) -> bytes:
    if stream.geometry != NATIVE_GEOMETRY:
        raise DvsConvError(
            f"unsupported geometry {stream.geometry}; only {NATIVE_GEOMETRY} recordings can be written"
        )
    stream.validate()
    if len(stream) and stream.t.max() > 0xFFFFFFFF:
        raise DvsConvError("timestamp exceeds 32 bits")
    rec = np.empty(len(stream), dtype=RECORD_DTYPE)
    rec["address"] = encode_addresses(stream.x, stream.y, stream.p)
    rec["timestamp"] = stream.t
    return canonical_header() + rec.tobytes()


def body_bytes(data: bytes) -> bytes:
    _, start = _split_header(data)
    return data[start:]


def load(path) -> EventStream:
    return read_stream(Path(path).read_bytes())


def save(stream: EventStream, path) -> None:
    Path(path).write_bytes(write_stream(stream))

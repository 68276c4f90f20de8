"""AER event streams: parsing, time-window slicing, and density statistics.

Events are (x, y, t, p) tuples with microsecond timestamps and polarity in
{-1, +1}. Windows are half-open in time, ``t_start <= t < t_end``, so that
consecutive windows never double count. Two interchange formats are
supported: a text CSV ("t,x,y,p" per line) and the EVT1 binary layout
(little-endian magic/header plus fixed-width records).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import (
    BadMagicError,
    CoordinateOutOfRangeError,
    EmptyStreamError,
    InvertedIntervalError,
    MalformedLineError,
    RegionOutOfBoundsError,
    TruncatedStreamError,
)
from .regions import Geometry, Region

EVT1_MAGIC = b"EVT1"
_HEADER = struct.Struct("<HHQ")   # width, height, count
_RECORD = struct.Struct("<IHHB")  # t_us, x, y, p(0 -> -1, 1 -> +1)


class Event(NamedTuple):
    x: int
    y: int
    t: int
    p: int


@dataclass(frozen=True)
class EventWindow:
    """Time-ordered events within ``[t_start, t_end)`` on a fixed geometry.

    Columnar storage: ``t``, ``x``, ``y``, ``p`` are parallel arrays sorted
    by timestamp (stable, so equal timestamps keep input order).
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    t_start: int
    t_end: int
    geometry: Geometry

    def __post_init__(self):
        if self.t_start > self.t_end:
            raise InvertedIntervalError(f"t_start {self.t_start} > t_end {self.t_end}")
        if len(self.t):
            if self.t[0] < self.t_start or self.t[-1] >= self.t_end:
                raise InvertedIntervalError("events outside the declared window")
            if np.any(np.diff(self.t) < 0):
                raise InvertedIntervalError("event timestamps not sorted")
            w, h = self.geometry
            if self.x.min() < 0 or self.x.max() >= w or self.y.min() < 0 or self.y.max() >= h:
                bad = int(np.argmax((self.x < 0) | (self.x >= w) | (self.y < 0) | (self.y >= h)))
                raise CoordinateOutOfRangeError(int(self.x[bad]), int(self.y[bad]), self.geometry)
            bad_p = (self.p != 1) & (self.p != -1)
            if bad_p.any():
                raise MalformedLineError(int(np.argmax(bad_p)) + 1, "polarity must be -1 or +1")

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self.t)):
            yield Event(int(self.x[i]), int(self.y[i]), int(self.t[i]), int(self.p[i]))


def window_from_arrays(t, x, y, p, geometry: Geometry, t_start=None, t_end=None) -> EventWindow:
    """Build a window from unsorted parallel arrays (stable-sorted by t)."""
    t = np.asarray(t, dtype=np.int64)
    x = np.asarray(x, dtype=np.int32)
    y = np.asarray(y, dtype=np.int32)
    p = np.asarray(p, dtype=np.int8)
    order = np.argsort(t, kind="stable")
    t, x, y, p = t[order], x[order], y[order], p[order]
    if t_start is None:
        t_start = int(t[0]) if len(t) else 0
    if t_end is None:
        t_end = int(t[-1]) + 1 if len(t) else 0
    return EventWindow(t, x, y, p, int(t_start), int(t_end), geometry)


def empty_window(geometry: Geometry, t_start: int = 0, t_end: int = 0) -> EventWindow:
    return window_from_arrays([], [], [], [], geometry, t_start, t_end)


def _as_text_lines(source):
    if isinstance(source, (bytes, bytearray)):
        return source.decode("utf-8").splitlines()
    if isinstance(source, str):
        return source.splitlines()
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data.splitlines()


def parse_events_csv(source, geometry: Geometry | None = None) -> EventWindow:
    """Parse "t,x,y,p" lines into an EventWindow.

    The window spans [min t, max t + 1]. Without an explicit geometry the
    tightest one containing all coordinates is used. Blank lines are
    skipped; anything else malformed raises MalformedLineError with the
    1-based line number. Zero events raise EmptyStreamError.
    """
    ts, xs, ys, ps = [], [], [], []
    for line_no, line in enumerate(_as_text_lines(source), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise MalformedLineError(line_no, f"expected 4 fields, got {len(parts)}")
        try:
            t, x, y, p = (int(v.strip()) for v in parts)
        except ValueError:
            raise MalformedLineError(line_no, f"non-integer field in {line!r}") from None
        if p not in (-1, 1):
            raise MalformedLineError(line_no, f"illegal polarity {p}")
        if t < 0 or x < 0 or y < 0:
            raise MalformedLineError(line_no, "negative timestamp or coordinate")
        ts.append(t)
        xs.append(x)
        ys.append(y)
        ps.append(p)
    if not ts:
        raise EmptyStreamError(geometry)
    if geometry is None:
        geometry = (max(xs) + 1, max(ys) + 1)
    return window_from_arrays(ts, xs, ys, ps, geometry)


def write_events_csv(window: EventWindow, dest) -> None:
    lines = "".join(f"{t},{x},{y},{p}\n" for x, y, t, p in window)
    if hasattr(dest, "write"):
        try:
            dest.write(lines)
        except TypeError:
            dest.write(lines.encode("utf-8"))
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(lines)


def _read_exact(stream, n: int, what: str) -> bytes:
    data = stream.read(n)
    if len(data) != n:
        raise TruncatedStreamError(f"stream ended inside {what} ({len(data)}/{n} bytes)")
    return data


def parse_events_binary(source) -> EventWindow:
    """Parse the EVT1 binary format.

    Layout: magic "EVT1"; little-endian u16 width, u16 height, u64 count;
    then ``count`` records of (u32 t_us, u16 x, u16 y, u8 p) where p=0
    encodes polarity -1 and p=1 encodes +1.
    """
    stream = io.BytesIO(source) if isinstance(source, (bytes, bytearray)) else source
    magic = stream.read(4)
    if magic != EVT1_MAGIC:
        raise BadMagicError(f"expected {EVT1_MAGIC!r}, got {magic!r}")
    width, height, count = _HEADER.unpack(_read_exact(stream, _HEADER.size, "header"))
    geometry = (width, height)
    if count == 0:
        raise EmptyStreamError(geometry)
    raw = _read_exact(stream, _RECORD.size * count, "records")
    rec = np.frombuffer(raw, dtype=np.dtype([("t", "<u4"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")]))
    bad = (rec["x"] >= width) | (rec["y"] >= height)
    if bad.any():
        i = int(np.argmax(bad))
        raise CoordinateOutOfRangeError(int(rec["x"][i]), int(rec["y"][i]), geometry)
    if np.any(rec["p"] > 1):
        raise MalformedLineError(int(np.argmax(rec["p"] > 1)) + 1, "binary polarity byte must be 0 or 1")
    polarity = rec["p"].astype(np.int8) * 2 - 1
    return window_from_arrays(rec["t"].astype(np.int64), rec["x"], rec["y"], polarity, geometry)


def write_events_binary(window: EventWindow, dest) -> None:
    """Write EVT1; round-trips bit-exactly with parse_events_binary."""
    w, h = window.geometry
    if w >= 1 << 16 or h >= 1 << 16:
        raise CoordinateOutOfRangeError(w, h, window.geometry)
    if len(window.t) and int(window.t[-1]) >= 1 << 32:
        raise TruncatedStreamError("timestamp exceeds u32 microseconds")
    buf = bytearray()
    buf += EVT1_MAGIC
    buf += _HEADER.pack(w, h, len(window))
    if len(window):
        rec = np.empty(len(window), dtype=np.dtype([("t", "<u4"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")]))
        rec["t"] = window.t.astype(np.uint32)
        rec["x"] = window.x.astype(np.uint16)
        rec["y"] = window.y.astype(np.uint16)
        rec["p"] = ((window.p + 1) // 2).astype(np.uint8)
        buf += rec.tobytes()
    if hasattr(dest, "write"):
        dest.write(bytes(buf))
    else:
        with open(dest, "wb") as fh:
            fh.write(bytes(buf))


def read_events_file(path, geometry: Geometry | None = None) -> EventWindow:
    """Load an EVT1 file, mapping an empty stream to an empty window.

    Per-transition corpora legitimately contain zero events (static scenes),
    so this loader treats EmptyStreamError as "no events" and keeps the
    header geometry (or the supplied fallback).
    """
    with open(path, "rb") as fh:
        try:
            return parse_events_binary(fh)
        except EmptyStreamError as exc:
            return empty_window(exc.geometry or geometry or (0, 0))


def slice_window(window: EventWindow, t0: int, t1: int) -> EventWindow:
    """Events with t0 <= t < t1; geometry preserved. Empty result is legal."""
    if t0 > t1:
        raise InvertedIntervalError(f"slice [{t0}, {t1}) is inverted")
    lo = int(np.searchsorted(window.t, t0, side="left"))
    hi = int(np.searchsorted(window.t, t1, side="left"))
    return EventWindow(
        window.t[lo:hi], window.x[lo:hi], window.y[lo:hi], window.p[lo:hi],
        int(t0), int(t1), window.geometry,
    )


@dataclass(frozen=True)
class DensityMap:
    """Per-pixel event counts over a window; polarity is ignored."""

    counts: np.ndarray  # (H, W) int64
    total: int

    def __post_init__(self):
        if self.counts.min(initial=0) < 0:
            raise RegionOutOfBoundsError("negative event count")
        if int(self.counts.sum()) != self.total:
            raise RegionOutOfBoundsError("density total does not match grid sum")


def accumulate_density(window: EventWindow) -> DensityMap:
    """Count events per pixel regardless of polarity."""
    w, h = window.geometry
    counts = np.zeros((h, w), dtype=np.int64)
    if len(window):
        flat = window.y.astype(np.int64) * w + window.x.astype(np.int64)
        counts = np.bincount(flat, minlength=h * w).reshape(h, w).astype(np.int64)
    return DensityMap(counts, len(window))


def region_event_count(density: DensityMap, region: Region) -> int:
    h, w = density.counts.shape
    if not region.within((w, h)):
        raise RegionOutOfBoundsError(f"{region} outside density map {w}x{h}")
    ys, xs = region.slices
    return int(density.counts[ys, xs].sum())


def mean_density(density: DensityMap, region: Region) -> float:
    """Events per pixel inside ``region`` (the gate's decision statistic)."""
    return region_event_count(density, region) / region.area

"""Event data model, accumulated-difference maps, and the EV4D binary format.

Events live in flat time-sorted arrays; window queries go through binary
search on the timestamp array. An accumulated-difference map keeps the
signed integer event count per pixel as its primary data, so maps over
adjacent windows add exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EV4D_MAGIC = b"EV4D"
EV4D_VERSION = 1

# Channel codes used by the RGGB Bayer tiling.
CH_R, CH_G, CH_B = 0, 1, 2

_RECORD_DTYPE = np.dtype([("t", "<f8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1")])
_HEADER_FMT = "<4sHHHdB"
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)


class EventDataError(ValueError):
    """Malformed event data or event file."""


def color_filter_mask(width: int, height: int) -> np.ndarray:
    """Per-pixel channel assignment of an RGGB Bayer tiling.

    Returns a (height, width) uint8 grid of channel codes (0=R, 1=G, 2=B).
    Dimensions must be positive and even so whole Bayer cells tile the grid.
    """
    if width <= 0 or height <= 0 or width % 2 != 0 or height % 2 != 0:
        raise EventDataError(
            f"Bayer tiling needs positive even dimensions, got {width}x{height}"
        )
    cell = np.array([[CH_R, CH_G], [CH_G, CH_B]], dtype=np.uint8)
    return np.tile(cell, (height // 2, width // 2))


@dataclass(frozen=True)
class EventStream:
    """Time-sorted event arrays plus sensor geometry.

    Immutable after construction; safe to share across threads. ``t`` is in
    seconds, ``p`` is +1/-1, ``sigma`` is the contrast threshold in
    log-intensity units. For color streams each event's channel is implied
    by its pixel position under the RGGB tiling (see ``channels``).
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    width: int
    height: int
    sigma: float
    color: bool = False

    def __post_init__(self):
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise EventDataError("event arrays must have equal length")
        if self.sigma <= 0:
            raise EventDataError(f"sigma must be positive, got {self.sigma}")
        if n:
            if np.any(np.diff(self.t) < 0):
                raise EventDataError("event timestamps must be non-decreasing")
            if np.any((self.x < 0) | (self.x >= self.width)):
                raise EventDataError("event x out of range")
            if np.any((self.y < 0) | (self.y >= self.height)):
                raise EventDataError("event y out of range")
            if not np.all(np.abs(self.p) == 1):
                raise EventDataError("polarity must be +1 or -1")
        if self.color:
            color_filter_mask(self.width, self.height)  # validates even dims
        for arr in (self.t, self.x, self.y, self.p):
            arr.setflags(write=False)

    @classmethod
    def from_arrays(cls, t, x, y, p, width, height, sigma, color=False, sort=True):
        """Build a stream from raw arrays, stably sorting by time if asked."""
        t = np.asarray(t, dtype=np.float64)
        x = np.asarray(x, dtype=np.int32)
        y = np.asarray(y, dtype=np.int32)
        p = np.asarray(p, dtype=np.int8)
        if sort and len(t) and np.any(np.diff(t) < 0):
            order = np.argsort(t, kind="stable")
            t, x, y, p = t[order], x[order], y[order], p[order]
        return cls(t, x, y, p, int(width), int(height), float(sigma), bool(color))

    def __len__(self) -> int:
        return len(self.t)

    @property
    def t_start(self) -> float:
        return float(self.t[0]) if len(self.t) else 0.0

    @property
    def t_end(self) -> float:
        return float(self.t[-1]) if len(self.t) else 0.0

    @property
    def n_channels(self) -> int:
        return 3 if self.color else 1

    def channels(self) -> np.ndarray:
        """Per-event channel codes (from the Bayer position; mono gets 0)."""
        if not self.color:
            return np.zeros(len(self.t), dtype=np.uint8)
        bayer = color_filter_mask(self.width, self.height)
        return bayer[self.y, self.x]

    def window(self, t0: float, t1: float) -> slice:
        """Index slice of events with t0 < t <= t1."""
        lo = int(np.searchsorted(self.t, t0, side="right"))
        hi = int(np.searchsorted(self.t, t1, side="right"))
        return slice(lo, max(lo, hi))

    def count_in(self, t0: float, t1: float) -> int:
        s = self.window(t0, t1)
        return s.stop - s.start

    def save(self, path) -> None:
        write_ev4d(path, self)

    @classmethod
    def load(cls, path) -> "EventStream":
        return read_ev4d(path)


@dataclass(frozen=True)
class AccumulatedDifferenceMap:
    """Per-pixel signed brightness change sigma * sum(p) over (t0, t1].

    ``counts`` holds the signed integer event count per channel and pixel,
    shape (C, H, W) with C=1 for mono streams. ``values`` is sigma * counts.
    Maps over adjacent windows add exactly because the counts are integers.
    """

    counts: np.ndarray
    t0: float
    t1: float
    sigma: float
    color: bool = False

    def __post_init__(self):
        if self.t0 > self.t1:
            raise EventDataError(f"window reversed: t0={self.t0} > t1={self.t1}")
        if self.counts.ndim != 3:
            raise EventDataError("counts must have shape (C, H, W)")
        self.counts.setflags(write=False)

    @property
    def values(self) -> np.ndarray:
        """(C, H, W) float map in log-intensity units."""
        return self.sigma * self.counts.astype(np.float64)

    @property
    def shape(self):
        return self.counts.shape

    def __add__(self, other: "AccumulatedDifferenceMap") -> "AccumulatedDifferenceMap":
        if not isinstance(other, AccumulatedDifferenceMap):
            return NotImplemented
        if self.counts.shape != other.counts.shape or self.sigma != other.sigma:
            raise EventDataError("maps are not compatible")
        if self.t1 != other.t0:
            raise EventDataError(
                f"windows not adjacent: ({self.t0}, {self.t1}] + ({other.t0}, {other.t1}]"
            )
        return AccumulatedDifferenceMap(
            self.counts + other.counts, self.t0, other.t1, self.sigma, self.color
        )


def accumulate(stream: EventStream, t0: float, t1: float) -> AccumulatedDifferenceMap:
    """Accumulated difference of ``stream`` over the half-open window (t0, t1].

    Events exactly at t0 are excluded, events at t1 included. Windows that
    reach outside the stream's span simply contribute nothing there. Color
    streams produce one count plane per channel; pixels of other Bayer
    channels stay zero.
    """
    if t0 > t1:
        raise EventDataError(f"window reversed: t0={t0} > t1={t1}")
    c = stream.n_channels
    counts = np.zeros((c, stream.height, stream.width), dtype=np.int64)
    sel = stream.window(t0, t1)
    if sel.stop > sel.start:
        x = stream.x[sel].astype(np.int64)
        y = stream.y[sel].astype(np.int64)
        p = stream.p[sel]
        lin = y * stream.width + x
        if stream.color:
            lin = stream.channels()[sel].astype(np.int64) * (stream.height * stream.width) + lin
        size = c * stream.height * stream.width
        pos = np.bincount(lin[p > 0], minlength=size)
        neg = np.bincount(lin[p < 0], minlength=size)
        counts = (pos - neg).reshape(c, stream.height, stream.width)
    return AccumulatedDifferenceMap(counts, float(t0), float(t1), stream.sigma, stream.color)


def sample_window(t_i: float, l_max: float, rng: np.random.Generator) -> float:
    """Draw the far end of a supervision window: t_j ~ U[t_i, t_i + l_max)."""
    if l_max <= 0:
        raise ValueError(f"l_max must be positive, got {l_max}")
    return float(t_i + rng.uniform(0.0, l_max))


def merge_streams(streams, width, height, sigma, color) -> EventStream:
    """Concatenate streams and stably re-sort by timestamp."""
    t = np.concatenate([s.t for s in streams]) if streams else np.empty(0)
    x = np.concatenate([s.x for s in streams]) if streams else np.empty(0, np.int32)
    y = np.concatenate([s.y for s in streams]) if streams else np.empty(0, np.int32)
    p = np.concatenate([s.p for s in streams]) if streams else np.empty(0, np.int8)
    return EventStream.from_arrays(t, x, y, p, width, height, sigma, color=color, sort=True)


def write_ev4d(path, stream: EventStream) -> None:
    """Write the little-endian EV4D container (13-byte event records)."""
    header = struct.pack(
        _HEADER_FMT,
        EV4D_MAGIC,
        EV4D_VERSION,
        stream.width,
        stream.height,
        stream.sigma,
        1 if stream.color else 0,
    )
    rec = np.empty(len(stream), dtype=_RECORD_DTYPE)
    rec["t"] = stream.t
    rec["x"] = stream.x.astype(np.uint16)
    rec["y"] = stream.y.astype(np.uint16)
    rec["p"] = stream.p
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(rec.tobytes())


def read_ev4d(path) -> EventStream:
    """Read an EV4D file written by :func:`write_ev4d`."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER_SIZE:
        raise EventDataError(f"{path}: truncated header")
    magic, version, width, height, sigma, color = struct.unpack_from(_HEADER_FMT, data)
    if magic != EV4D_MAGIC:
        raise EventDataError(f"{path}: bad magic {magic!r}")
    if version != EV4D_VERSION:
        raise EventDataError(f"{path}: unsupported version {version}")
    body = data[_HEADER_SIZE:]
    if len(body) % _RECORD_DTYPE.itemsize:
        raise EventDataError(f"{path}: truncated event records")
    rec = np.frombuffer(body, dtype=_RECORD_DTYPE)
    return EventStream.from_arrays(
        rec["t"].copy(),
        rec["x"].astype(np.int32),
        rec["y"].astype(np.int32),
        rec["p"].astype(np.int8),
        width,
        height,
        sigma,
        color=bool(color),
        sort=False,
    )

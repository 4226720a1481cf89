"""ESIM-style event synthesis from high-frame-rate intensity sequences.

Log intensity is interpolated linearly between consecutive frames and one
event is emitted per threshold crossing, with the per-pixel reference level
advancing by exactly sigma per event. Pixels are independent, so the whole
crossing computation is vectorized per frame pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .events import EventStream, color_filter_mask, merge_streams

DEFAULT_LOG_EPS = 1e-3
SRGB_GAMMA = 2.2


class SimulationError(ValueError):
    """Bad frame sequence input."""


@dataclass(frozen=True)
class FrameSequence:
    """Ordered intensity frames with strictly increasing timestamps.

    ``frames`` has shape (T, H, W) for mono or (T, 3, H, W) for color, with
    values in [0, 1].
    """

    frames: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        if self.frames.ndim not in (3, 4):
            raise SimulationError("frames must be (T,H,W) or (T,3,H,W)")
        if self.frames.ndim == 4 and self.frames.shape[1] != 3:
            raise SimulationError("color sequences need exactly 3 channels")
        if len(self.frames) != len(self.timestamps) or len(self.frames) < 2:
            raise SimulationError("need at least two frames with matching timestamps")
        if np.any(np.diff(self.timestamps) <= 0):
            raise SimulationError("timestamps must be strictly increasing")

    @property
    def color(self) -> bool:
        return self.frames.ndim == 4

    @property
    def height(self) -> int:
        return self.frames.shape[-2]

    @property
    def width(self) -> int:
        return self.frames.shape[-1]

    def channel(self, c: int) -> "FrameSequence":
        if not self.color:
            raise SimulationError("mono sequence has no channels")
        return FrameSequence(self.frames[:, c], self.timestamps)


def log_intensity(image: np.ndarray, eps: float = DEFAULT_LOG_EPS) -> np.ndarray:
    """ln(max(I, eps)); the floor keeps black pixels finite."""
    return np.log(np.maximum(np.asarray(image, dtype=np.float64), eps))


def _crossings(ref, l_prev, l_cur, t_prev, t_cur, sigma, pixel_mask=None):
    """Events for one linearly interpolated frame pair.

    Returns (t, flat_idx, p) arrays and advances ``ref`` in place by
    sigma * count. ``pixel_mask`` restricts emission (used for Bayer tiles).
    """
    up = l_cur - ref
    down = ref - l_cur
    k_up = np.floor(up / sigma).astype(np.int64)
    k_dn = np.floor(down / sigma).astype(np.int64)
    np.clip(k_up, 0, None, out=k_up)
    np.clip(k_dn, 0, None, out=k_dn)
    if pixel_mask is not None:
        k_up *= pixel_mask
        k_dn *= pixel_mask

    dt = t_cur - t_prev
    out_t, out_idx, out_p = [], [], []
    for k, sign in ((k_up, 1), (k_dn, -1)):
        idx = np.flatnonzero(k)
        if idx.size == 0:
            continue
        counts = k.flat[idx]
        rep = np.repeat(idx, counts)
        ends = np.cumsum(counts)
        j = np.arange(ends[-1]) - np.repeat(ends - counts, counts) + 1
        levels = ref.flat[idx].repeat(counts) + sign * sigma * j
        l0 = l_prev.flat[rep]
        l1 = l_cur.flat[rep]
        frac = (levels - l0) / (l1 - l0)
        out_t.append(t_prev + dt * frac)
        out_idx.append(rep)
        out_p.append(np.full(rep.shape, sign, dtype=np.int8))
        ref.flat[idx] += sign * sigma * counts
    if not out_t:
        return None
    return np.concatenate(out_t), np.concatenate(out_idx), np.concatenate(out_p)


def simulate(seq: FrameSequence, sigma: float, log_eps: float = DEFAULT_LOG_EPS,
             _pixel_mask: np.ndarray | None = None) -> EventStream:
    """Simulate a mono event stream from an intensity sequence.

    The reference level starts at the first frame's log intensity and
    advances by sigma per emitted event, so the accumulated difference over
    the full span stays within sigma of the true log-intensity change.
    """
    if sigma <= 0:
        raise SimulationError(f"sigma must be positive, got {sigma}")
    if seq.color:
        raise SimulationError("simulate() expects a mono sequence; see simulate_color()")

    h, w = seq.height, seq.width
    l_prev = log_intensity(seq.frames[0], log_eps)
    ref = l_prev.copy()
    ts, idxs, ps = [], [], []
    for f in range(1, len(seq.frames)):
        l_cur = log_intensity(seq.frames[f], log_eps)
        got = _crossings(ref, l_prev, l_cur, float(seq.timestamps[f - 1]),
                         float(seq.timestamps[f]), sigma, _pixel_mask)
        if got is not None:
            ts.append(got[0])
            idxs.append(got[1])
            ps.append(got[2])
        l_prev = l_cur

    if not ts:
        empty = np.empty(0)
        return EventStream.from_arrays(empty, empty, empty, empty, w, h, sigma)
    t = np.concatenate(ts)
    flat = np.concatenate(idxs)
    p = np.concatenate(ps)
    return EventStream.from_arrays(t, flat % w, flat // w, p, w, h, sigma, sort=True)


def simulate_color(seq: FrameSequence, sigma: float,
                   log_eps: float = DEFAULT_LOG_EPS) -> EventStream:
    """Per-channel simulation restricted to RGGB Bayer pixels, then merged."""
    if not seq.color:
        raise SimulationError("simulate_color() expects a 3-channel sequence")
    bayer = color_filter_mask(seq.width, seq.height)
    parts = []
    for c in range(3):
        mask = (bayer == c).astype(np.int64)
        parts.append(simulate(seq.channel(c), sigma, log_eps, _pixel_mask=mask))
    return merge_streams(parts, seq.width, seq.height, sigma, color=True)


# ---------------------------------------------------------------------------
# Frame ingestion: 8-bit PNG (sRGB, decoded by x^2.2) and PFM (linear).

def load_frame(path) -> np.ndarray:
    """Load one frame as linear intensity in [0, 1]; (H,W) or (3,H,W)."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return np.clip(read_pfm(path), 0.0, 1.0)
    img = np.asarray(Image.open(path), dtype=np.float64) / 255.0
    img = np.power(img, SRGB_GAMMA)
    if img.ndim == 3:
        return np.moveaxis(img[..., :3], -1, 0)
    return img


def load_frame_dir(directory, fps: float) -> FrameSequence:
    """Load a directory of frames (sorted by name) at a fixed frame rate."""
    paths = sorted(
        p for p in Path(directory).iterdir()
        if p.suffix.lower() in (".png", ".pfm")
    )
    if len(paths) < 2:
        raise SimulationError(f"{directory}: need at least two frames")
    frames = np.stack([load_frame(p) for p in paths])
    timestamps = np.arange(len(paths), dtype=np.float64) / fps
    return FrameSequence(frames, timestamps)


def read_pfm(path) -> np.ndarray:
    """Read a PFM image as float64, (H,W) or (3,H,W), top row first."""
    with open(path, "rb") as fh:
        kind = fh.readline().strip()
        if kind not in (b"PF", b"Pf"):
            raise SimulationError(f"{path}: not a PFM file")
        dims = fh.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        count = w * h * (3 if kind == b"PF" else 1)
        data = np.fromfile(fh, dtype="<f4" if scale < 0 else ">f4", count=count)
    if data.size != count:
        raise SimulationError(f"{path}: truncated PFM data")
    if kind == b"PF":
        img = data.reshape(h, w, 3)[::-1]  # PFM stores bottom row first
        return np.moveaxis(img, -1, 0).astype(np.float64)
    return data.reshape(h, w)[::-1].astype(np.float64)


def write_pfm(path, image: np.ndarray) -> None:
    """Write (H,W) or (3,H,W) float data as little-endian PFM."""
    if image.ndim == 3:
        header, rows = b"PF", np.moveaxis(image, 0, -1)
    else:
        header, rows = b"Pf", image
    h, w = rows.shape[0], rows.shape[1]
    with open(path, "wb") as fh:
        fh.write(header + b"\n")
        fh.write(f"{w} {h}\n".encode())
        fh.write(b"-1.0\n")
        rows[::-1].astype("<f4").tofile(fh)


def write_png(path, image: np.ndarray, gamma: float = SRGB_GAMMA) -> None:
    """Write linear intensity in [0,1] as gamma-encoded 8-bit PNG."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    img = np.power(img, 1.0 / gamma)
    data = np.round(img * 255.0).astype(np.uint8)
    if data.ndim == 3:
        data = np.moveaxis(data, 0, -1)
    Image.fromarray(data).save(path)

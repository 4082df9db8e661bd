"""
From raw 240x180 event streams to 36x36 samples and training frames.

Frames are indexed ``frame[y, x]``. A sample is a window of a fixed number of
subsampled events; the same 3-sigma outlier rule is applied to the training
frame (as a clip of the count frame) and to the event stream fed to the
spiking network (by dropping the late events of over-threshold pixels), so
``count_frame(filter_outlier_events(s))`` equals the clipped count frame.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np

from .aedat import NATIVE_GEOMETRY, SUBSAMPLED_GEOMETRY, EventStream, Polarity

DEFAULT_SAMPLE_EVENTS = 5000


class ClassLabel(enum.IntEnum):
    LEFT = 0
    CENTER = 1
    RIGHT = 2
    INVISIBLE = 3


class SubsampleMode(str, enum.Enum):
    MAX = "max"
    SUM = "sum"


class NormOrder(str, enum.Enum):
    CLIP_FIRST = "clip_first"
    SCALE_FIRST = "scale_first"


@dataclass(frozen=True, eq=False)
class Sample:
    events: EventStream
    label: ClassLabel

    @property
    def start_us(self) -> int:
        return int(self.events.t[0])

    @property
    def end_us(self) -> int:
        return int(self.events.t[-1])

    def __len__(self):
        return len(self.events)

    def with_events(self, events: EventStream) -> "Sample":
        return Sample(events, self.label)


def map_coords(x, y, src_geometry=NATIVE_GEOMETRY, dst_geometry=SUBSAMPLED_GEOMETRY):
    """Proportional floor mapping; works on scalars and arrays alike."""
    sw, sh = src_geometry
    dw, dh = dst_geometry
    if np.ndim(x) == 0:
        return int(x) * dw // sw, int(y) * dh // sh
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    return x * dw // sw, y * dh // sh


@numba.njit(cache=True)
def _dedupe_mask(t, pix, n_pix, window):
    keep = np.ones(t.shape[0], dtype=np.bool_)
    last = np.full(n_pix, -1, dtype=np.int64)
    for i in range(t.shape[0]):
        p = pix[i]
        if last[p] >= 0 and t[i] - last[p] <= window:
            keep[i] = False
        else:
            last[p] = t[i]
    return keep


def subsample_stream(
    stream: EventStream,
    mode: SubsampleMode = SubsampleMode.MAX,
    dst_geometry=SUBSAMPLED_GEOMETRY,
    dedupe_window_us: int = 0,
) -> EventStream:
    """Map addresses onto ``dst_geometry`` and rectify polarity to ON.

    In MAX mode an event is dropped when an earlier kept event hit the same
    target pixel no more than ``dedupe_window_us`` before it; the default of 0
    removes exactly the events that share (x', y', timestamp).
    """
    mode = SubsampleMode(mode)
    if len(stream) == 0:
        return EventStream.empty(dst_geometry)
    x, y = map_coords(stream.x, stream.y, stream.geometry, dst_geometry)
    t = stream.t
    if mode is SubsampleMode.MAX:
        pix = (y * dst_geometry[0] + x).astype(np.int64)
        keep = _dedupe_mask(t, pix, dst_geometry[0] * dst_geometry[1], int(dedupe_window_us))
        t, x, y = t[keep], x[keep], y[keep]
    p = np.full(len(t), int(Polarity.ON), dtype=np.int8)
    return EventStream(t, x, y, p, dst_geometry)


def bin_samples(
    stream: EventStream,
    n: int = DEFAULT_SAMPLE_EVENTS,
    labels: Callable[[int], ClassLabel] | None = None,
) -> list[Sample]:
    if n < 1:
        raise ValueError("n must be >= 1")
    out = []
    for k in range(len(stream) // n):
        ev = stream[k * n:(k + 1) * n]
        label = ClassLabel(labels(int(ev.t[-1]))) if labels is not None else ClassLabel.INVISIBLE
        out.append(Sample(ev, label))
    return out


def count_frame(sample, geometry=SUBSAMPLED_GEOMETRY) -> np.ndarray:
    ev = sample.events if isinstance(sample, Sample) else sample
    w, h = geometry
    flat = np.bincount(ev.y.astype(np.int64) * w + ev.x, minlength=w * h)
    return flat.reshape(h, w)


def clip_level(frame: np.ndarray) -> int:
    """floor(3 * population std) computed exactly in integer arithmetic."""
    c = np.asarray(frame, dtype=np.int64).ravel()
    n = c.size
    s = int(c.sum())
    s2 = int((c * c).sum())
    return math.isqrt(9 * (n * s2 - s * s)) // n


def sigma_clip(frame: np.ndarray) -> tuple[np.ndarray, float]:
    frame = np.asarray(frame)
    threshold = 3.0 * float(np.std(frame.astype(np.float64)))
    return np.minimum(frame, clip_level(frame)), threshold


def filter_outlier_events(sample: Sample, geometry=SUBSAMPLED_GEOMETRY) -> Sample:
    ev = sample.events
    if len(ev) == 0:
        return sample
    level = clip_level(count_frame(ev, geometry))
    pix = ev.y.astype(np.int64) * geometry[0] + ev.x
    order = np.argsort(pix, kind="stable")
    sorted_pix = pix[order]
    starts = np.searchsorted(sorted_pix, sorted_pix, side="left")
    occurrence = np.empty(len(ev), dtype=np.int64)
    occurrence[order] = np.arange(len(ev)) - starts
    keep = occurrence < level
    if keep.all():
        return sample
    return sample.with_events(ev[keep])


def scale_frame(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    m = frame.max() if frame.size else 0.0
    if m <= 0:
        return np.zeros_like(frame)
    return frame / m


def make_training_frame(sample, order: NormOrder = NormOrder.CLIP_FIRST) -> np.ndarray:
    counts = count_frame(sample)
    if NormOrder(order) is NormOrder.CLIP_FIRST:
        return scale_frame(sigma_clip(counts)[0])
    scaled = scale_frame(counts)
    clipped = np.minimum(scaled, 3.0 * scaled.std())
    return scale_frame(clipped)

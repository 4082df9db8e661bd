"""
Synthetic labelled DVS recordings: a moving blob plus background noise.

The blob emits events on its contour (a moving edge), in small clusters of
simultaneous events along the contour, which is what makes max vs sum
subsampling differ. Background noise is uniform over the sensor. Optional
periodic bursts multiply every rate for a short window.

Randomness comes from ``numpy.random.default_rng(seed)`` (PCG64). Draws are
made in a fixed order, so a (config, seed) pair always yields the same
recording. Motion, visibility and bursts are piecewise constant over 1 ms
segments; labels therefore change only on millisecond boundaries.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numba
import numpy as np

from .aedat import NATIVE_GEOMETRY, EventStream
from .errors import ConfigError, LabelingError
from .preprocess import ClassLabel

SEGMENT_US = 1000


@dataclass
class SceneConfig:
    """Rates are events per microsecond, speeds native pixels per millisecond."""

    duration_us: int = 1_000_000
    blob_radius: float = 6.0
    blob_rate: float = 0.3
    noise_rate: float = 0.01
    blob_speed: float = 0.3
    turn_std: float = 0.1
    blob_cluster: int = 3
    start_x: float | None = None
    start_y: float | None = None
    start_visible: bool = True
    hide_prob_per_ms: float = 0.002
    show_prob_per_ms: float = 0.004
    burst_period_us: int = 0
    burst_multiplier: float = 1.0
    burst_len_us: int = 0
    seed: int = 0

    def validate(self):
        if self.duration_us <= 0:
            raise ConfigError("duration_us must be positive")
        for name in ("blob_rate", "noise_rate", "blob_speed", "turn_std", "blob_radius", "burst_multiplier"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("hide_prob_per_ms", "show_prob_per_ms"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.blob_cluster < 1:
            raise ConfigError("blob_cluster must be >= 1")
        if self.burst_period_us and not 0 < self.burst_len_us <= self.burst_period_us:
            raise ConfigError("burst_len_us must lie in (0, burst_period_us]")

    def to_dict(self):
        return asdict(self)


def scene_series(base: SceneConfig, n: int) -> list[SceneConfig]:
    """``n`` recordings that differ only in their seed (base.seed, base.seed + 1, ...)."""
    return [replace(base, seed=base.seed + i) for i in range(n)]


@dataclass
class LabelTrack:
    """Contiguous right-open intervals covering [0, duration]."""

    intervals: list[tuple[int, int, ClassLabel]] = field(default_factory=list)

    def __post_init__(self):
        self.intervals = [(int(a), int(b), ClassLabel(c)) for a, b, c in self.intervals]
        self._starts = np.array([a for a, _, _ in self.intervals], dtype=np.int64)
        for (a0, b0, _), (a1, _, _) in zip(self.intervals, self.intervals[1:]):
            if b0 != a1:
                raise LabelingError("label intervals are not contiguous")

    @property
    def duration(self) -> int:
        return self.intervals[-1][1] if self.intervals else 0

    def label_at(self, t_us: int) -> ClassLabel:
        if not self.intervals or t_us < self.intervals[0][0] or t_us > self.duration:
            raise LabelingError(f"t={t_us} us is outside the labelled range [0, {self.duration}]")
        i = int(np.searchsorted(self._starts, t_us, side="right")) - 1
        return self.intervals[i][2]

    __call__ = label_at

    def dumps(self) -> str:
        return "".join(f"{a} {b} {c.name}\n" for a, b, c in self.intervals)

    @classmethod
    def loads(cls, text: str) -> "LabelTrack":
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                a, b, name = line.split()
                rows.append((int(a), int(b), ClassLabel[name]))
            except (ValueError, KeyError) as exc:
                raise LabelingError(f"bad label line {lineno}: {line!r}") from exc
        return cls(rows)

    def save(self, path):
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "LabelTrack":
        return cls.loads(Path(path).read_text())


def label_at(track: LabelTrack, t_us: int) -> ClassLabel:
    return track.label_at(t_us)


@numba.njit(cache=True)
def _integrate_motion(x0, y0, heading0, speed, turns, xmin, xmax, ymin, ymax):
    n = turns.shape[0]
    xs = np.empty(n)
    ys = np.empty(n)
    x, y, h = x0, y0, heading0
    for k in range(n):
        xs[k] = x
        ys[k] = y
        h += turns[k]
        x += speed * math.cos(h)
        y += 0.5 * speed * math.sin(h)
        if x < xmin:
            x = 2 * xmin - x
            h = math.pi - h
        elif x > xmax:
            x = 2 * xmax - x
            h = math.pi - h
        if y < ymin:
            y = 2 * ymin - y
            h = -h
        elif y > ymax:
            y = 2 * ymax - y
            h = -h
    return xs, ys


@numba.njit(cache=True)
def _visibility(start_visible, u, p_hide, p_show):
    vis = np.empty(u.shape[0], dtype=np.bool_)
    v = start_visible
    for k in range(u.shape[0]):
        vis[k] = v
        if v:
            if u[k] < p_hide:
                v = False
        elif u[k] < p_show:
            v = True
    return vis


def _third(x: np.ndarray) -> np.ndarray:
    return np.minimum((x // (NATIVE_GEOMETRY[0] / 3)).astype(np.int64), 2)


def generate_recording(config: SceneConfig) -> tuple[EventStream, LabelTrack]:
    config.validate()
    rng = np.random.default_rng(config.seed)
    w, h = NATIVE_GEOMETRY
    n_seg = -(-config.duration_us // SEGMENT_US)
    seg_start = np.arange(n_seg, dtype=np.int64) * SEGMENT_US
    seg_len = np.minimum(seg_start + SEGMENT_US, config.duration_us) - seg_start

    r = config.blob_radius
    xmin, xmax = r, w - 1 - r
    ymin, ymax = r, h - 1 - r
    x0 = config.start_x if config.start_x is not None else rng.uniform(xmin, xmax)
    y0 = config.start_y if config.start_y is not None else rng.uniform(ymin, ymax)
    heading0 = rng.uniform(0, 2 * np.pi)
    turns = rng.normal(0.0, config.turn_std, n_seg) if config.turn_std > 0 else np.zeros(n_seg)
    cx, cy = _integrate_motion(float(x0), float(y0), heading0, float(config.blob_speed), turns, xmin, xmax, ymin, ymax)
    vis = _visibility(bool(config.start_visible), rng.random(n_seg), config.hide_prob_per_ms, config.show_prob_per_ms)

    mult = np.ones(n_seg)
    if config.burst_period_us > 0:
        phase = seg_start % config.burst_period_us
        mult[phase < config.burst_len_us] = config.burst_multiplier

    # blob clusters
    k = config.blob_cluster
    lam_blob = config.blob_rate * seg_len * mult * vis / k
    n_clusters = rng.poisson(lam_blob)
    seg_of = np.repeat(np.arange(n_seg), n_clusters)
    t_cl = seg_start[seg_of] + (rng.random(len(seg_of)) * seg_len[seg_of]).astype(np.int64)
    ang = rng.uniform(0, 2 * np.pi, len(seg_of))
    step = 1.0 / max(r, 1.0)
    offs = (np.arange(k) - (k - 1) / 2.0) * step
    ang_all = (ang[:, None] + offs[None, :]).ravel()
    t_blob = np.repeat(t_cl, k)
    seg_blob = np.repeat(seg_of, k)
    bx = np.rint(cx[seg_blob] + r * np.cos(ang_all)).astype(np.int64)
    by = np.rint(cy[seg_blob] + r * np.sin(ang_all)).astype(np.int64)
    bp = np.repeat(rng.integers(0, 2, len(seg_of)), k)

    # background noise
    n_noise = rng.poisson(config.noise_rate * seg_len * mult)
    seg_n = np.repeat(np.arange(n_seg), n_noise)
    t_noise = seg_start[seg_n] + (rng.random(len(seg_n)) * seg_len[seg_n]).astype(np.int64)
    nx = rng.integers(0, w, len(seg_n))
    ny = rng.integers(0, h, len(seg_n))
    np_ = rng.integers(0, 2, len(seg_n))

    t = np.concatenate([t_blob, t_noise])
    x = np.concatenate([bx, nx])
    y = np.concatenate([by, ny])
    p = np.concatenate([bp, np_])
    inside = (x >= 0) & (x < w) & (y >= 0) & (y < h)
    t, x, y, p = t[inside], x[inside], y[inside], p[inside]
    order = np.argsort(t, kind="stable")
    stream = EventStream(t[order], x[order], y[order], p[order], NATIVE_GEOMETRY)

    seg_labels = np.where(vis, _third(cx), int(ClassLabel.INVISIBLE))
    change = np.flatnonzero(np.diff(seg_labels)) + 1
    bounds = np.concatenate([[0], change, [n_seg]])
    intervals = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        end = config.duration_us if b == n_seg else int(seg_start[b])
        intervals.append((int(seg_start[a]), end, ClassLabel(int(seg_labels[a]))))
    return stream, LabelTrack(intervals)

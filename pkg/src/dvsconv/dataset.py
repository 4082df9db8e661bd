"""
Prepared datasets: training frames, labels and the outlier-filtered event
samples they were made from.

On-disk layout of a prepared dataset directory::

    dataset.json   metadata: format version, preprocessing options, and the
                   recordings (file names, sha256, label intervals, sample counts)
    frames.bin     one record per sample: 36*36 little-endian float32 cells,
                   row-major frame[y, x], followed by one uint8 class label
    samples.npz    filtered events of every sample, concatenated:
                   t (int64 us), x, y (int16), offsets (int64, N+1),
                   recording (int32, N), end_us (int64, N)

Samples keep the order in which they were produced: recording by recording,
and within a recording in time order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import aedat
from .aedat import SUBSAMPLED_GEOMETRY, EventStream, Polarity
from .errors import ConfigError, ParseError
from .preprocess import (
    DEFAULT_SAMPLE_EVENTS,
    ClassLabel,
    NormOrder,
    Sample,
    SubsampleMode,
    bin_samples,
    filter_outlier_events,
    make_training_frame,
    subsample_stream,
)
from .synth import LabelTrack

FORMAT_VERSION = 1
FRAME_SHAPE = (SUBSAMPLED_GEOMETRY[1], SUBSAMPLED_GEOMETRY[0])
RECORD_DTYPE = np.dtype([("frame", "<f4", FRAME_SHAPE), ("label", "u1")])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class Recording:
    name: str
    stream: EventStream
    labels: LabelTrack
    sha256: str = ""


def load_recording(aedat_path, labels_path=None) -> Recording:
    """Load ``x.aedat`` and its label track (default ``x.labels`` next to it)."""
    aedat_path = Path(aedat_path)
    labels_path = Path(labels_path) if labels_path else aedat_path.with_suffix(".labels")
    if not labels_path.exists():
        raise ParseError(f"label track {labels_path} not found for {aedat_path}")
    return Recording(aedat_path.name, aedat.load(aedat_path), LabelTrack.load(labels_path), sha256_file(aedat_path))


@dataclass
class PrepConfig:
    subsample: SubsampleMode = SubsampleMode.MAX
    order: NormOrder = NormOrder.CLIP_FIRST
    sample_events: int = DEFAULT_SAMPLE_EVENTS
    dedupe_window_us: int = 0

    def __post_init__(self):
        self.subsample = SubsampleMode(self.subsample)
        self.order = NormOrder(self.order)
        if self.sample_events < 1:
            raise ConfigError("sample_events must be >= 1")
        if self.dedupe_window_us < 0:
            raise ConfigError("dedupe_window_us must be >= 0")

    def to_dict(self):
        return {
            "subsample": self.subsample.value,
            "order": self.order.value,
            "sample_events": self.sample_events,
            "dedupe_window_us": self.dedupe_window_us,
        }


@dataclass
class PreparedDataset:
    frames: np.ndarray  # (N, 36, 36) float32
    labels: np.ndarray  # (N,) uint8
    ev_t: np.ndarray
    ev_x: np.ndarray
    ev_y: np.ndarray
    offsets: np.ndarray  # (N + 1,)
    recording: np.ndarray  # (N,) index into ``recordings``
    end_us: np.ndarray
    config: PrepConfig = field(default_factory=PrepConfig)
    recordings: list = field(default_factory=list)  # dicts: name, sha256, intervals, n_samples

    def __len__(self):
        return len(self.labels)

    def sample(self, i: int) -> Sample:
        a, b = int(self.offsets[i]), int(self.offsets[i + 1])
        p = np.full(b - a, int(Polarity.ON), dtype=np.int8)
        ev = EventStream(self.ev_t[a:b], self.ev_x[a:b], self.ev_y[a:b], p, SUBSAMPLED_GEOMETRY)
        return Sample(ev, ClassLabel(int(self.labels[i])))

    def samples(self):
        for i in range(len(self)):
            yield self.sample(i)

    def n_events(self) -> np.ndarray:
        return np.diff(self.offsets)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(ClassLabel))

    def subset(self, index) -> "PreparedDataset":
        index = np.asarray(index)
        index = np.flatnonzero(index) if index.dtype == bool else index.astype(np.int64)
        lens = np.diff(self.offsets)[index]
        offsets = np.concatenate([[0], np.cumsum(lens)]).astype(np.int64)
        ev = np.concatenate([np.arange(self.offsets[i], self.offsets[i + 1]) for i in index]) if len(index) else np.zeros(0, np.int64)
        return PreparedDataset(
            self.frames[index], self.labels[index], self.ev_t[ev], self.ev_x[ev], self.ev_y[ev], offsets,
            self.recording[index], self.end_us[index], self.config, self.recordings,
        )

    def by_recordings(self, names) -> "PreparedDataset":
        names = set(names)
        ids = [i for i, r in enumerate(self.recordings) if r["name"] in names]
        return self.subset(np.isin(self.recording, ids))

    def metadata(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "n_samples": len(self),
            "frame_shape": list(FRAME_SHAPE),
            "class_names": [c.name for c in ClassLabel],
            "class_counts": self.class_counts().tolist(),
            "preprocessing": self.config.to_dict(),
            "recordings": self.recordings,
        }

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        rec = np.empty(len(self), dtype=RECORD_DTYPE)
        rec["frame"] = self.frames
        rec["label"] = self.labels
        rec.tofile(directory / "frames.bin")
        with open(directory / "samples.npz", "wb") as fh:
            np.savez(
                fh, t=self.ev_t, x=self.ev_x, y=self.ev_y, offsets=self.offsets,
                recording=self.recording.astype(np.int32), end_us=self.end_us,
            )
        (directory / "dataset.json").write_text(json.dumps(self.metadata(), indent=2) + "\n")

    @classmethod
    def load(cls, directory) -> "PreparedDataset":
        directory = Path(directory)
        try:
            meta = json.loads((directory / "dataset.json").read_text())
        except FileNotFoundError as exc:
            raise ParseError(f"{directory} is not a prepared dataset (no dataset.json)") from exc
        if meta.get("format_version") != FORMAT_VERSION:
            raise ParseError(f"unsupported dataset format version {meta.get('format_version')}")
        rec = np.fromfile(directory / "frames.bin", dtype=RECORD_DTYPE)
        if len(rec) != meta["n_samples"]:
            raise ParseError("frames.bin does not match the sample count in dataset.json")
        with np.load(directory / "samples.npz") as z:
            arrays = {k: z[k] for k in z.files}
        return cls(
            np.ascontiguousarray(rec["frame"]), np.ascontiguousarray(rec["label"]),
            arrays["t"], arrays["x"], arrays["y"], arrays["offsets"],
            arrays["recording"].astype(np.int64), arrays["end_us"],
            PrepConfig(**meta["preprocessing"]), meta["recordings"],
        )


def prepare_recording(rec: Recording, config: PrepConfig) -> list[Sample]:
    """Subsample, bin and outlier-filter one recording (labels at sample end)."""
    sub = subsample_stream(rec.stream, config.subsample, dedupe_window_us=config.dedupe_window_us)
    return [filter_outlier_events(s) for s in bin_samples(sub, config.sample_events, rec.labels)]


def prepare(recordings, config: PrepConfig | None = None) -> PreparedDataset:
    """Build a dataset from recordings, processed one file at a time in the given order.

    Training frames are computed from the raw (unfiltered) sample, so the
    chosen normalization order is what determines the frame; the filtered
    events are what the spiking network sees.
    """
    config = config or PrepConfig()
    frames, labels, rec_id, end_us = [], [], [], []
    ev_t, ev_x, ev_y, lens = [], [], [], []
    meta = []
    for r, rec in enumerate(recordings):
        sub = subsample_stream(rec.stream, config.subsample, dedupe_window_us=config.dedupe_window_us)
        samples = bin_samples(sub, config.sample_events, rec.labels)
        for s in samples:
            frames.append(make_training_frame(s, config.order).astype(np.float32))
            f = filter_outlier_events(s)
            labels.append(int(s.label))
            rec_id.append(r)
            end_us.append(s.end_us)
            ev_t.append(f.events.t)
            ev_x.append(f.events.x)
            ev_y.append(f.events.y)
            lens.append(len(f.events))
        meta.append({
            "name": rec.name,
            "sha256": rec.sha256,
            "n_events": len(rec.stream),
            "n_samples": len(samples),
            "intervals": [[a, b, c.name] for a, b, c in rec.labels.intervals],
        })
    cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)  # noqa: E731
    return PreparedDataset(
        np.array(frames, dtype=np.float32).reshape(-1, *FRAME_SHAPE),
        np.array(labels, dtype=np.uint8),
        cat(ev_t, np.int64), cat(ev_x, np.int16), cat(ev_y, np.int16),
        np.concatenate([[0], np.cumsum(lens)]).astype(np.int64),
        np.array(rec_id, dtype=np.int64),
        np.array(end_us, dtype=np.int64),
        config,
        meta,
    )


def split_recordings(names, fractions=(0.8, 0.1, 0.1)) -> tuple[list, ...]:
    """Deterministic split of recording names into consecutive groups (train, val, test)."""
    names = list(names)
    n = len(names)
    if abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise ConfigError("split fractions must be non-negative and sum to 1")
    bounds = np.rint(np.cumsum([0.0, *fractions]) * n).astype(int)
    return tuple(names[a:b] for a, b in zip(bounds[:-1], bounds[1:]))

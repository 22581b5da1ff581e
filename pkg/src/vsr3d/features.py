"""Spatio-temporal features: every feasible subsequence of a mouth-window
volume is resampled to a uniform length, transformed with an orthonormal
3D-DCT, and reduced to the low-frequency pyramid-mask amplitudes plus the
original subsequence length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from . import VsrError
from .segmentation import RoiVolume


@dataclass(frozen=True)
class SubSequenceSpec:
    start: int
    duration: int

    def __post_init__(self):
        if self.start < 0 or self.duration < 1:
            raise VsrError(f"bad subsequence spec ({self.start}, {self.duration})")


@dataclass
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass(frozen=True)
class TranscriptEntry:
    label: str
    start_ms: int
    end_ms: int


@dataclass
class Transcript:
    entries: list[TranscriptEntry]

    def __post_init__(self):
        prev_end = None
        for e in self.entries:
            if e.start_ms >= e.end_ms:
                raise VsrError(f"transcript entry {e.label} has start >= end")
            if prev_end is not None and e.start_ms < prev_end:
                raise VsrError(f"transcript entries overlap at {e.label}")
            prev_end = e.end_ms

    def labels(self) -> list[str]:
        return [e.label for e in self.entries]


def time_shift(volume: np.ndarray, delta_t_ms: float, fps: float) -> np.ndarray:
    """Delay the volume by delta_t_ms: output frame t samples the input at
    continuous time t - delta_t_ms*fps/1000, linearly interpolated and
    clamped at the sequence boundaries."""
    if delta_t_ms < 0:
        raise VsrError("delta_t_ms must be non-negative")
    volume = np.asarray(volume, dtype=float)
    n = volume.shape[0]
    shift = delta_t_ms * fps / 1000.0
    tau = np.clip(np.arange(n, dtype=float) - shift, 0.0, n - 1.0)
    lo = np.floor(tau).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    frac = (tau - lo).reshape((n,) + (1,) * (volume.ndim - 1))
    return volume[lo] * (1.0 - frac) + volume[hi] * frac


def subtract_sequence_mean(volume: np.ndarray) -> np.ndarray:
    volume = np.asarray(volume, dtype=float)
    if volume.shape[0] < 1:
        raise VsrError("empty volume")
    return volume - volume.mean(axis=0)


def enumerate_subsequences(frame_count: int, min_dur: int, max_dur: int) -> list[SubSequenceSpec]:
    """All (start, duration) windows with min_dur <= d <= min(max_dur, n)
    and start + d <= n, ordered by start then duration."""
    if not 1 <= min_dur <= max_dur:
        raise VsrError("need 1 <= min_dur <= max_dur")
    specs = []
    top = min(max_dur, frame_count)
    for start in range(frame_count):
        for d in range(min_dur, top + 1):
            if start + d <= frame_count:
                specs.append(SubSequenceSpec(start, d))
    return specs


def resample_to_length(subvolume: np.ndarray, length: int = 10) -> np.ndarray:
    """Per-pixel linear interpolation mapping [0, d-1] onto [0, length-1];
    a single frame is replicated."""
    subvolume = np.asarray(subvolume, dtype=float)
    d = subvolume.shape[0]
    if d < 1:
        raise VsrError("empty subsequence")
    if length < 2:
        raise VsrError("target length must be >= 2")
    if d == 1:
        return np.repeat(subvolume, length, axis=0)
    if d == length:
        return subvolume.copy()
    tau = np.arange(length, dtype=float) * (d - 1) / (length - 1)
    lo = np.minimum(np.floor(tau).astype(np.intp), d - 2)
    frac = (tau - lo).reshape((length,) + (1,) * (subvolume.ndim - 1))
    return subvolume[lo] * (1.0 - frac) + subvolume[lo + 1] * frac


def dct3(volume: np.ndarray) -> np.ndarray:
    """Orthonormal type-II DCT along every axis (energy preserving)."""
    volume = np.asarray(volume, dtype=float)
    if volume.ndim != 3 or min(volume.shape) < 1:
        raise VsrError("dct3 expects a non-empty 3D volume")
    return scipy.fft.dctn(volume, type=2, norm="ortho")


def idct3(coeffs: np.ndarray) -> np.ndarray:
    return scipy.fft.idctn(np.asarray(coeffs, dtype=float), type=2, norm="ortho")


def pyramid_mask_indices(s: int) -> list[tuple[int, int, int]]:
    """(i, j, k) triples with i+j+k <= s-1 in lexicographic order; there are
    s(s+1)(s+2)/6 of them."""
    return [
        (i, j, k)
        for i in range(s)
        for j in range(s - i)
        for k in range(s - i - j)
    ]


def pyramid_extract(coeffs: np.ndarray, s: int = 3) -> np.ndarray:
    """Low-frequency amplitudes under the pyramid mask.

    The index triple is (x-frequency, y-frequency, t-frequency); coefficient
    volumes are laid out (t, y, x).
    """
    if s < 1:
        raise VsrError("mask size must be >= 1")
    t_dim, y_dim, x_dim = coeffs.shape
    if s > min(t_dim, y_dim, x_dim):
        raise VsrError(f"mask size {s} exceeds a coefficient dimension {coeffs.shape}")
    return np.array([coeffs[k, j, i] for (i, j, k) in pyramid_mask_indices(s)])


def feature_dimension(s: int) -> int:
    return s * (s + 1) * (s + 2) // 6 + 1


def preprocess_volume(roi: RoiVolume, channel: str, delta_t_ms: float, fps: float) -> np.ndarray:
    """Shared sequence-level preparation: channel selection, time shift,
    per-pixel sequence-mean subtraction."""
    vol = roi.plane(channel)
    return subtract_sequence_mean(time_shift(vol, delta_t_ms, fps))


def featurize_prepared(prepared: np.ndarray, spec: SubSequenceSpec, length: int, s: int) -> np.ndarray:
    if spec.start + spec.duration > prepared.shape[0]:
        raise VsrError(f"subsequence ({spec.start}, {spec.duration}) exceeds volume")
    sub = prepared[spec.start:spec.start + spec.duration]
    coeffs = dct3(resample_to_length(sub, length))
    return np.concatenate([pyramid_extract(coeffs, s), [float(spec.duration)]])


def featurize(roi: RoiVolume, channel: str, delta_t_ms: float, fps: float,
              spec: SubSequenceSpec, length: int = 10, s: int = 3) -> np.ndarray:
    """Feature vector of one subsequence: pyramid-mask DCT amplitudes of the
    length-normalized window plus the original duration in frames."""
    return featurize_prepared(preprocess_volume(roi, channel, delta_t_ms, fps), spec, length, s)


def featurize_many(roi: RoiVolume, channel: str, delta_t_ms: float, fps: float,
                   specs: list[SubSequenceSpec], length: int = 10, s: int = 3,
                   threads: int = 1) -> np.ndarray:
    """Feature matrix for a list of subsequences, rows in spec order."""
    from .util import pmap

    prepared = preprocess_volume(roi, channel, delta_t_ms, fps)
    rows = pmap(lambda sp: featurize_prepared(prepared, sp, length, s), specs, threads)
    k = feature_dimension(s)
    return np.asarray(rows, dtype=float).reshape(len(specs), k)


def fit_standardization(train_matrix: np.ndarray) -> StandardizationStats:
    """Per-dimension population mean/stddev; zero-variance dimensions get
    stddev 1 so they standardize to 0."""
    x = np.asarray(train_matrix, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise VsrError("standardization needs at least 2 training vectors")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return StandardizationStats(mean=mean, std=std)


def standardize(vectors: np.ndarray, stats: StandardizationStats) -> np.ndarray:
    x = np.asarray(vectors, dtype=float)
    if x.shape[-1] != stats.mean.shape[0]:
        raise VsrError("feature dimension does not match standardization stats")
    return (x - stats.mean) / stats.std


def transcript_to_frames(entry_start_ms: float, entry_end_ms: float, fps: float,
                         frame_count: int) -> tuple[int, int]:
    """Frame interval of a transcript entry: floor/ceil of the millisecond
    times, clamped into the sequence with a minimum duration of one frame."""
    start = int(math.floor(entry_start_ms * fps / 1000.0))
    end = int(math.ceil(entry_end_ms * fps / 1000.0))
    if start >= frame_count:
        raise VsrError(f"transcript entry at {entry_start_ms} ms is beyond the video")
    end = min(end, frame_count)
    duration = max(1, end - start)
    if start + duration > frame_count:
        duration = frame_count - start
    return start, duration


def extract_labeled_samples(roi: RoiVolume, transcript: Transcript, kind: str, cfg,
                            threads: int = 1):
    """Labeled feature samples for one video.

    kind selects the class inventory: phoneme/viseme samples span one
    transcript entry, biphone/bi-viseme samples span two consecutive entries
    with a composite "A+B" label.  Viseme kinds pass labels through the
    Jeffers map, dropping HH entries.  Returns (X, labels, spans).
    """
    from .evaluation import JEFFERS_MAP

    if kind not in ("phoneme", "viseme", "biphone", "bi-viseme"):
        raise VsrError(f"unknown sample kind {kind!r}")
    entries = transcript.entries
    if kind in ("viseme", "bi-viseme"):
        mapped = []
        for e in entries:
            if e.label == "HH":
                continue
            if e.label not in JEFFERS_MAP:
                raise VsrError(f"token {e.label!r} has no viseme mapping")
            mapped.append(TranscriptEntry(JEFFERS_MAP[e.label], e.start_ms, e.end_ms))
        entries = mapped
    n = roi.frame_count
    spans, labels = [], []
    if kind in ("phoneme", "viseme"):
        for e in entries:
            start, dur = transcript_to_frames(e.start_ms, e.end_ms, cfg.fps, n)
            spans.append(SubSequenceSpec(start, dur))
            labels.append(e.label)
    else:
        for a, b in zip(entries, entries[1:]):
            start, _ = transcript_to_frames(a.start_ms, a.end_ms, cfg.fps, n)
            end_start, end_dur = transcript_to_frames(b.start_ms, b.end_ms, cfg.fps, n)
            dur = end_start + end_dur - start
            spans.append(SubSequenceSpec(start, dur))
            labels.append(f"{a.label}+{b.label}")
    if not spans:
        return np.zeros((0, feature_dimension(cfg.mask_size))), [], []
    x = featurize_many(roi, cfg.channel, cfg.delta_t_ms, cfg.fps, spans,
                       cfg.uniform_length, cfg.mask_size, threads)
    return x, labels, spans

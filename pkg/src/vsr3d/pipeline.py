"""Stage orchestration shared by the CLI, scripts, and tests."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import VsrError
from .config import PipelineConfig
from .decoder import (build_probability_grid, decode_sequence, expand_biphones,
                      merge_grids)
from .features import extract_labeled_samples, feature_dimension
from .formats import read_transcript, read_video_dir
from .segmentation import (ChannelSet, MouthKeypoints, RoiVolume, SymmetryLine, VideoSequence,
                           cropped_to_original, detect_inner_lower_lip, detect_mouth_corners,
                           build_min_luminance_line, extract_roi, find_symmetry_lines,
                           prepare_frames)
from .svm import MultiClassModel, TrainConfig, train_multiclass
from .util import pmap


@dataclass
class SegmentationResult:
    lines: list[SymmetryLine]
    channels: list[ChannelSet]
    keypoints: MouthKeypoints          # cropped-frame coordinates
    keypoints_original: np.ndarray     # (T, 5): lip_row, left r/c, right r/c
    roi: RoiVolume


def segment_video(video: VideoSequence, cfg: PipelineConfig,
                  force_lip_row: int | None = None, threads: int = 1) -> SegmentationResult:
    """Full segmentation stage: symmetry lines, lip/corner tracking, ROI."""
    lines = find_symmetry_lines(video)
    _, channels = prepare_frames(video, lines)
    lip_rows = detect_inner_lower_lip(channels, force_first_row=force_lip_row)
    lum_lines = np.stack(pmap(
        lambda t: build_min_luminance_line(channels[t], lip_rows[t]),
        range(len(channels)), threads))
    left, right = detect_mouth_corners(channels, lum_lines)
    keypoints = MouthKeypoints(lip_rows=lip_rows, left=left, right=right, lum_lines=lum_lines)
    roi = extract_roi(channels, keypoints, cfg.roi_width, cfg.roi_height)

    center_col = channels[0].lum.shape[1] // 2
    orig = np.empty((len(channels), 5))
    for t, line in enumerate(lines):
        lr, _ = cropped_to_original(line, video.height, lip_rows[t], center_col)
        l_r, l_c = cropped_to_original(line, video.height, left[t, 0], left[t, 1])
        r_r, r_c = cropped_to_original(line, video.height, right[t, 0], right[t, 1])
        orig[t] = (lr, l_r, l_c, r_r, r_c)
    return SegmentationResult(lines=lines, channels=channels, keypoints=keypoints,
                              keypoints_original=orig, roi=roi)


def keypoint_rows(result: SegmentationResult):
    return [
        (t, *result.keypoints_original[t])
        for t in range(result.keypoints_original.shape[0])
    ]


def collect_labeled_features(video_dirs, kind: str, cfg: PipelineConfig,
                             rois: dict | None = None, threads: int = 1):
    """Labeled samples pooled over a list of video directories.

    rois may cache {dir: RoiVolume} from a previous segmentation pass;
    missing entries are segmented on the fly.  Returns (X, labels).
    """
    xs, labels = [], []
    for d in video_dirs:
        d = Path(d)
        roi = (rois or {}).get(d)
        if roi is None:
            video = read_video_dir(d)
            roi = segment_video(video, cfg, threads=threads).roi
        transcript = read_transcript(d / "transcript.txt")
        x, labs, _ = extract_labeled_samples(roi, transcript, kind, cfg, threads=threads)
        if len(labs):
            xs.append(x)
            labels.extend(labs)
    if not xs:
        return np.zeros((0, feature_dimension(cfg.mask_size))), []
    return np.vstack(xs), labels


def train_from_features(x: np.ndarray, labels, cfg: PipelineConfig):
    tc = TrainConfig(c_grid=cfg.c_grid, gamma_grid=cfg.gamma_grid,
                     tolerance=cfg.svm_tolerance, max_passes=cfg.svm_max_passes)
    feature_config = {
        "channel": cfg.channel,
        "deltaTms": cfg.delta_t_ms,
        "l": cfg.uniform_length,
        "s": cfg.mask_size,
    }
    return train_multiclass(x, labels, tc, cv_split=cfg.cv_fraction,
                            feature_config=feature_config)


def decode_roi(roi: RoiVolume, model: MultiClassModel, cfg: PipelineConfig,
               biphone_model: MultiClassModel | None = None, threads: int = 1,
               min_duration: int | None = None, max_duration: int | None = None):
    """Probability grid(s) + duration-constrained decode.

    With a biphone model the two grids are merged into one machine and
    composite segments are expanded afterwards.  Returns (entries, grid).
    """
    lo = cfg.min_duration if min_duration is None else min_duration
    hi = cfg.max_duration if max_duration is None else max_duration
    grid = build_probability_grid(model, roi, lo, hi, cfg.fps, threads)
    if biphone_model is not None:
        bigrid = build_probability_grid(biphone_model, roi, cfg.biphone_min_duration,
                                        cfg.biphone_max_duration, cfg.fps, threads)
        grid = merge_grids([grid, bigrid])
    entries = decode_sequence(grid)
    entries = expand_biphones(entries)
    return entries, grid


@dataclass
class BenchRow:
    frames: int
    timings: dict  # stage -> seconds

    @property
    def total(self) -> float:
        return sum(self.timings.values())


BENCH_STAGES = ("load", "symmetry", "lip", "corners", "roi", "features", "svm", "hmm")


def bench_video(video_dir, model: MultiClassModel, cfg: PipelineConfig) -> BenchRow:
    """Per-stage wall time of the recognition path on one video."""
    timings = {}
    t0 = time.perf_counter()
    video = read_video_dir(video_dir)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lines = find_symmetry_lines(video)
    _, channels = prepare_frames(video, lines)
    timings["symmetry"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lip_rows = detect_inner_lower_lip(channels)
    timings["lip"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lum_lines = np.stack([build_min_luminance_line(channels[t], lip_rows[t])
                          for t in range(len(channels))])
    left, right = detect_mouth_corners(channels, lum_lines)
    timings["corners"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    keypoints = MouthKeypoints(lip_rows=lip_rows, left=left, right=right, lum_lines=lum_lines)
    roi = extract_roi(channels, keypoints, cfg.roi_width, cfg.roi_height)
    timings["roi"] = time.perf_counter() - t0

    from .decoder import PROB_CEIL, PROB_FLOOR, ProbabilityGrid
    from .features import enumerate_subsequences, featurize_many
    from .svm import predict_probability_matrix

    t0 = time.perf_counter()
    specs = enumerate_subsequences(roi.frame_count, cfg.min_duration, cfg.max_duration)
    x = featurize_many(roi, cfg.channel, cfg.delta_t_ms, cfg.fps, specs,
                       cfg.uniform_length, cfg.mask_size)
    timings["features"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    p = np.clip(predict_probability_matrix(model, x), PROB_FLOOR, PROB_CEIL)
    timings["svm"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    n_classes = len(model.class_labels)
    span = cfg.max_duration - cfg.min_duration + 1
    probs = [np.full((roi.frame_count, span), -1.0) for _ in range(n_classes)]
    for row, sp in enumerate(specs):
        for c in range(n_classes):
            probs[c][sp.start, sp.duration - cfg.min_duration] = p[row, c]
    grid = ProbabilityGrid(class_labels=list(model.class_labels),
                           dmin=np.full(n_classes, cfg.min_duration, dtype=int),
                           dmax=np.full(n_classes, cfg.max_duration, dtype=int),
                           frame_count=roi.frame_count, probs=probs)
    decode_sequence(grid)
    timings["hmm"] = time.perf_counter() - t0
    return BenchRow(frames=video.frame_count, timings=timings)


def grid_to_heatmap(grid, label: str) -> np.ndarray:
    """8-bit image of one class's probability grid: start on the x axis,
    duration on the y axis (row 0 = dmin), invalid cells black."""
    if label not in grid.class_labels:
        raise VsrError(f"label {label!r} not in grid ({', '.join(grid.class_labels)})")
    c = grid.class_labels.index(label)
    cells = grid.probs[c]
    img = np.clip(cells, 0.0, 1.0)
    img[cells < 0] = 0.0
    return np.rint(img.T * 255.0).astype(np.uint8)

"""On-disk formats.

Video directory: frame_00000.ppm, frame_00001.ppm, ... (binary P6) plus
manifest.txt with the lines "fps=25" and "frames=N".

RoiVolume (.vsr1): magic "VSR1"; little-endian u32 width, height, frames,
channelCount; f32 little-endian data ordered channel-major, frame-major,
row-major.  Channels are stored in the canonical order
(lum, u, ulum, pseudo_hue, red, green, blue).

Probability grid (.grd1): magic "GRD1"; u32 classCount, frameCount,
maxDuration; per class a u32-length-prefixed UTF-8 label and u32 dmin, dmax;
then one contiguous f32 block in [class][start][duration] order with invalid
cells stored as -1.0.

Transcript: one "LABEL START_MS END_MS" line per entry, integer milliseconds.

Feature matrix CSV: header "start,duration,f0,...,f{k-1}[,label]".

Keypoints CSV: header "frame,lipRow,leftRow,leftCol,rightRow,rightCol",
coordinates in original-video pixels.

Evaluation report CSV: header "id,T,C,S,D,I,acc", one row per sequence, a
TOTAL row (aggregated counts, pooled accuracy) and a MEAN row (mean
per-sequence accuracy).  Confusion CSV: reference labels as rows with a
final DEL column; a final INS row holds insertion counts.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import VsrError
from .config import CHANNEL_NAMES
from .evaluation import ConfusionMatrix
from .features import Transcript, TranscriptEntry
from .segmentation import RoiVolume, VideoSequence


def write_ppm(frame: np.ndarray, path):
    h, w = frame.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(frame, dtype=np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise VsrError(f"{path}: not a binary PPM (P6) file")
    # header: magic, width, height, maxval, separated by whitespace/comments
    pos, fields = 2, []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(f) for f in fields)
    except ValueError:
        raise VsrError(f"{path}: malformed PPM header") from None
    if maxval != 255:
        raise VsrError(f"{path}: only maxval 255 PPM supported")
    raw = data[pos:pos + w * h * 3]
    if len(raw) != w * h * 3:
        raise VsrError(f"{path}: truncated PPM payload")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)


def write_video_dir(video: VideoSequence, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for t in range(video.frame_count):
        write_ppm(video.frames[t], out_dir / f"frame_{t:05d}.ppm")
    fps = video.fps
    fps_text = str(int(fps)) if float(fps).is_integer() else repr(fps)
    (out_dir / "manifest.txt").write_text(f"fps={fps_text}\nframes={video.frame_count}\n",
                                          encoding="ascii")


def read_video_dir(path) -> VideoSequence:
    path = Path(path)
    manifest = path / "manifest.txt"
    if not manifest.is_file():
        raise VsrError(f"{path}: missing manifest.txt")
    fps, frames = None, None
    for line in manifest.read_text(encoding="ascii").splitlines():
        line = line.strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        if key == "fps":
            fps = float(value)
        elif key == "frames":
            frames = int(value)
    if fps is None or frames is None:
        raise VsrError(f"{manifest}: need fps= and frames= lines")
    stack = []
    for t in range(frames):
        frame_path = path / f"frame_{t:05d}.ppm"
        if not frame_path.is_file():
            raise VsrError(f"{path}: missing {frame_path.name}")
        stack.append(read_ppm(frame_path))
    if not stack:
        raise VsrError(f"{path}: zero frames")
    return VideoSequence(frames=np.stack(stack), fps=fps)


def is_video_dir(path) -> bool:
    return (Path(path) / "manifest.txt").is_file()


def write_roi(roi: RoiVolume, path):
    c, t, h, w = roi.data.shape
    with open(path, "wb") as fh:
        fh.write(b"VSR1")
        fh.write(struct.pack("<4I", w, h, t, c))
        fh.write(roi.data.astype("<f4").tobytes())


def read_roi(path, channels: tuple[str, ...] | None = None) -> RoiVolume:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != b"VSR1":
            raise VsrError(f"{path}: bad ROI magic {magic!r}")
        w, h, t, c = struct.unpack("<4I", fh.read(16))
        payload = fh.read()
    expected = c * t * h * w * 4
    if len(payload) != expected:
        raise VsrError(f"{path}: ROI payload has {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4").astype(float).reshape(c, t, h, w)
    if channels is None:
        if c != len(CHANNEL_NAMES):
            raise VsrError(f"{path}: {c} channels but no channel names given")
        channels = tuple(CHANNEL_NAMES)
    elif len(channels) != c:
        raise VsrError(f"{path}: {c} channels do not match names {channels}")
    return RoiVolume(data=data, channels=tuple(channels), scale=1.0)


def write_keypoints_csv(rows, path):
    """rows: (frame, lip_row, left_row, left_col, right_row, right_col)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("frame,lipRow,leftRow,leftCol,rightRow,rightCol\n")
        for frame, lip, lr, lc, rr, rc in rows:
            fh.write(f"{frame},{lip:.3f},{lr:.3f},{lc:.3f},{rr:.3f},{rc:.3f}\n")


def write_transcript(rows, path):
    with open(path, "w", encoding="ascii") as fh:
        for label, start_ms, end_ms in rows:
            fh.write(f"{label} {start_ms} {end_ms}\n")


def read_transcript(path) -> Transcript:
    entries = []
    text = Path(path).read_text(encoding="ascii")
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise VsrError(f"{path}:{ln}: expected 'LABEL START_MS END_MS'")
        try:
            entries.append(TranscriptEntry(parts[0], int(parts[1]), int(parts[2])))
        except ValueError:
            raise VsrError(f"{path}:{ln}: times must be integer milliseconds") from None
    return Transcript(entries=entries)


def write_features_csv(x: np.ndarray, spans, path, labels=None):
    k = x.shape[1] if len(x) else 0
    header = "start,duration," + ",".join(f"f{i}" for i in range(k))
    if labels is not None:
        header += ",label"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for i, span in enumerate(spans):
            row = f"{span.start},{span.duration}," + ",".join(repr(float(v)) for v in x[i])
            if labels is not None:
                row += f",{labels[i]}"
            fh.write(row + "\n")


def read_features_csv(path):
    """Returns (x, labels_or_None, spans as (start, duration))."""
    lines = Path(path).read_text(encoding="ascii").splitlines()
    if not lines:
        raise VsrError(f"{path}: empty features file")
    header = lines[0].split(",")
    has_label = header[-1] == "label"
    n_feat = len(header) - 2 - (1 if has_label else 0)
    if header[:2] != ["start", "duration"] or n_feat < 1:
        raise VsrError(f"{path}: malformed features header")
    x, labels, spans = [], [], []
    for ln, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        parts = line.split(",")
        want = 2 + n_feat + (1 if has_label else 0)
        if len(parts) != want:
            raise VsrError(f"{path}:{ln}: expected {want} columns")
        spans.append((int(parts[0]), int(parts[1])))
        x.append([float(v) for v in parts[2:2 + n_feat]])
        if has_label:
            labels.append(parts[-1])
    return np.array(x, dtype=float), (labels if has_label else None), spans


def write_grid(grid, path):
    with open(path, "wb") as fh:
        fh.write(b"GRD1")
        fh.write(struct.pack("<3I", len(grid.class_labels), grid.frame_count,
                             int(grid.dmax.max())))
        for c, label in enumerate(grid.class_labels):
            blob = label.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<2I", int(grid.dmin[c]), int(grid.dmax[c])))
        for p in grid.probs:
            fh.write(p.astype("<f4").tobytes())


def read_grid(path):
    from .decoder import ProbabilityGrid

    with open(path, "rb") as fh:
        if fh.read(4) != b"GRD1":
            raise VsrError(f"{path}: bad grid magic")
        n_classes, frame_count, _max_d = struct.unpack("<3I", fh.read(12))
        labels, dmin, dmax = [], [], []
        for _ in range(n_classes):
            (ln,) = struct.unpack("<I", fh.read(4))
            labels.append(fh.read(ln).decode("utf-8"))
            lo, hi = struct.unpack("<2I", fh.read(8))
            dmin.append(lo)
            dmax.append(hi)
        probs = []
        for c in range(n_classes):
            span = dmax[c] - dmin[c] + 1
            raw = fh.read(frame_count * span * 4)
            if len(raw) != frame_count * span * 4:
                raise VsrError(f"{path}: truncated grid payload")
            probs.append(np.frombuffer(raw, dtype="<f4").astype(float).reshape(frame_count, span))
    return ProbabilityGrid(class_labels=labels, dmin=np.array(dmin), dmax=np.array(dmax),
                           frame_count=frame_count, probs=probs)


def write_pgm(image: np.ndarray, path):
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def write_groundtruth_csv(truth, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write("frame,symCol,symAngle,lipRow,leftRow,leftCol,rightRow,rightCol\n")
        for t, ft in enumerate(truth.frames):
            fh.write(f"{t},{ft.sym_col:.3f},{ft.sym_angle:.3f},{ft.lip_row:.3f},"
                     f"{ft.left[0]:.3f},{ft.left[1]:.3f},{ft.right[0]:.3f},{ft.right[1]:.3f}\n")


def read_groundtruth_csv(path):
    """Returns arrays (sym_col, sym_angle, lip_row, left, right)."""
    lines = Path(path).read_text(encoding="ascii").splitlines()
    rows = [line.split(",") for line in lines[1:] if line.strip()]
    vals = np.array([[float(v) for v in r[1:]] for r in rows])
    return vals[:, 0], vals[:, 1], vals[:, 2], vals[:, 3:5], vals[:, 5:7]


def write_eval_report(rows, totals, path):
    """rows: (id, AlignmentCounts, accuracy)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("id,T,C,S,D,I,acc\n")
        for sid, c, acc in rows:
            fh.write(f"{sid},{c.T},{c.C},{c.S},{c.D},{c.I},{acc:.6f}\n")
        pooled = (totals.C - totals.I) / totals.T if totals.T else 0.0
        mean = sum(r[2] for r in rows) / len(rows) if rows else 0.0
        fh.write(f"TOTAL,{totals.T},{totals.C},{totals.S},{totals.D},{totals.I},{pooled:.6f}\n")
        fh.write(f"MEAN,,,,,,{mean:.6f}\n")


def write_confusion_csv(confusion: ConfusionMatrix, path):
    with open(path, "w", encoding="ascii") as fh:
        fh.write("," + ",".join(confusion.labels) + ",DEL\n")
        for i, lab in enumerate(confusion.labels):
            cells = ",".join(str(v) for v in confusion.matrix[i])
            fh.write(f"{lab},{cells},{confusion.deletions[i]}\n")
        fh.write("INS," + ",".join(str(v) for v in confusion.insertions) + ",\n")


def find_video_dirs(root) -> list[Path]:
    """The path itself if it is a video directory, else its immediate video
    subdirectories sorted by name."""
    root = Path(root)
    if is_video_dir(root):
        return [root]
    if not root.is_dir():
        raise VsrError(f"{root}: not a directory")
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and is_video_dir(p))
    if not dirs:
        raise VsrError(f"{root}: contains no video directories (manifest.txt)")
    return dirs


def read_label_sequence(path) -> list[str]:
    """Labels of a transcript file, in order."""
    return [e.label for e in read_transcript(path).entries]

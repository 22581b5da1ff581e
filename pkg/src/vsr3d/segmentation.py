"""Mouth-region segmentation.

Finds the facial symmetry line coarse-to-fine over an image pyramid, tracks
the inner-lower-lip row and the mouth corners with Gaussian-transition HMMs,
and resamples a rotation/position/scale-normalized mouth window from every
frame.

Coordinates: (row, col) with row increasing downward.  A symmetry line is
anchored at the vertical image center; positive angles tilt it clockwise.
The line column at row r is column + (r - center_row) * tan(angle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import VsrError
from .config import CHANNEL_NAMES
from .util import round_half_up

CROP_HALF_WIDTH = 50           # columns kept on either side of the symmetry line
MIN_PYRAMID_WIDTH = 20
PYRAMID_RATIO = 0.75
COARSE_ANGLES = range(-10, 11)  # degrees searched exhaustively at the top level
REFINE_COLS = (-2, -1, 0, 1, 2)
REFINE_ANGLES = (-1, 0, 1)
LIP_TRACK_SIGMA = 8.0
CORNER_TRACK_SIGMA = 2.0
LUM_LINE_LENGTH = 81
LIP_SEED_RANGE = (-8, 4)       # rows searched around the lip row for the line seed

# sRGB -> XYZ (D65); rows sum to the D65 white point, so gray maps to u* = 0.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE = _RGB_TO_XYZ.sum(axis=1)
_D65_UN = 4.0 * _WHITE[0] / (_WHITE[0] + 15.0 * _WHITE[1] + 3.0 * _WHITE[2])


@dataclass(frozen=True)
class SymmetryLine:
    column: float
    angle_deg: float


@dataclass
class VideoSequence:
    """Ordered RGB frames, shape (frames, height, width, 3) uint8."""

    frames: np.ndarray
    fps: float = 25.0

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise VsrError("video frames must have shape (T, H, W, 3)")
        if self.frames.shape[0] < 1:
            raise VsrError("video must contain at least one frame")
        if self.fps <= 0:
            raise VsrError("fps must be positive")

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass
class ChannelSet:
    """Per-frame color planes used by the detectors, all (H, W) float64."""

    lum: np.ndarray
    u: np.ndarray
    ulum: np.ndarray
    pseudo_hue: np.ndarray
    red: np.ndarray
    green: np.ndarray
    blue: np.ndarray

    def plane(self, name: str) -> np.ndarray:
        if name not in CHANNEL_NAMES:
            raise VsrError(f"unknown channel {name!r}")
        return getattr(self, name)


@dataclass
class MouthKeypoints:
    """Per-frame mouth keypoints in cropped-frame coordinates."""

    lip_rows: np.ndarray        # (T,)
    left: np.ndarray            # (T, 2) (row, col)
    right: np.ndarray           # (T, 2)
    lum_lines: np.ndarray       # (T, 81, 2) int (row, col)

    @property
    def frame_count(self) -> int:
        return len(self.lip_rows)


@dataclass
class RoiVolume:
    """Normalized mouth window, data shape (channels, frames, H, W)."""

    data: np.ndarray
    channels: tuple[str, ...]
    scale: float

    def __post_init__(self):
        if self.data.ndim != 4:
            raise VsrError("RoiVolume data must be (channels, frames, H, W)")
        if len(self.channels) != self.data.shape[0]:
            raise VsrError("channel name count does not match data")

    @property
    def frame_count(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    def plane(self, name: str) -> np.ndarray:
        try:
            idx = self.channels.index(name)
        except ValueError:
            raise VsrError(f"channel {name!r} not present in ROI volume") from None
        return self.data[idx]


def luminance(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma of an RGB array scaled to [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    return (0.299 * r + 0.587 * g + 0.114 * b) / 255.0


def bilinear_sample(image: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample with bilinear interpolation; coordinates are clamped to the
    image rectangle first (edge replication outside)."""
    h, w = image.shape[:2]
    rows = np.clip(rows, 0.0, h - 1.0)
    cols = np.clip(cols, 0.0, w - 1.0)
    r0 = np.floor(rows).astype(np.intp)
    c0 = np.floor(cols).astype(np.intp)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = rows - r0
    fc = cols - c0
    if image.ndim == 2:
        top = image[r0, c0] * (1 - fc) + image[r0, c1] * fc
        bot = image[r1, c0] * (1 - fc) + image[r1, c1] * fc
        return top * (1 - fr) + bot * fr
    fr = fr[..., None]
    fc = fc[..., None]
    top = image[r0, c0] * (1 - fc) + image[r0, c1] * fc
    bot = image[r1, c0] * (1 - fc) + image[r1, c1] * fc
    return top * (1 - fr) + bot * fr


def area_average_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Exact box-integration resize (each output pixel is the mean of its
    footprint in the input, with fractional edge coverage)."""

    def reduce_rows(arr: np.ndarray, n_out: int) -> np.ndarray:
        n_in = arr.shape[0]
        if n_out == n_in:
            return arr
        cum = np.vstack([np.zeros((1, arr.shape[1])), np.cumsum(arr, axis=0)])
        r = n_in / n_out
        edges = np.minimum(np.arange(n_out + 1) * r, float(n_in))
        i = np.clip(np.floor(edges).astype(np.intp), 0, n_in - 1)
        ints = cum[i] + (edges - i)[:, None] * arr[i]
        return (ints[1:] - ints[:-1]) / r

    out = reduce_rows(np.asarray(image, dtype=float), out_h)
    out = reduce_rows(np.ascontiguousarray(out.T), out_w).T
    return out


def build_image_pyramid(image: np.ndarray) -> list[np.ndarray]:
    """Downsample by 75% per level (area averaging) until the width would
    drop below 20 pixels; level 0 is the input."""
    image = np.asarray(image, dtype=float)
    h, w = image.shape
    if w < MIN_PYRAMID_WIDTH:
        raise VsrError(f"image width {w} is below the usable minimum of {MIN_PYRAMID_WIDTH}")
    levels = [image]
    while True:
        nw = round_half_up(PYRAMID_RATIO * w)
        nh = max(1, round_half_up(PYRAMID_RATIO * h))
        if nw < MIN_PYRAMID_WIDTH:
            break
        levels.append(area_average_resize(levels[-1], nh, nw))
        h, w = nh, nw
    return levels


def symmetry_cost(image: np.ndarray, column: float, angle_deg: float, band: int = 5) -> float:
    """Sum of squared differences between the bands on either side of the
    line.  Pairs sit at perpendicular offsets k - 0.5 (k = 1..band) so exact
    mirror images about pixel or half-pixel centers cost 0.  Rows whose band
    does not fit entirely inside the image are clipped; fewer than 25% valid
    rows yields +inf, and partial sums are rescaled to full-image weight."""
    image = np.asarray(image, dtype=float)
    h, w = image.shape
    theta = math.radians(angle_deg)
    sin_t, cos_t = math.sin(theta), math.cos(theta)
    c_row = (h - 1) / 2.0
    rows = np.arange(h, dtype=float)
    line_cols = column + (rows - c_row) * math.tan(theta)
    offs = (np.arange(1, band + 1) - 0.5)[:, None]  # (band, 1)
    lr = rows[None, :] + offs * sin_t
    lc = line_cols[None, :] - offs * cos_t
    rr = rows[None, :] - offs * sin_t
    rc = line_cols[None, :] + offs * cos_t
    inside = (
        (lr >= 0) & (lr <= h - 1) & (lc >= 0) & (lc <= w - 1)
        & (rr >= 0) & (rr <= h - 1) & (rc >= 0) & (rc <= w - 1)
    )
    valid_rows = inside.all(axis=0)
    n_valid = int(valid_rows.sum())
    if n_valid < 0.25 * h:
        return float("inf")
    left = bilinear_sample(image, lr[:, valid_rows], lc[:, valid_rows])
    right = bilinear_sample(image, rr[:, valid_rows], rc[:, valid_rows])
    return float(np.sum((left - right) ** 2)) * (h / n_valid)


def _best_line(image, columns, angles, band=5, polish=False) -> SymmetryLine:
    best = None
    best_cost = float("inf")
    for col in columns:
        for ang in angles:
            c = symmetry_cost(image, col, ang, band)
            if c < best_cost:
                best_cost = c
                best = SymmetryLine(float(col), float(ang))
    if best is None or not math.isfinite(best_cost):
        raise VsrError("no usable symmetry line (all candidates degenerate)")
    if polish:
        # sub-pixel column: parabolic interpolation of the cost through the
        # winner and its neighbours, clamped to the search window
        lo = symmetry_cost(image, best.column - 1.0, best.angle_deg, band)
        hi = symmetry_cost(image, best.column + 1.0, best.angle_deg, band)
        denom = lo - 2.0 * best_cost + hi
        if math.isfinite(lo) and math.isfinite(hi) and denom > 0:
            delta = 0.5 * (lo - hi) / denom
            col = best.column + min(max(delta, -0.5), 0.5)
            col = min(max(col, min(columns)), max(columns))
            best = SymmetryLine(float(col), best.angle_deg)
    return best


def find_symmetry_lines(video: VideoSequence) -> list[SymmetryLine]:
    """One symmetry line per frame.

    Frame 0 is solved coarse-to-fine: the smallest pyramid level is searched
    exhaustively (all columns, -10..10 degrees), each finer level refines
    within +-2 px / +-1 degree in its own pixel units.  Subsequent frames
    refine the previous line within the same window on the full-size image.
    """
    gray0 = luminance(video.frames[0].astype(float))
    pyramid = build_image_pyramid(gray0)
    smallest = pyramid[-1]
    line = _best_line(smallest, range(smallest.shape[1]), COARSE_ANGLES)
    for lvl in range(len(pyramid) - 2, -1, -1):
        fine = pyramid[lvl]
        ratio = fine.shape[1] / pyramid[lvl + 1].shape[1]
        col0 = (line.column + 0.5) * ratio - 0.5
        line = _best_line(
            fine,
            [col0 + d for d in REFINE_COLS],
            [line.angle_deg + a for a in REFINE_ANGLES],
            polish=(lvl == 0),
        )
    lines = [line]
    for t in range(1, video.frame_count):
        gray = luminance(video.frames[t].astype(float))
        prev = lines[-1]
        lines.append(
            _best_line(
                gray,
                [prev.column + d for d in REFINE_COLS],
                [prev.angle_deg + a for a in REFINE_ANGLES],
            )
        )
    return lines


def _line_frame_vectors(line: SymmetryLine):
    theta = math.radians(line.angle_deg)
    along = np.array([math.cos(theta), math.sin(theta)])   # (drow, dcol) down the line
    perp = np.array([-math.sin(theta), math.cos(theta)])   # unit normal, to the right
    return along, perp


def crop_grid(line: SymmetryLine, height: int):
    """Sampling grid (rows, cols) of the rotated, line-centered crop."""
    along, perp = _line_frame_vectors(line)
    c_row = (height - 1) / 2.0
    t = np.arange(height, dtype=float) - c_row
    k = np.arange(-CROP_HALF_WIDTH, CROP_HALF_WIDTH + 1, dtype=float)
    rows = c_row + t[:, None] * along[0] + k[None, :] * perp[0]
    cols = line.column + t[:, None] * along[1] + k[None, :] * perp[1]
    return rows, cols


def cropped_to_original(line: SymmetryLine, height: int, row: float, col: float):
    """Map a cropped-frame point back into original-image coordinates."""
    along, perp = _line_frame_vectors(line)
    c_row = (height - 1) / 2.0
    t = row - c_row
    k = col - CROP_HALF_WIDTH
    return (
        c_row + t * along[0] + k * perp[0],
        line.column + t * along[1] + k * perp[1],
    )


def compute_channels(rgb01: np.ndarray) -> ChannelSet:
    """Color planes of one frame; rgb01 is (H, W, 3) scaled to [0, 1]."""
    r, g, b = rgb01[..., 0], rgb01[..., 1], rgb01[..., 2]
    lum_raw = 0.299 * r + 0.587 * g + 0.114 * b
    lo, hi = lum_raw.min(), lum_raw.max()
    lum = (lum_raw - lo) / (hi - lo) if hi > lo else np.zeros_like(lum_raw)

    xyz = rgb01 @ _RGB_TO_XYZ.T
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    denom = x + 15.0 * y + 3.0 * z
    with np.errstate(divide="ignore", invalid="ignore"):
        u_prime = np.where(denom > 0, 4.0 * x / np.where(denom > 0, denom, 1.0), _D65_UN)
    yr = y  # Yn = 1 for D65-normalized sRGB
    lstar = np.where(yr > (6.0 / 29.0) ** 3, 116.0 * np.cbrt(yr) - 16.0, (29.0 / 3.0) ** 3 * yr)
    # u* rescaled by 1/255 so every channel plane shares the [~-1, ~1] range
    u = 13.0 * lstar * (u_prime - _D65_UN) / 255.0

    rg = r + g
    pseudo_hue = np.where(rg > 0, r / np.where(rg > 0, rg, 1.0), 0.5)
    return ChannelSet(lum=lum, u=u, ulum=u * lum, pseudo_hue=pseudo_hue, red=r, green=g, blue=b)


def prepare_frames(video: VideoSequence, lines: list[SymmetryLine]):
    """Rotate each frame so its symmetry line is vertical and central, crop
    to +-50 columns, and compute the ChannelSet of every cropped frame.

    Returns (cropped_rgb, channel_sets) with cropped_rgb in [0, 1],
    shape (T, H, 101, 3).
    """
    if len(lines) != video.frame_count:
        raise VsrError("need one symmetry line per frame")
    cropped = np.empty((video.frame_count, video.height, 2 * CROP_HALF_WIDTH + 1, 3))
    channels = []
    for t, line in enumerate(lines):
        rows, cols = crop_grid(line, video.height)
        frame = bilinear_sample(video.frames[t].astype(float) / 255.0, rows, cols)
        cropped[t] = frame
        channels.append(compute_channels(frame))
    return cropped, channels


def _box3(image: np.ndarray) -> np.ndarray:
    """3x3 box filter with edge replication."""
    padded = np.pad(image, 1, mode="edge")
    out = np.zeros_like(image, dtype=float)
    for dr in range(3):
        for dc in range(3):
            out += padded[dr:dr + image.shape[0], dc:dc + image.shape[1]]
    return out / 9.0


def _minmax01(values: np.ndarray, what: str) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        raise VsrError(f"degenerate gradient while detecting {what}")
    return (values - lo) / (hi - lo)


def gaussian_transition_matrix(n: int, sigma: float) -> np.ndarray:
    idx = np.arange(n, dtype=float)
    return np.exp(-((idx[:, None] - idx[None, :]) ** 2) / (2.0 * sigma * sigma))


def detect_inner_lower_lip(channels: list[ChannelSet], force_first_row: int | None = None) -> np.ndarray:
    """Viterbi-track the row where the symmetry column crosses the inner
    lower lip, using the vertical u*lum gradient as observation weights.

    force_first_row pins the frame-0 state (the manual rescue for videos the
    tracker gets wrong).
    """
    from .decoder import viterbi_generic

    if not channels:
        raise VsrError("no frames")
    height = channels[0].ulum.shape[0]
    center = channels[0].ulum.shape[1] // 2
    obs = np.empty((len(channels), height))
    for t, ch in enumerate(channels):
        grad = np.gradient(ch.ulum[:, center])
        obs[t] = _minmax01(grad, "the inner lower lip")
    if force_first_row is not None:
        if not 0 <= force_first_row < height:
            raise VsrError(f"forced lip row {force_first_row} outside frame")
        obs[0] = 0.0
        obs[0, force_first_row] = 1.0
    trans = gaussian_transition_matrix(height, LIP_TRACK_SIGMA)
    priors = np.ones(height)
    path, _ = viterbi_generic(priors, trans, obs)
    return np.asarray(path, dtype=float)


def build_min_luminance_line(channels: ChannelSet, lip_row: float) -> np.ndarray:
    """81-point darkest polyline through the mouth slit.

    Seeded at the darkest smoothed-luminance pixel on the symmetry column
    within rows [lip_row-8, lip_row+4], then grown 40 columns to each side,
    stepping to the darkest of {row-1, row, row+1}; ties prefer staying, then
    the smaller row.  Rows are clamped at the frame boundary.
    """
    smooth = _box3(channels.lum)
    h, w = smooth.shape
    center = w // 2
    lo = int(np.clip(round(lip_row + LIP_SEED_RANGE[0]), 0, h - 1))
    hi = int(np.clip(round(lip_row + LIP_SEED_RANGE[1]), 0, h - 1))
    seed_row = lo + int(np.argmin(smooth[lo:hi + 1, center]))
    half = (LUM_LINE_LENGTH - 1) // 2

    def grow(direction: int) -> list[tuple[int, int]]:
        pts = []
        row, col = seed_row, center
        for _ in range(half):
            col += direction
            candidates = [row, row - 1, row + 1]  # tie order: stay, up, down
            best_row, best_val = None, None
            for cand in candidates:
                cand = min(max(cand, 0), h - 1)
                val = smooth[cand, col]
                if best_val is None or val < best_val:
                    best_row, best_val = cand, val
            row = best_row
            pts.append((row, col))
        return pts

    left = grow(-1)
    right = grow(+1)
    line = list(reversed(left)) + [(seed_row, center)] + right
    return np.array(line, dtype=int)


def detect_mouth_corners(channels: list[ChannelSet], lines: np.ndarray):
    """Track both mouth corners along the minimal-luminance lines.

    The left corner lives on indices 0..40 of each polyline (weights from the
    negated smoothed-luminance gradient), the right corner on 40..80; each is
    tracked by its own Gaussian-transition HMM.  Returns (left, right) arrays
    of (row, col) per frame.
    """
    from .decoder import viterbi_generic

    if len(lines) != len(channels):
        raise VsrError("need one polyline per frame")
    n_frames = len(channels)
    half = (LUM_LINE_LENGTH - 1) // 2
    obs_left = np.empty((n_frames, half + 1))
    obs_right = np.empty((n_frames, half + 1))
    for t, ch in enumerate(channels):
        smooth = _box3(ch.lum)
        pts = lines[t]
        values = smooth[pts[:, 0], pts[:, 1]]
        grad = np.gradient(values)
        obs_left[t] = _minmax01(-grad[: half + 1], "the left mouth corner")
        obs_right[t] = _minmax01(grad[half:], "the right mouth corner")
    trans = gaussian_transition_matrix(half + 1, CORNER_TRACK_SIGMA)
    priors = np.ones(half + 1)
    path_l, _ = viterbi_generic(priors, trans, obs_left)
    path_r, _ = viterbi_generic(priors, trans, obs_right)
    left = np.array([lines[t][path_l[t]] for t in range(n_frames)], dtype=float)
    right = np.array([lines[t][half + path_r[t]] for t in range(n_frames)], dtype=float)
    return left, right


def extract_roi(channels: list[ChannelSet], keypoints: MouthKeypoints,
                roi_width: int = 64, roi_height: int = 48) -> RoiVolume:
    """Resample a mouth window from every cropped frame.

    Each frame is rotated about the corner-line midpoint so the corner line
    is horizontal; one constant scale factor (0.75 * roi_width / the maximum
    corner distance over the sequence) keeps real mouth-width changes in the
    output.  All channel planes are resampled.
    """
    if keypoints.frame_count != len(channels):
        raise VsrError("keypoints do not match frame count")
    d = keypoints.right - keypoints.left
    dists = np.hypot(d[:, 0], d[:, 1])
    max_dist = float(dists.max())
    if max_dist <= 0:
        raise VsrError("zero mouth width in every frame; cannot normalize ROI")
    scale = 0.75 * roi_width / max_dist
    cy, cx = (roi_height - 1) / 2.0, (roi_width - 1) / 2.0
    gy, gx = np.meshgrid(np.arange(roi_height, dtype=float) - cy,
                         np.arange(roi_width, dtype=float) - cx, indexing="ij")
    data = np.empty((len(CHANNEL_NAMES), len(channels), roi_height, roi_width))
    for t, ch in enumerate(channels):
        mid = (keypoints.left[t] + keypoints.right[t]) / 2.0
        if dists[t] > 0:
            ux = d[t, 1] / dists[t]  # along-corner-line unit vector, xy
            uy = d[t, 0] / dists[t]
        else:
            ux, uy = 1.0, 0.0
        # output x axis follows the corner line; y axis its downward normal
        rows = mid[0] + (gx * uy + gy * ux) / scale
        cols = mid[1] + (gx * ux - gy * uy) / scale
        for ci, name in enumerate(CHANNEL_NAMES):
            data[ci, t] = bilinear_sample(ch.plane(name), rows, cols)
    return RoiVolume(data=data, channels=tuple(CHANNEL_NAMES), scale=scale)

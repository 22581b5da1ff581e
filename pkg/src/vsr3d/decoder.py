"""Continuous sequence decoding.

One start state per (class, duration) pair carries the calibrated subsequence
probability raised to the duration-th power; a shared countdown chain of
dummy states (observation weight 1) enforces the exact duration.  A Viterbi
pass over this machine yields the most likely tiling of the video into
labeled segments.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from . import VsrError
from .features import enumerate_subsequences, featurize_many
from .segmentation import RoiVolume
from .svm import MultiClassModel, predict_probability_matrix

PROB_FLOOR = 1e-12
PROB_CEIL = 1.0 - 1e-12


def viterbi_generic(priors, transitions, observations):
    """Most likely state path under unnormalized non-negative weights.

    priors: (n,), transitions: (n, n) with 0 meaning "no edge",
    observations: (steps, n).  Scores are accumulated in log space
    (log 0 = -inf); ties resolve to the smallest state index.  Returns
    (path, log_score); raises if no positive-weight path exists.
    """
    priors = np.asarray(priors, dtype=float)
    transitions = np.asarray(transitions, dtype=float)
    observations = np.asarray(observations, dtype=float)
    if observations.ndim != 2 or observations.shape[0] < 1:
        raise VsrError("observations must be (steps, states) with at least one step")
    n_steps, n_states = observations.shape
    if priors.shape != (n_states,) or transitions.shape != (n_states, n_states):
        raise VsrError("inconsistent HMM dimensions")
    if (priors < 0).any() or (transitions < 0).any() or (observations < 0).any():
        raise VsrError("weights must be non-negative")
    with np.errstate(divide="ignore"):
        log_prior = np.log(priors)
        log_trans = np.log(transitions)
        log_obs = np.log(observations)
    delta = log_prior + log_obs[0]
    back = np.zeros((n_steps, n_states), dtype=np.intp)
    for t in range(1, n_steps):
        scores = delta[:, None] + log_trans
        best_prev = np.argmax(scores, axis=0)          # first max = smallest index
        delta = scores[best_prev, np.arange(n_states)] + log_obs[t]
        back[t] = best_prev
    final = int(np.argmax(delta))
    best = float(delta[final])
    if not np.isfinite(best):
        raise VsrError("no feasible state path (all weights vanish)")
    path = np.empty(n_steps, dtype=np.intp)
    path[-1] = final
    for t in range(n_steps - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best


@dataclass
class ProbabilityGrid:
    """Per-class calibrated probability for each (start, duration) cell.

    probs[c] has shape (frame_count, dmax[c] - dmin[c] + 1); cells whose
    window does not fit in the sequence hold -1.
    """

    class_labels: list[str]
    dmin: np.ndarray
    dmax: np.ndarray
    frame_count: int
    probs: list[np.ndarray]

    def prob(self, c: int, start: int, duration: int) -> float:
        if not self.dmin[c] <= duration <= self.dmax[c]:
            return -1.0
        return float(self.probs[c][start, duration - self.dmin[c]])


def build_probability_grid(model: MultiClassModel, roi: RoiVolume,
                           min_duration: int, max_duration: int,
                           fps: float, threads: int = 1) -> ProbabilityGrid:
    """Classify every feasible subsequence window with every class model.

    Feature extraction parameters come from the model's config echo.
    Probabilities are clamped to [1e-12, 1 - 1e-12].
    """
    cfgd = model.config
    channel = cfgd.get("channel", "red")
    delta_t = float(cfgd.get("deltaTms", 30.0))
    length = int(cfgd.get("l", 10))
    s = int(cfgd.get("s", 3))
    n = roi.frame_count
    specs = enumerate_subsequences(n, min_duration, max_duration)
    n_classes = len(model.class_labels)
    span = max_duration - min_duration + 1
    probs = [np.full((n, span), -1.0) for _ in range(n_classes)]
    if specs:
        x = featurize_many(roi, channel, delta_t, fps, specs, length, s, threads)
        p = np.clip(predict_probability_matrix(model, x), PROB_FLOOR, PROB_CEIL)
        for row, sp in enumerate(specs):
            for c in range(n_classes):
                probs[c][sp.start, sp.duration - min_duration] = p[row, c]
    return ProbabilityGrid(
        class_labels=list(model.class_labels),
        dmin=np.full(n_classes, min_duration, dtype=int),
        dmax=np.full(n_classes, max_duration, dtype=int),
        frame_count=n,
        probs=probs,
    )


def merge_grids(grids: list[ProbabilityGrid]) -> ProbabilityGrid:
    """Concatenate the class axes of grids over the same frame range (used to
    decode phonemes and biphones in one pass)."""
    if not grids:
        raise VsrError("no grids to merge")
    n = grids[0].frame_count
    if any(g.frame_count != n for g in grids):
        raise VsrError("grids cover different frame counts")
    labels = [lab for g in grids for lab in g.class_labels]
    if len(set(labels)) != len(labels):
        raise VsrError("duplicate class labels across grids")
    return ProbabilityGrid(
        class_labels=labels,
        dmin=np.concatenate([g.dmin for g in grids]),
        dmax=np.concatenate([g.dmax for g in grids]),
        frame_count=n,
        probs=[p for g in grids for p in g.probs],
    )


@dataclass
class DurationHmm:
    """Start states (one per class-duration pair) plus a shared dummy
    countdown chain; transitions all carry weight 1."""

    class_specs: list[tuple[str, int, int]]
    transitions: np.ndarray
    priors: np.ndarray
    state_class: np.ndarray     # class index per state, -1 for dummies
    state_duration: np.ndarray  # duration d per start state, countdown k per dummy

    @property
    def n_states(self) -> int:
        return len(self.state_class)

    def start_states(self) -> np.ndarray:
        return np.flatnonzero(self.state_class >= 0)


def build_duration_hmm(class_specs) -> DurationHmm:
    """Connectivity of the shared-dummy duration machine.

    Start state (c, d) with d > 1 has exactly one outgoing edge, to dummy
    d-1.  Dummy k > 1 steps to dummy k-1; dummy 1 and every d = 1 start
    state fan out to all start states.
    """
    class_specs = [(str(lab), int(lo), int(hi)) for lab, lo, hi in class_specs]
    if not class_specs:
        raise VsrError("need at least one class")
    for lab, lo, hi in class_specs:
        if not 1 <= lo <= hi:
            raise VsrError(f"class {lab!r} has invalid duration bounds [{lo}, {hi}]")
    state_class, state_duration = [], []
    for ci, (_, lo, hi) in enumerate(class_specs):
        for d in range(lo, hi + 1):
            state_class.append(ci)
            state_duration.append(d)
    n_start = len(state_class)
    max_d = max(hi for _, _, hi in class_specs)
    n_dummy = max_d - 1
    for k in range(1, n_dummy + 1):  # dummy index k = frames still to wait
        state_class.append(-1)
        state_duration.append(k)
    n = n_start + n_dummy
    state_class = np.array(state_class, dtype=int)
    state_duration = np.array(state_duration, dtype=int)
    trans = np.zeros((n, n))
    start_idx = np.arange(n_start)

    def dummy_index(k: int) -> int:
        return n_start + k - 1

    for i in range(n_start):
        d = state_duration[i]
        if d == 1:
            trans[i, start_idx] = 1.0
        else:
            trans[i, dummy_index(d - 1)] = 1.0
    for k in range(2, n_dummy + 1):
        trans[dummy_index(k), dummy_index(k - 1)] = 1.0
    if n_dummy >= 1:
        trans[dummy_index(1), start_idx] = 1.0
    priors = np.zeros(n)
    priors[start_idx] = 1.0
    return DurationHmm(class_specs=class_specs, transitions=trans, priors=priors,
                       state_class=state_class, state_duration=state_duration)


def decode_sequence(grid: ProbabilityGrid):
    """Most likely exact tiling of [0, frame_count) into labeled segments.

    A start state (c, d) at time t observes grid[c][t][d]**d when the window
    fits (zero otherwise); dummy states observe 1.  The Viterbi state path is
    squeezed into (label, start, duration) entries by dropping dummies.
    """
    hmm = build_duration_hmm(
        [(lab, int(lo), int(hi))
         for lab, lo, hi in zip(grid.class_labels, grid.dmin, grid.dmax)]
    )
    n = grid.frame_count
    obs = np.ones((n, hmm.n_states))
    times = np.arange(n)
    for idx in hmm.start_states():
        c = hmm.state_class[idx]
        d = hmm.state_duration[idx]
        cell = grid.probs[c][:, d - grid.dmin[c]]
        fits = (times + d <= n) & (cell >= 0)
        obs[:, idx] = np.where(fits, np.maximum(cell, 0.0) ** d, 0.0)
    path, _ = viterbi_generic(hmm.priors, hmm.transitions, obs)
    entries = []
    for t, state in enumerate(path):
        c = hmm.state_class[state]
        if c >= 0:
            entries.append((grid.class_labels[c], t, int(hmm.state_duration[state])))
    return entries


def expand_biphones(entries, separator: str = "+"):
    """Split composite "A+B" segments into two: the first part gets
    ceil(d/2) frames, the second the rest.  Single-unit entries pass
    through unchanged."""
    out = []
    for label, start, dur in entries:
        if separator not in label:
            out.append((label, start, dur))
            continue
        parts = label.split(separator)
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise VsrError(f"malformed composite label {label!r}")
        if dur < 2:
            raise VsrError(f"composite segment {label!r} too short to split (duration {dur})")
        first = ceil(dur / 2)
        out.append((parts[0], start, first))
        out.append((parts[1], start + first, dur - first))
    return out


def entries_to_transcript(entries, fps: float):
    """(label, start_frame, duration) -> (label, start_ms, end_ms) rows."""
    rows = []
    for label, start, dur in entries:
        rows.append((label, int(round(start * 1000.0 / fps)),
                     int(round((start + dur) * 1000.0 / fps))))
    return rows

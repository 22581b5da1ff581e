"""Scoring decoded sequences against references.

Hypothesis and reference token sequences are aligned globally with unit
substitution/insertion/deletion costs; the headline accuracy is
(correct - insertions) / reference_length, which the minimum-edit alignment
maximizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from . import VsrError

SILENCE = "sil"

# Jeffers phoneme-to-viseme clusters; HH has no viseme and is dropped.
JEFFERS_MAP = {
    "F": "/A", "V": "/A",
    "OW": "/B", "R": "/B", "W": "/B", "UH": "/B", "UW": "/B", "ER": "/B",
    "B": "/C", "P": "/C", "M": "/C",
    "AW": "/D",
    "DH": "/E", "TH": "/E",
    "CH": "/F", "JH": "/F", "SH": "/F", "ZH": "/F",
    "OY": "/G", "AO": "/G",
    "S": "/H", "Z": "/H",
    "AA": "/I", "AE": "/I", "AH": "/I", "AY": "/I", "EH": "/I",
    "EY": "/I", "IH": "/I", "IY": "/I", "Y": "/I",
    "D": "/J", "L": "/J", "N": "/J", "T": "/J",
    "G": "/K", "K": "/K", "NG": "/K",
    SILENCE: "/L",
}
UNMAPPED_PHONEMES = frozenset({"HH"})


@dataclass
class AlignmentCounts:
    T: int  # reference length
    C: int  # correct
    S: int  # substitutions
    D: int  # deletions
    I: int  # insertions


@dataclass
class ConfusionMatrix:
    labels: list[str]
    matrix: np.ndarray      # (n, n) int, rows = reference, cols = hypothesis
    deletions: np.ndarray   # (n,)
    insertions: np.ndarray  # (n,)


def map_to_visemes(seq) -> list[str]:
    """Replace phoneme tokens with their viseme; HH tokens are removed and
    consecutive identical visemes are kept separate."""
    out = []
    for tok in seq:
        if tok in UNMAPPED_PHONEMES:
            continue
        if tok not in JEFFERS_MAP:
            raise VsrError(f"token {tok!r} has no viseme mapping")
        out.append(JEFFERS_MAP[tok])
    return out


def strip_internal_silence(seq) -> list[str]:
    """Drop silence tokens except a single leading and a single trailing one
    (leading/trailing runs collapse)."""
    seq = list(seq)
    lead = bool(seq) and seq[0] == SILENCE
    trail = bool(seq) and seq[-1] == SILENCE
    core = [tok for tok in seq if tok != SILENCE]
    return ([SILENCE] if lead else []) + core + ([SILENCE] if trail else [])


def align_nw(ref, hyp):
    """Global alignment minimizing substitutions + deletions + insertions
    (matches cost 0).  Backtracking prefers match/substitution, then
    deletion, then insertion.  Returns (AlignmentCounts, pairs) where pairs
    holds (ref_token, hyp_token) with None marking a gap."""
    ref = list(ref)
    hyp = list(hyp)
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=int)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        ci = cost[i]
        cp = cost[i - 1]
        for j in range(1, m + 1):
            diag = cp[j - 1] + (ref[i - 1] != hyp[j - 1])
            ci[j] = min(diag, cp[j] + 1, ci[j - 1] + 1)
    pairs = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            pairs.append((ref[i - 1], hyp[j - 1]))
            i -= 1
            j -= 1
        elif i > 0 and cost[i, j] == cost[i - 1, j] + 1:
            pairs.append((ref[i - 1], None))
            i -= 1
        else:
            pairs.append((None, hyp[j - 1]))
            j -= 1
    pairs.reverse()
    correct = sum(1 for r, h in pairs if r is not None and r == h)
    subs = sum(1 for r, h in pairs if r is not None and h is not None and r != h)
    dels = sum(1 for r, h in pairs if h is None)
    ins = sum(1 for r, h in pairs if r is None)
    return AlignmentCounts(T=n, C=correct, S=subs, D=dels, I=ins), pairs


def accuracy(counts: AlignmentCounts) -> float:
    """(T - S - I - D) / T = (C - I) / T; negative when insertions dominate."""
    if counts.T <= 0:
        raise VsrError("accuracy undefined for an empty reference")
    return (counts.C - counts.I) / counts.T


def confusion_matrix(alignments, labels) -> ConfusionMatrix:
    """Aggregate aligned pairs: (r, h) increments [r][h], a reference gap
    increments the insertion row, a hypothesis gap the deletion column."""
    labels = list(labels)
    index = {lab: i for i, lab in enumerate(labels)}
    n = len(labels)
    matrix = np.zeros((n, n), dtype=int)
    deletions = np.zeros(n, dtype=int)
    insertions = np.zeros(n, dtype=int)
    for pairs in alignments:
        for r, h in pairs:
            if r is not None and r not in index:
                raise VsrError(f"unknown reference token {r!r}")
            if h is not None and h not in index:
                raise VsrError(f"unknown hypothesis token {h!r}")
            if r is None:
                insertions[index[h]] += 1
            elif h is None:
                deletions[index[r]] += 1
            else:
                matrix[index[r], index[h]] += 1
    return ConfusionMatrix(labels=labels, matrix=matrix, deletions=deletions,
                           insertions=insertions)


def t_tail_probability(t: float, df: int) -> float:
    """Upper-tail probability of Student's t (via the regularized incomplete
    beta function)."""
    if df < 1:
        raise VsrError("degrees of freedom must be >= 1")
    return float(special.stdtr(df, -t))


def paired_t_test_one_tailed(acc_a, acc_b) -> tuple[float, float]:
    """One-tailed paired t-test that the accuracies in acc_a exceed those in
    acc_b.  Returns (t, p) with df = n - 1 and sample (n-1) stddev."""
    a = np.asarray(acc_a, dtype=float)
    b = np.asarray(acc_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise VsrError("paired test needs two equal-length vectors")
    n = len(a)
    if n < 2:
        raise VsrError("paired test needs at least 2 pairs")
    diff = a - b
    sd = diff.std(ddof=1)
    if sd == 0:
        raise VsrError("paired test undefined for zero-variance differences")
    t = float(diff.mean() / (sd / np.sqrt(n)))
    return t, t_tail_probability(t, n - 1)


def evaluate_sequences(refs: dict, hyps: dict, strip_ref_silence: bool = True,
                       to_visemes: bool = False):
    """Score hypothesis sequences against references keyed by sequence id.

    Returns (rows, confusion, totals) where rows are
    (id, counts, accuracy) in sorted id order.
    """
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise VsrError(f"missing hypotheses for: {', '.join(missing)}")
    rows = []
    alignments = []
    label_set = []
    for sid in sorted(refs):
        ref = list(refs[sid])
        hyp = list(hyps[sid])
        if to_visemes:
            ref = [tok if tok.startswith("/") else _viseme(tok) for tok in ref]
            ref = [tok for tok in ref if tok is not None]
            hyp = [tok if tok.startswith("/") else _viseme(tok) for tok in hyp]
            hyp = [tok for tok in hyp if tok is not None]
        if strip_ref_silence:
            ref = strip_internal_silence(ref)
        counts, pairs = align_nw(ref, hyp)
        rows.append((sid, counts, accuracy(counts) if counts.T else 0.0))
        alignments.append(pairs)
        for tok in ref + hyp:
            if tok not in label_set:
                label_set.append(tok)
    confusion = confusion_matrix(alignments, label_set)
    totals = AlignmentCounts(
        T=sum(r[1].T for r in rows),
        C=sum(r[1].C for r in rows),
        S=sum(r[1].S for r in rows),
        D=sum(r[1].D for r in rows),
        I=sum(r[1].I for r in rows),
    )
    return rows, confusion, totals


def _viseme(tok: str):
    if tok in UNMAPPED_PHONEMES:
        return None
    if tok not in JEFFERS_MAP:
        raise VsrError(f"token {tok!r} has no viseme mapping")
    return JEFFERS_MAP[tok]

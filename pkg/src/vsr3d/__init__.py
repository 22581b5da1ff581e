"""Visual speech recognition from mouth-region video.

Pipeline: segment the mouth area with symmetry-line search and HMM-tracked
keypoints, extract 3D-DCT features for every feasible subsequence, score them
with probability-calibrated SVMs, and decode the most likely continuous label
sequence with a duration-constrained Viterbi pass.
"""

__version__ = "0.1.0"


class VsrError(Exception):
    """Domain error (bad input data, degenerate signal, malformed file)."""

"""R-peak detection and fixed-length beat alignment.

Simulated traces have dominant R peaks, so detection is amplitude
thresholding plus a refractory spacing; rows of the aligned matrix are
windows of length d with the R peak pinned at a common column.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoBeatsError
from .simulate import RawTrace


@dataclass(frozen=True)
class Delineation:
    """Per-beat fiducial sample indices; only R is required."""

    r: np.ndarray
    p: np.ndarray | None = None
    q: np.ndarray | None = None
    s: np.ndarray | None = None
    t: np.ndarray | None = None

    def __post_init__(self):
        r = np.asarray(self.r, dtype=np.int64)
        r.flags.writeable = False
        object.__setattr__(self, "r", r)
        if r.ndim != 1 or r.size < 1:
            raise ValueError("r must be a non-empty index vector")
        if np.any(np.diff(r) <= 0):
            raise ValueError("r indices must be strictly increasing")
        if r[0] < 0:
            raise ValueError("r indices must be non-negative")

    @property
    def n_beats(self) -> int:
        return self.r.size


def detect_r_peaks(trace: RawTrace, min_rr: float = 0.3) -> Delineation:
    """Locate R peaks: threshold at half the peak-to-median excursion.

    Candidates are strict local maxima above
    ``median + 0.5 (max - median)``; they are accepted greedily by
    amplitude subject to a ``min_rr`` refractory spacing, then returned in
    ascending order. Raises :class:`NoBeatsError` when nothing qualifies.
    """
    x = trace.values
    fs = trace.fs
    if x.size < fs * min_rr:
        raise ValueError("trace shorter than one refractory period")
    median = float(np.median(x))
    threshold = median + 0.5 * (float(x.max()) - median)

    interior = x[1:-1]
    is_peak = (interior > x[:-2]) & (interior >= x[2:]) & (interior > threshold)
    candidates = np.flatnonzero(is_peak) + 1
    if candidates.size == 0:
        raise NoBeatsError("no R peaks found above threshold")

    min_gap = min_rr * fs
    order = np.lexsort((candidates, -x[candidates]))  # amplitude desc, index asc
    kept: list[int] = []
    for idx in candidates[order]:
        if all(abs(int(idx) - k) >= min_gap for k in kept):
            kept.append(int(idx))
    if not kept:
        raise NoBeatsError("no R peaks survive the refractory constraint")
    return Delineation(r=np.sort(np.asarray(kept, dtype=np.int64)))


def align_beats(trace: RawTrace, delineation: Delineation, d: int,
                r_offset: int) -> np.ndarray:
    """Cut the trace into R-aligned rows of length ``d``.

    Beat b occupies ``[r_b - r_offset, r_b - r_offset + d)``; windows that
    would cross the trace boundary are dropped rather than padded (padding
    would corrupt downstream covariance estimates). Raises
    :class:`NoBeatsError` if every beat is dropped.
    """
    d = int(d)
    r_offset = int(r_offset)
    if d < 1:
        raise ValueError("d must be at least 1")
    if not 0 <= r_offset < d:
        raise ValueError("r_offset must satisfy 0 <= r_offset < d")
    x = trace.values
    starts = delineation.r - r_offset
    keep = (starts >= 0) & (starts + d <= x.size)
    starts = starts[keep]
    if starts.size == 0:
        raise NoBeatsError("every beat window crosses the trace boundary")
    cols = starts[:, None] + np.arange(d)
    return x[cols]

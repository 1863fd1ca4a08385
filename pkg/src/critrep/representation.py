"""Discrete codes from hidden activations and their frequency statistics.

A binary code is stored as a ``bytes`` object: unit ``i`` maps to bit
``i`` in little-endian bit order, zero-padded to ``ceil(width/8)``
bytes. Padded bits are always zero, so equality and hashing are
canonical, and comparison is plain byte-sequence order.

The central measured object is the degeneracy spectrum: for every
observed frequency ``k``, the number ``m(k)`` of distinct codes that
occur exactly ``k`` times. Mass conservation ``sum_k k*m(k) == M``
holds exactly (integer counting throughout).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np


def binarize(activations: np.ndarray, threshold: float) -> list[bytes]:
    """One packed code per row: bit i set iff activations[row, i] > threshold.

    Strictly greater-than, so values exactly at the threshold map to 0
    (sigmoid outputs of exactly 0.5 occur for zero pre-activations).
    """
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    activations = np.atleast_2d(np.asarray(activations))
    bits = activations > threshold
    packed = np.packbits(bits, axis=1, bitorder="little")
    return [row.tobytes() for row in packed]


def code_width(activations: np.ndarray) -> int:
    return np.atleast_2d(np.asarray(activations)).shape[1]


@dataclass
class CodeHistogram:
    """Exact multiset count of codes, optionally jointly with labels.

    counts maps code -> frequency k_z; M is the total number of coded
    samples; joint (when labels were supplied) maps (label, code) ->
    joint frequency.
    """

    counts: dict[bytes, int]
    M: int
    width: int = 0
    joint: dict[tuple[int, bytes], int] | None = None

    @property
    def n_distinct(self) -> int:
        return len(self.counts)


@dataclass
class DegeneracySpectrum:
    """Sorted (k, m(k)) pairs with total mass M = sum_k k*m(k)."""

    k: np.ndarray  # ascending distinct frequencies, int64
    m: np.ndarray  # degeneracy of each frequency, int64
    M: int

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.k.tolist(), self.m.tolist()))


def count_codes(codes: list[bytes], labels=None, width: int = 0) -> CodeHistogram:
    """Exact code histogram; joint (label, code) counts when labels given."""
    counts = Counter(codes)
    joint = None
    if labels is not None:
        labels = np.asarray(labels)
        if len(labels) != len(codes):
            raise ValueError(
                f"length mismatch: {len(codes)} codes vs {len(labels)} labels"
            )
        joint = Counter(zip(labels.tolist(), codes))
    return CodeHistogram(
        counts=dict(counts),
        M=len(codes),
        width=width,
        joint=dict(joint) if joint is not None else None,
    )


def degeneracy(h: CodeHistogram) -> DegeneracySpectrum:
    """Invert the histogram: m(k) = number of codes with frequency exactly k."""
    if h.M < 1:
        raise ValueError("empty histogram")
    by_k = Counter(h.counts.values())
    ks = np.array(sorted(by_k), dtype=np.int64)
    ms = np.array([by_k[k] for k in ks], dtype=np.int64)
    mass = int((ks * ms).sum())
    if mass != h.M:
        raise AssertionError(f"mass mismatch: sum k*m(k)={mass} != M={h.M}")
    return DegeneracySpectrum(k=ks, m=ms, M=h.M)


def spectrum_from_sizes(sizes) -> DegeneracySpectrum:
    """Spectrum straight from a list of cluster/code sizes (each >= 1)."""
    sizes = [int(s) for s in sizes if s > 0]
    if not sizes:
        raise ValueError("no nonempty sizes")
    by_k = Counter(sizes)
    ks = np.array(sorted(by_k), dtype=np.int64)
    ms = np.array([by_k[k] for k in ks], dtype=np.int64)
    return DegeneracySpectrum(k=ks, m=ms, M=int(sum(sizes)))


def truncate_spectrum(spec: DegeneracySpectrum, k_max: float) -> DegeneracySpectrum:
    """Drop frequencies above k_max (optional plot-window filter, off by default).

    The returned M still counts only the retained mass.
    """
    keep = spec.k <= k_max
    ks, ms = spec.k[keep], spec.m[keep]
    if ks.size == 0:
        raise ValueError("k_max removed every spectrum point")
    return DegeneracySpectrum(k=ks, m=ms, M=int((ks * ms).sum()))


def log_bin(spec: DegeneracySpectrum, base: float = 1.5):
    """Geometric binning of the spectrum for log-log presentation.

    Bin j covers k in [base**j, base**(j+1)). m_mean is the bin's total
    m divided by the number of integers k the bin spans, so sparse tail
    bins (where most k values are unoccupied) average toward their true
    density instead of plateauing at 1. Bins with no occupied k are
    omitted. Returns (k_center, m_mean) arrays; k_center is the
    geometric mean of the bin's integer k range. The raw spectrum is
    untouched.
    """
    if base <= 1.0:
        raise ValueError("base must be > 1")
    log_base = np.log(base)
    # cover the top bin to its full upper edge so its density is not
    # overestimated by a clipped width
    j_top = int(np.floor(np.log(float(spec.k.max())) / log_base + 1e-12))
    top_edge = int(np.ceil(base ** (j_top + 1) - 1e-12))
    all_k = np.arange(1, top_edge, dtype=np.float64)
    all_idx = np.floor(np.log(all_k) / log_base + 1e-12).astype(np.int64)
    widths = np.bincount(all_idx)
    log_centers = np.zeros(widths.size)
    np.add.at(log_centers, all_idx, np.log(all_k))
    idx = np.floor(np.log(spec.k.astype(np.float64)) / log_base
                   + 1e-12).astype(np.int64)
    sums = np.zeros(widths.size)
    np.add.at(sums, idx, spec.m.astype(np.float64))
    occupied = sums > 0
    centers = np.exp(log_centers[occupied] / widths[occupied])
    means = sums[occupied] / widths[occupied]
    return centers, means


def spectrum_to_csv(spec: DegeneracySpectrum, path) -> None:
    """Raw spectrum as CSV with header ``k,m_k``."""
    with open(path, "w") as fh:
        fh.write("k,m_k\n")
        for k, m in spec.pairs():
            fh.write(f"{k},{m}\n")


def binned_to_csv(k_center: np.ndarray, m_mean: np.ndarray, path) -> None:
    """Log-binned spectrum as CSV with header ``k_center,m_mean``."""
    with open(path, "w") as fh:
        fh.write("k_center,m_mean\n")
        for c, m in zip(k_center, m_mean):
            fh.write(f"{float(c)!r},{float(m)!r}\n")


def spectrum_from_csv(path) -> DegeneracySpectrum:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "k,m_k":
            raise ValueError(f"unexpected spectrum header: {header!r}")
        for line in fh:
            k, m = line.strip().split(",")
            rows.append((int(k), int(m)))
    ks = np.array([r[0] for r in rows], dtype=np.int64)
    ms = np.array([r[1] for r in rows], dtype=np.int64)
    return DegeneracySpectrum(k=ks, m=ms, M=int((ks * ms).sum()))

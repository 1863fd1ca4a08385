"""Information measures over code statistics, and power-law exponent fits.

All entropies are plug-in (maximum-likelihood) estimates in nats.
Undersampling is not corrected for; at the sample sizes used here the
raw counts are what the downstream comparisons consume.

Two independent code paths exist on purpose for the resolution and
relevance measures: the k-summation over a degeneracy spectrum
(`resolution`, `relevance`) and the direct z-summation over a code
histogram (`resolution_from_histogram`, `relevance_from_histogram`).
Tests pin them against each other.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, asdict

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import zeta

from .representation import CodeHistogram, DegeneracySpectrum, log_bin


class FitError(ValueError):
    """Power-law fit is not defined for the given spectrum."""


class DegenerateTailError(FitError):
    """All tail frequencies equal; no exponent to estimate."""


def resolution(spec: DegeneracySpectrum) -> float:
    """H(Z) in k-form: -sum_k (k*m(k)/M) * log(k/M). Range [0, log M]."""
    _require_mass(spec)
    k = spec.k.astype(np.float64)
    m = spec.m.astype(np.float64)
    p = k * m / spec.M
    return float(-(p * np.log(k / spec.M)).sum())


def relevance(spec: DegeneracySpectrum) -> float:
    """H(K): -sum_k (k*m(k)/M) * log(k*m(k)/M). Zero at both degenerate extremes."""
    _require_mass(spec)
    k = spec.k.astype(np.float64)
    m = spec.m.astype(np.float64)
    p = k * m / spec.M
    return float(-(p * np.log(p)).sum())


def resolution_from_histogram(h: CodeHistogram) -> float:
    """H(Z) in z-form: -sum_z (k_z/M) log(k_z/M)."""
    kz = np.array(list(h.counts.values()), dtype=np.float64)
    p = kz / h.M
    return float(-(p * np.log(p)).sum())


def relevance_from_histogram(h: CodeHistogram) -> float:
    """H(K) computed from per-code frequencies without building a spectrum."""
    freq_of_freq = Counter(h.counts.values())
    p = np.array([k * c for k, c in freq_of_freq.items()], dtype=np.float64) / h.M
    return float(-(p * np.log(p)).sum())


def _require_mass(spec: DegeneracySpectrum) -> None:
    if spec.k.size == 0 or spec.M < 1:
        raise ValueError("empty spectrum")
    if int((spec.k * spec.m).sum()) != spec.M:
        raise ValueError("spectrum does not conserve mass")


@dataclass
class InfoSummary:
    """Flat bundle of entropy measures for one histogram (nats)."""

    M: int
    H_Z: float
    H_K: float
    H_Y: float | None = None
    H_YZ: float | None = None
    I_ZY: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def entropies_with_labels(h: CodeHistogram) -> InfoSummary:
    """H(Z), H(K), H(Y), H(Y,Z) and I(Z;Y) = H(Y) + H(Z) - H(Y,Z).

    Requires the histogram's joint (label, code) counts.
    """
    if h.joint is None:
        raise ValueError("histogram carries no joint label counts")
    h_z = resolution_from_histogram(h)
    h_k = relevance_from_histogram(h)
    label_counts = Counter()
    for (y, _z), c in h.joint.items():
        label_counts[y] += c
    py = np.array(list(label_counts.values()), dtype=np.float64) / h.M
    h_y = float(-(py * np.log(py)).sum())
    pyz = np.array(list(h.joint.values()), dtype=np.float64) / h.M
    h_yz = float(-(pyz * np.log(pyz)).sum())
    return InfoSummary(
        M=h.M, H_Z=h_z, H_K=h_k, H_Y=h_y, H_YZ=h_yz, I_ZY=h_y + h_z - h_yz
    )


def summarize(h: CodeHistogram) -> InfoSummary:
    """InfoSummary without label terms (works for unlabeled histograms)."""
    if h.joint is not None:
        return entropies_with_labels(h)
    return InfoSummary(
        M=h.M, H_Z=resolution_from_histogram(h), H_K=relevance_from_histogram(h)
    )


@dataclass
class PowerLawFit:
    """Discrete power-law MLE over the spectrum tail, plus an LS cross-check.

    beta is the exponent in m(k) ~ k^(-beta-1); equivalently the MLE
    treats each code's frequency k as one observation of a discrete
    distribution p(k) ~ k^(-alpha) with alpha = beta + 1 on k >= k_min.
    ls_slope / ls_r2 come from a least-squares line on the log-binned
    spectrum restricted to the same tail (slope estimates -beta-1).
    """

    beta: float
    k_min: int
    ks_distance: float
    n_tail: int
    decades: float
    ls_slope: float
    ls_r2: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


_MIN_TAIL = 10


def _mle_alpha(obs: np.ndarray, k_min: int) -> float:
    """Maximize the discrete power-law likelihood for observations >= k_min."""
    log_sum = np.log(obs).sum()
    n = obs.size

    def neg_loglik(alpha):
        return alpha * log_sum + n * np.log(zeta(alpha, k_min))

    res = minimize_scalar(neg_loglik, bounds=(1.0001, 20.0), method="bounded",
                          options={"xatol": 1e-8})
    return float(res.x)


def _ks_distance(obs: np.ndarray, alpha: float, k_min: int) -> float:
    """Sup distance between empirical and fitted CDFs on the tail support."""
    ks = np.unique(obs)
    emp = np.searchsorted(np.sort(obs), ks, side="right") / obs.size
    z0 = zeta(alpha, k_min)
    model = (z0 - zeta(alpha, ks + 1)) / z0
    return float(np.abs(emp - model).max())


def fit_power_law(spec: DegeneracySpectrum, k_min_candidates=None) -> PowerLawFit:
    """MLE fit of the frequency distribution with KS-selected lower cutoff.

    Observations are per-code: a code with frequency k contributes one
    sample k, with multiplicity m(k). Candidate cutoffs are the distinct
    frequencies (or `k_min_candidates`); each cutoff is scored by the
    KS distance of its tail fit and the minimizer wins, subject to the
    tail keeping at least 10 observations and 2 distinct values.
    """
    if spec.k.size < 2:
        raise DegenerateTailError("all code frequencies are equal")
    if spec.k.size < 10:
        raise FitError(f"need >= 10 distinct frequencies, got {spec.k.size}")
    obs = np.repeat(spec.k, spec.m).astype(np.float64)
    candidates = spec.k if k_min_candidates is None else np.asarray(k_min_candidates)
    best = None
    for k_min in candidates:
        tail = obs[obs >= k_min]
        if tail.size < _MIN_TAIL or np.unique(tail).size < 2:
            continue
        alpha = _mle_alpha(tail, int(k_min))
        dist = _ks_distance(tail, alpha, int(k_min))
        if best is None or dist < best[0]:
            best = (dist, int(k_min), alpha, tail.size)
    if best is None:
        if np.unique(obs).size < 2:
            raise DegenerateTailError("all code frequencies are equal")
        raise FitError("no cutoff leaves a fittable tail")
    dist, k_min, alpha, n_tail = best
    k_max = int(spec.k.max())
    ls_slope, ls_r2 = _binned_ls(spec, k_min)
    return PowerLawFit(
        beta=alpha - 1.0,
        k_min=k_min,
        ks_distance=dist,
        n_tail=n_tail,
        decades=float(np.log10(k_max / k_min)),
        ls_slope=ls_slope,
        ls_r2=ls_r2,
    )


def _binned_ls(spec: DegeneracySpectrum, k_min: int, base: float = 1.5):
    """Least-squares slope/R^2 of log m(k) vs log k on the log-binned tail."""
    keep = spec.k >= k_min
    tail = DegeneracySpectrum(k=spec.k[keep], m=spec.m[keep],
                              M=int((spec.k[keep] * spec.m[keep]).sum()))
    centers, means = log_bin(tail, base=base)
    if centers.size < 3:
        return float("nan"), float("nan")
    x = np.log(centers)
    y = np.log(means)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = ((y - pred) ** 2).sum()
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return float(slope), float(r2)

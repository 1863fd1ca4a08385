"""Constrained entropy maximization over cluster-size distributions.

The variational problem: over distributions p(k) on the discrete
support k = 1..K_max (p(k) = k*m(k)/M is the probability that a sample
sits in a cluster of size k), maximize

    G(p) = -sum_k p(k) log p(k)  -  beta * sum_k p(k) log(k/M)

i.e. size-variability entropy plus beta times the resolution term, with
normalization handled by explicit renormalization (the multiplier for
it is absorbed into the normalizer). The stationary point is the power
law p(k) ~ k^(-beta), equivalently m(k) ~ k^(-beta-1).

Both a closed-form and an independent iterative solver (mirror ascent
on the simplex from a uniform start) are provided so each can check the
other. The continuous variational calculus is discretized here; slope
measurements stay away from boundary bins via the log-binned fit.

Supervised variant: the label-dependent terms of the accuracy
constraint (H(Y) and H(Y,Z)) do not depend on m(k), so its stationarity
condition reduces to the same one solved here; no separate solver
exists. The degenerate pure-clustering case is beta = 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np


class ConvergenceError(RuntimeError):
    """Iterative solver failed to reach tolerance within its budget."""


@dataclass
class MaxEntProblem:
    """Support/mass description plus either a fixed beta or a target R.

    k_max: largest cluster size considered (support 1..k_max).
    M: total sample mass (enters through log(k/M)).
    beta: Lagrange multiplier, fixed-beta mode.
    R: target resolution H(Z) in nats, fixed-resolution mode.
    """

    k_max: int
    M: int
    beta: float | None = None
    R: float | None = None

    def __post_init__(self):
        if self.k_max < 2:
            raise ValueError("k_max must be >= 2")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.R is not None and not 0.0 < self.R < np.log(self.M):
            raise ValueError("R must satisfy 0 < R < log M")


def closed_form(p: MaxEntProblem) -> np.ndarray:
    """Analytic stationary distribution p(k) ~ k^(-beta), normalized."""
    if p.beta is None or not np.isfinite(p.beta):
        raise ValueError("closed_form needs a finite beta")
    k = np.arange(1, p.k_max + 1, dtype=np.float64)
    logw = -p.beta * np.log(k)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def solve_iterative(p: MaxEntProblem, step: float = 0.5, tol: float = 1e-13,
                    max_iters: int = 20000) -> np.ndarray:
    """Mirror ascent on the simplex from a uniform start.

    Multiplicative update p <- p * exp(step * grad G), renormalized each
    iterate; stops when the largest relative per-component change drops
    below tol (relative, so tail components converge as tightly as the
    head). Independent of `closed_form` beyond sharing the objective.
    """
    if p.beta is None or not np.isfinite(p.beta):
        raise ValueError("solve_iterative needs a finite beta")
    k = np.arange(1, p.k_max + 1, dtype=np.float64)
    energy = np.log(k / p.M)
    dist = np.full(p.k_max, 1.0 / p.k_max)
    for _ in range(max_iters):
        grad = -np.log(dist) - 1.0 - p.beta * energy
        logd = np.log(dist) + step * grad
        logd -= logd.max()
        new = np.exp(logd)
        new /= new.sum()
        delta = np.abs((new - dist) / new).max()
        dist = new
        if delta < tol:
            return dist
    raise ConvergenceError(
        f"mirror ascent did not reach {tol} in {max_iters} iterations"
    )


def solve_fixed_beta(p: MaxEntProblem):
    """Both solution paths for a fixed beta: (closed form, iterative)."""
    return closed_form(p), solve_iterative(p)


def distribution_resolution(dist: np.ndarray, M: int) -> float:
    """H(Z) of a size distribution: -sum_k p(k) log(k/M)."""
    k = np.arange(1, dist.size + 1, dtype=np.float64)
    return float(-(dist * np.log(k / M)).sum())


def attainable_resolution_range(k_max: int, M: int) -> tuple[float, float]:
    """(min, max) H(Z) over the support: all mass at k_max vs all at k=1."""
    return float(np.log(M / k_max)), float(np.log(M))


def solve_fixed_resolution(p: MaxEntProblem, tol: float = 1e-9,
                           bracket: tuple[float, float] = (-20.0, 20.0)):
    """Bisection on beta until the fixed-beta solution hits H(Z) = R.

    Returns (beta, distribution). H(Z) of the solution is increasing in
    beta, so plain bisection applies; the bracket expands (up to 2^6x)
    if R's beta lies outside the default [-20, 20].
    """
    if p.R is None:
        raise ValueError("solve_fixed_resolution needs a target R")
    lo_r, hi_r = attainable_resolution_range(p.k_max, p.M)
    if not lo_r < p.R < hi_r:
        raise ValueError(
            f"R={p.R} outside attainable range ({lo_r}, {hi_r}) for this support"
        )

    def res_at(beta: float) -> float:
        return distribution_resolution(
            closed_form(MaxEntProblem(p.k_max, p.M, beta=beta)), p.M
        )

    lo, hi = bracket
    for _ in range(6):
        if res_at(lo) <= p.R:
            break
        lo *= 2.0
    for _ in range(6):
        if res_at(hi) >= p.R:
            break
        hi *= 2.0
    if res_at(lo) > p.R or res_at(hi) < p.R:
        raise ValueError(f"R={p.R} not bracketed even by beta in [{lo}, {hi}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if res_at(mid) < p.R:
            lo = mid
        else:
            hi = mid
        if abs(res_at(mid) - p.R) < tol:
            beta = mid
            break
    else:
        beta = 0.5 * (lo + hi)
        if abs(res_at(beta) - p.R) >= tol:
            raise ConvergenceError("bisection on beta did not reach tolerance")
    return beta, closed_form(MaxEntProblem(p.k_max, p.M, beta=beta))


def verify_stationarity(dist: np.ndarray, beta: float, M: int) -> float:
    """Max pointwise residual of log p(k) + beta*log(k/M) = const."""
    if np.any(dist <= 0.0):
        raise ValueError("stationarity check needs strictly positive mass")
    k = np.arange(1, dist.size + 1, dtype=np.float64)
    r = np.log(dist) + beta * np.log(k / M)
    return float(np.abs(r - r.mean()).max())


@dataclass
class ThermoView:
    """Thermodynamic reading of a solution: U = H(Z), S = H(K), F = U - T*S.

    T_eff = -1/beta; undefined (inf) at beta = 0. With the objective
    G = S + beta*U, the identity F = G/beta holds, so the solution is an
    extremum of F among distributions at matched T_eff: a minimum for
    beta < 0 (positive T_eff) and a maximum for beta > 0.
    """

    U: float
    S: float
    T_eff: float
    F: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def thermo_view(dist: np.ndarray, beta: float, M: int) -> ThermoView:
    dist = np.asarray(dist, dtype=np.float64)
    if abs(dist.sum() - 1.0) > 1e-9:
        raise ValueError("distribution must be normalized")
    k = np.arange(1, dist.size + 1, dtype=np.float64)
    u = float(-(dist * np.log(k / M)).sum())
    nz = dist[dist > 0.0]
    s = float(-(nz * np.log(nz)).sum())
    t_eff = float("-inf") if beta == 0.0 else -1.0 / beta
    f = u - t_eff * s if np.isfinite(t_eff) else float("nan")
    if beta != 0.0:
        lagrangian = s + beta * u
        if abs(f - lagrangian / beta) > 1e-10 * max(1.0, abs(f)):
            raise AssertionError("free-energy identity F = (S + beta*U)/beta failed")
    return ThermoView(U=u, S=s, T_eff=t_eff, F=f)


def solved_spectrum(dist: np.ndarray, M: int) -> np.ndarray:
    """Implied degeneracy shape m(k) = M * p(k) / k (continuous, unnormalized)."""
    k = np.arange(1, dist.size + 1, dtype=np.float64)
    return M * dist / k


def loglog_slope(dist: np.ndarray, M: int) -> float:
    """Regression slope of log m(k) vs log k over the full support."""
    k = np.arange(1, dist.size + 1, dtype=np.float64)
    m = solved_spectrum(dist, M)
    return float(np.polyfit(np.log(k), np.log(m), 1)[0])

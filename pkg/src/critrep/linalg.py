"""Dense matrix helpers, activations, and a deterministic seedable RNG.

Matrices throughout this package are plain 2-D float64 numpy arrays in
row-major (C) order, with rows indexing samples and columns indexing
features/units. No wrapper type: shape checks happen at the operation
boundaries that need them.

The random generator is a counter-based splitmix64 stream, implemented
here (rather than taken from numpy) so the exact draw sequence is a
documented, portable algorithm:

    counter_i = seed + i * 0x9E3779B97F4A7C15        (mod 2^64, i >= 1)
    output_i  = mix(counter_i)

where ``mix`` is the splitmix64 finalizer (xor-shift 30, multiply
0xBF58476D1CE4E5B9, xor-shift 27, multiply 0x94D049BB133111EB,
xor-shift 31). Uniform doubles are ``(output >> 11) * 2**-53`` in
[0, 1); normals come from Box-Muller pairs; permutations sort 64-bit
keys. Identical seeds therefore give identical streams regardless of
how draws are chunked.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX_A = np.uint64(0xBF58476D1CE4E5B9)
_MIX_B = np.uint64(0x94D049BB133111EB)
# jump stride: 2**40 counter increments, for non-overlapping parallel streams
_JUMP = np.uint64((0x9E3779B97F4A7C15 * (1 << 40)) % (1 << 64))


def _mix64(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * _MIX_A
    x = (x ^ (x >> np.uint64(27))) * _MIX_B
    return x ^ (x >> np.uint64(31))


class Rng:
    """Seedable deterministic generator (counter-based splitmix64).

    Single-owner by convention: do not share one instance across
    threads. For independent parallel streams take `jumped(i)` clones,
    which are offset by ``i * 2**40`` draws.
    """

    def __init__(self, seed: int):
        self._state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)

    def raw(self, n: int) -> np.ndarray:
        """Next `n` raw 64-bit outputs as a uint64 array."""
        if n < 0:
            raise ValueError("draw count must be nonnegative")
        counters = self._state + _GAMMA * np.arange(1, n + 1, dtype=np.uint64)
        if n:
            self._state = counters[-1]
        return _mix64(counters)

    def uniforms(self, n: int) -> np.ndarray:
        """Next `n` doubles uniform on [0, 1)."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def normals(self, n: int) -> np.ndarray:
        """Next `n` standard normal doubles (Box-Muller on uniform pairs)."""
        m = (n + 1) // 2
        u1 = 1.0 - self.uniforms(m)  # (0, 1], keeps log() finite
        u2 = self.uniforms(m)
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        return out[:n]

    def integers(self, n: int, bound: int) -> np.ndarray:
        """Next `n` integers uniform on [0, bound) as int64.

        Uses floor(u * bound); the modulo-style bias is < bound/2**53
        and irrelevant at the bounds used here.
        """
        return np.floor(self.uniforms(n) * bound).astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic random permutation of range(n) (sort by 64-bit key)."""
        return np.argsort(self.raw(n), kind="stable")

    def bernoulli(self, p: np.ndarray) -> np.ndarray:
        """Independent 0/1 draws with success probabilities `p` (elementwise)."""
        p = np.asarray(p, dtype=np.float64)
        u = self.uniforms(p.size).reshape(p.shape)
        return (u < p).astype(np.float64)

    def jumped(self, i: int = 1) -> "Rng":
        """Clone offset by ``i * 2**40`` draws, for parallel streams."""
        out = Rng(0)
        out._state = self._state + _JUMP * np.uint64(i)
        return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit conformability check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects 2-D matrices")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})"
        )
    return a @ b


def sigmoid(m: np.ndarray) -> np.ndarray:
    """Elementwise 1/(1+exp(-v)), computed stably for large |v|."""
    m = np.asarray(m, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    ez = np.exp(m[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def relu(m: np.ndarray) -> np.ndarray:
    """Elementwise max(0, v)."""
    return np.maximum(np.asarray(m, dtype=np.float64), 0.0)


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for stability."""
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax (max-subtracted log-sum-exp)."""
    m = np.asarray(m, dtype=np.float64)
    shifted = m - m.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def check_finite(m: np.ndarray, context: str) -> np.ndarray:
    """Raise FloatingPointError naming `context` if any entry is NaN/Inf."""
    if not np.isfinite(m).all():
        raise FloatingPointError(f"non-finite values in {context}")
    return m

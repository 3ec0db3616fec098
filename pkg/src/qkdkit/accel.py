"""Hot numeric kernels: numba @njit implementations with pure-numpy fallbacks.

The backend is selected once at import time. Setting QKDKIT_DISABLE_NUMBA=1
(or true/yes/on) forces the numpy path; a missing numba install falls back
with a warning. Both paths are bit-identical for identical inputs because
all randomness is drawn outside the kernels; `benchmarks/bench_kernels.py`
compares their throughput.

Kernels:
  toeplitz_gf2(x, s, m)       GF(2) Toeplitz matrix-vector product
  bb84_outcomes(match, cu, eu, p_det, q)  fused per-pulse click/sift/error pass
"""

from __future__ import annotations

import os
import warnings

import numpy as np

__all__ = ["BACKEND", "HAVE_NUMBA", "toeplitz_gf2", "bb84_outcomes"]

_DISABLED = os.environ.get("QKDKIT_DISABLE_NUMBA", "").strip().lower() in {
    "1",
    "true",
    "yes",
    "on",
}

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False
    if not _DISABLED:
        warnings.warn("numba unavailable; falling back to pure-numpy kernels")


# --- pure numpy implementations -------------------------------------------

# Above this operation count np.convolve's O(n*m) direct product loses to
# FFT convolution; 0/1 sequences of length < ~1e7 round exactly in float64.
_DIRECT_CONV_LIMIT = 1 << 22


def toeplitz_gf2_numpy(x: np.ndarray, s: np.ndarray, m: int) -> np.ndarray:
    """y[j] = XOR_i x[i] AND s[j - i + n - 1], j in [0, m)."""
    n = x.size
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    if n * m <= _DIRECT_CONV_LIMIT:
        conv = np.convolve(x.astype(np.int64), s.astype(np.int64))
    else:
        size = n + s.size - 1
        fx = np.fft.rfft(x.astype(np.float64), size)
        fs = np.fft.rfft(s.astype(np.float64), size)
        conv = np.rint(np.fft.irfft(fx * fs, size)).astype(np.int64)
    return (conv[n - 1 : n - 1 + m] & 1).astype(np.uint8)


def bb84_outcomes_numpy(
    match: np.ndarray,
    click_u: np.ndarray,
    error_u: np.ndarray,
    p_det: float,
    q_err: float,
) -> tuple[np.ndarray, np.ndarray]:
    """(sifted mask, error mask) given basis matches and per-pulse uniforms."""
    clicked = click_u < p_det
    sifted = clicked & match.astype(bool)
    errors = sifted & (error_u < q_err)
    return sifted, errors


# --- numba implementations --------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _toeplitz_gf2_packed(xw, sw, n_words, m, out):  # pragma: no cover - jitted
        for j in range(m):
            word = j >> 6
            r = j & 63
            acc = np.uint64(0)
            if r == 0:
                for w in range(n_words):
                    acc ^= xw[w] & sw[word + w]
            else:
                lo = np.uint64(r)
                hi = np.uint64(64 - r)
                for w in range(n_words):
                    window = (sw[word + w] >> lo) | (sw[word + w + 1] << hi)
                    acc ^= xw[w] & window
            acc ^= acc >> np.uint64(32)
            acc ^= acc >> np.uint64(16)
            acc ^= acc >> np.uint64(8)
            acc ^= acc >> np.uint64(4)
            acc ^= acc >> np.uint64(2)
            acc ^= acc >> np.uint64(1)
            out[j] = np.uint8(acc & np.uint64(1))

    def toeplitz_gf2_numba(x: np.ndarray, s: np.ndarray, m: int) -> np.ndarray:
        n = x.size
        if m == 0:
            return np.zeros(0, dtype=np.uint8)
        # pack bits LSB-first into uint64 words; x is reversed so that the
        # product becomes a sliding AND-parity window over s
        x_rev = x[::-1].astype(np.uint8)
        n_words = (n + 63) >> 6
        xw = np.zeros(n_words, dtype=np.uint64)
        idx = np.nonzero(x_rev)[0]
        np.bitwise_or.at(
            xw, idx >> 6, np.left_shift(np.uint64(1), (idx & 63).astype(np.uint64))
        )
        s_words_needed = ((m - 1) >> 6) + n_words + 2
        sw = np.zeros(s_words_needed, dtype=np.uint64)
        sidx = np.nonzero(s.astype(np.uint8))[0]
        np.bitwise_or.at(
            sw, sidx >> 6, np.left_shift(np.uint64(1), (sidx & 63).astype(np.uint64))
        )
        out = np.empty(m, dtype=np.uint8)
        _toeplitz_gf2_packed(xw, sw, n_words, m, out)
        return out

    @njit(cache=True)
    def _bb84_outcomes_loop(match, click_u, error_u, p_det, q_err, sifted, errors):
        # pragma: no cover - jitted
        for i in range(match.size):
            s = match[i] and (click_u[i] < p_det)
            sifted[i] = s
            errors[i] = s and (error_u[i] < q_err)

    def bb84_outcomes_numba(
        match: np.ndarray,
        click_u: np.ndarray,
        error_u: np.ndarray,
        p_det: float,
        q_err: float,
    ) -> tuple[np.ndarray, np.ndarray]:
        n = match.size
        sifted = np.empty(n, dtype=np.bool_)
        errors = np.empty(n, dtype=np.bool_)
        _bb84_outcomes_loop(
            match.astype(np.bool_), click_u, error_u, p_det, q_err, sifted, errors
        )
        return sifted, errors


if HAVE_NUMBA and not _DISABLED:
    BACKEND = "numba"
    toeplitz_gf2 = toeplitz_gf2_numba
    bb84_outcomes = bb84_outcomes_numba
else:
    BACKEND = "numpy"
    toeplitz_gf2 = toeplitz_gf2_numpy
    bb84_outcomes = bb84_outcomes_numpy

"""Array kernels used by log analysis and fault verification.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
fallback. Set ``RTNAND_DISABLE_JIT=1`` to force the numpy path (useful where
numba is unavailable or compile latency matters more than throughput).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("RTNAND_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes")

try:
    import numba as nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    nb = None

USE_NUMBA = nb is not None and not _DISABLED


# -- numpy fallbacks ---------------------------------------------------------

def _np_popcount_xor(a: np.ndarray, b: np.ndarray) -> int:
    return int(np.bitwise_count(np.bitwise_xor(a, b)).sum())


def _np_first_overlap(starts: np.ndarray, ends: np.ndarray) -> int:
    # Intervals are half-open and pre-sorted by start.
    if len(starts) < 2:
        return -1
    running_end = np.maximum.accumulate(ends[:-1])
    hits = np.nonzero(starts[1:] < running_end)[0]
    return int(hits[0]) + 1 if len(hits) else -1


def _np_deviation_pct(observed: np.ndarray, reference: np.ndarray) -> np.ndarray:
    out = np.zeros(len(observed), dtype=np.float64)
    ref = reference.astype(np.float64)
    obs = observed.astype(np.float64)
    mask = ref > 0
    out[mask] = np.abs(obs[mask] - ref[mask]) / ref[mask] * 100.0
    return out


# -- numba kernels -----------------------------------------------------------

if nb is not None:

    _BITS = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)

    @nb.njit(cache=True)
    def _nb_popcount_xor(a, b):
        total = 0
        for i in range(a.shape[0]):
            total += _BITS[a[i] ^ b[i]]
        return total

    @nb.njit(cache=True)
    def _nb_first_overlap(starts, ends):
        n = starts.shape[0]
        if n < 2:
            return -1
        running_end = ends[0]
        for i in range(1, n):
            if starts[i] < running_end:
                return i
            if ends[i] > running_end:
                running_end = ends[i]
        return -1

    @nb.njit(cache=True)
    def _nb_deviation_pct(observed, reference):
        n = observed.shape[0]
        out = np.zeros(n, dtype=np.float64)
        for i in range(n):
            ref = float(reference[i])
            if ref > 0.0:
                out[i] = abs(float(observed[i]) - ref) / ref * 100.0
        return out


IMPLEMENTATIONS = {"numpy": (_np_popcount_xor, _np_first_overlap, _np_deviation_pct)}
if nb is not None:
    IMPLEMENTATIONS["numba"] = (_nb_popcount_xor, _nb_first_overlap, _nb_deviation_pct)

_ACTIVE = IMPLEMENTATIONS["numba" if USE_NUMBA else "numpy"]


def popcount_xor(a: bytes | np.ndarray, b: bytes | np.ndarray) -> int:
    """Number of differing bits between two equal-length buffers."""
    av = np.frombuffer(a, dtype=np.uint8) if isinstance(a, (bytes, bytearray)) else a
    bv = np.frombuffer(b, dtype=np.uint8) if isinstance(b, (bytes, bytearray)) else b
    if av.shape != bv.shape:
        raise ValueError("buffers differ in length")
    return int(_ACTIVE[0](av, bv))


def first_overlap(starts: np.ndarray, ends: np.ndarray) -> int:
    """Index of the first interval overlapping an earlier one, or -1.

    ``starts`` must be sorted ascending; intervals are half-open.
    """
    return int(_ACTIVE[1](np.ascontiguousarray(starts, dtype=np.int64),
                          np.ascontiguousarray(ends, dtype=np.int64)))


def deviation_pct(observed: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Per-element ``|observed - reference| / reference`` in percent (0 where reference is 0)."""
    return _ACTIVE[2](np.ascontiguousarray(observed, dtype=np.int64),
                      np.ascontiguousarray(reference, dtype=np.int64))


def warmup() -> None:
    """Trigger JIT compilation so a real-time run never pays for it."""
    z = np.zeros(8, dtype=np.uint8)
    i = np.zeros(2, dtype=np.int64)
    popcount_xor(z, z)
    first_overlap(i, i)
    deviation_pct(i, i + 1)

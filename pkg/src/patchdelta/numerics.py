"""Dense-matrix substrate: conventions, seeded RNG, and allocation tracking.

A "matrix" throughout this package is a plain 2-D numpy array, row-major,
float64 on every training and test path (float32 is permitted on
benchmark-only paths).  numpy supplies the arithmetic; this module pins the
conventions everything else relies on:

* finiteness is surfaced, never propagated silently (``ensure_finite``),
* weights are initialised uniformly in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
  from a seeded generator,
* all randomness flows through ``make_rng`` (PCG64, so identical seeds give
  identical streams across runs and platforms),
* large compute buffers can be registered with a live-byte counting tracker
  so the benchmark harness can report peak transient allocation.
"""

from __future__ import annotations

import weakref
from contextlib import contextmanager

import numpy as np

from .errors import NumericError


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator; same seed, same stream, any platform."""
    return np.random.Generator(np.random.PCG64(seed))


def ensure_finite(arr: np.ndarray, context: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {context}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit dimension checking."""
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return ensure_finite(a @ b, "matmul result")


_SIGMOID_LO = np.finfo(np.float64).tiny
_SIGMOID_HI = 1.0 - np.finfo(np.float64).epsneg


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Elementwise 1/(1+exp(-x)), numerically stable on both tails.

    Outputs are nudged inside the open interval (0, 1): beyond |x| ~ 37 the
    exact value rounds to 0.0 or 1.0 in float64, which would break the
    strict gate-range invariant downstream.
    """
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, _SIGMOID_LO, _SIGMOID_HI)


def outer(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rank-one product: result[i, j] = u[i] * v[j]."""
    return np.outer(u, v)


def init_matrix(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Weight matrix, uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; fan_in = rows."""
    bound = 1.0 / np.sqrt(rows)
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_bias(rng: np.random.Generator, fan_in: int, size: int) -> np.ndarray:
    """Bias vector drawn with the owning layer's fan-in bound."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=size)


class AllocationTracker:
    """Live-byte accounting for buffers explicitly registered via ``track``.

    Registered arrays add their ``nbytes`` immediately and subtract them when
    garbage collected (CPython refcounting frees numpy temporaries promptly,
    so the high-water mark tracks the real live set of registered buffers).
    Single-threaded use only.
    """

    def __init__(self) -> None:
        self.live_bytes = 0
        self.peak_bytes = 0
        self.n_allocations = 0

    def add(self, arr: np.ndarray) -> None:
        nbytes = arr.nbytes
        self.live_bytes += nbytes
        self.n_allocations += 1
        if self.live_bytes > self.peak_bytes:
            self.peak_bytes = self.live_bytes
        weakref.finalize(arr, self._release, nbytes)

    def _release(self, nbytes: int) -> None:
        self.live_bytes -= nbytes


_active_tracker: AllocationTracker | None = None


def track(arr: np.ndarray) -> np.ndarray:
    """Register a buffer with the active tracker, if any.  No-op otherwise."""
    if _active_tracker is not None:
        _active_tracker.add(arr)
    return arr


@contextmanager
def tracking():
    """Context manager activating a fresh AllocationTracker."""
    global _active_tracker
    tracker = AllocationTracker()
    previous = _active_tracker
    _active_tracker = tracker
    try:
        yield tracker
    finally:
        _active_tracker = previous

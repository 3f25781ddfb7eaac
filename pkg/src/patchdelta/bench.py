"""Forward-pass latency and peak-allocation scaling versus sequence length.

For each (variant, L) cell the harness builds a freshly initialised model
(latency is weight independent), times the forward pass over a batch of
random windows, and then repeats the pass once under the allocation tracker
to record peak tracked buffer bytes.  The delta-rule variants advance the
whole batch in lockstep through the recurrence; the attention variant
processes windows one at a time so the N x N score matrix is the dominant
(and intended) quadratic buffer.

Latency numbers are machine-dependent and never asserted absolutely; the
claims of interest are the fitted log-log slopes, the pointwise-versus-
patched allocation ordering, and the exact floor(L/P) step count.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import delta
from .attention import attention_forward
from .errors import DataError
from .model import ModelConfig, init_model
from .numerics import make_rng, track, tracking

DEFAULT_LENGTHS = (1000, 4000, 16000, 64000)
FULL_LADDER = (8000, 32000, 64000, 128000, 256000, 512000)
DEFAULT_VARIANTS = ("patched-deltanet", "pointwise", "patched-attention")

CSV_HEADER = "variant,L,N,batch,median_ms,iqr_ms,peak_bytes"


@dataclass
class BenchConfig:
    variants: tuple = DEFAULT_VARIANTS
    lengths: tuple = DEFAULT_LENGTHS
    batch_size: int = 16
    repetitions: int = 20
    warmup: int = 3
    patch_len: int = 10
    n_features: int = 8
    d_model: int = 128
    d_ff: int = 1024
    seed: int = 0
    dtype: str = "float32"  # bench-only paths may drop to 32-bit
    track_memory: bool = True

    def __post_init__(self) -> None:
        if list(self.lengths) != sorted(set(self.lengths)):
            raise ValueError("lengths must be strictly increasing")
        if self.repetitions < 5:
            raise ValueError("need repetitions >= 5 for reported medians")
        for v in self.variants:
            if v not in DEFAULT_VARIANTS:
                raise ValueError(f"unknown bench variant {v!r}")


@dataclass
class BenchRecord:
    variant: str
    length: int
    n_tokens: int
    batch: int
    median_ms: float
    iqr_ms: float
    peak_bytes: int | None
    steps: int | None
    mem_tracked: bool


def _model_config(variant: str, length: int, config: BenchConfig) -> ModelConfig:
    patch = 1 if variant == "pointwise" else config.patch_len
    return ModelConfig(
        variant=variant,
        window_len=length,
        patch_len=patch,
        n_features=config.n_features,
        d_model=config.d_model,
        d_ff=config.d_ff,
        seed=config.seed,
    )


def _forward_pass(values_batch: np.ndarray, params, mc: ModelConfig, dtype) -> int | None:
    """One full-pipeline forward over a (B, L, F) batch; returns delta step count."""
    b, length, n_features = values_batch.shape
    n = mc.n_tokens
    tokens = track(values_batch[:, : n * mc.patch_len, :]
                   .reshape(b, n, mc.token_width).copy())
    w_in = params.w_in.astype(dtype, copy=False)
    b_in = params.b_in.astype(dtype, copy=False)
    w_out = params.w_out.astype(dtype, copy=False)
    b_out = params.b_out.astype(dtype, copy=False)
    t0 = track(tokens @ w_in + b_in)
    if mc.uses_attention:
        steps = None
        recon = track(np.empty((b, n, mc.token_width), dtype=dtype))
        for i in range(b):
            core_out, _ = attention_forward(t0[i], params.core, need_cache=False)
            recon[i] = core_out @ w_out + b_out
    else:
        core_out, steps = delta.forward_batch(t0, params.core, dtype=dtype)
        recon = track(core_out @ w_out + b_out)
    if recon.shape != (b, n, mc.token_width):
        raise AssertionError("benchmark forward produced unexpected shape")
    return steps


def measure(config: BenchConfig) -> list[BenchRecord]:
    """Run the full (variant x length) grid and return one record per cell."""
    dtype = np.dtype(config.dtype).type
    records: list[BenchRecord] = []
    data_rng = make_rng(config.seed)
    for variant in config.variants:
        for length in config.lengths:
            mc = _model_config(variant, length, config)
            params = init_model(mc)
            values = data_rng.standard_normal(
                (config.batch_size, length, config.n_features)).astype(dtype)
            for _ in range(config.warmup):
                _forward_pass(values, params, mc, dtype)
            timings = []
            steps = None
            for _ in range(config.repetitions):
                start = time.perf_counter()
                steps = _forward_pass(values, params, mc, dtype)
                timings.append((time.perf_counter() - start) * 1e3)
            peak = None
            if config.track_memory:
                with tracking() as tracker:
                    _forward_pass(values, params, mc, dtype)
                peak = tracker.peak_bytes
            quartiles = statistics.quantiles(timings, n=4)
            records.append(BenchRecord(
                variant=variant,
                length=length,
                n_tokens=mc.n_tokens,
                batch=config.batch_size,
                median_ms=statistics.median(timings),
                iqr_ms=quartiles[2] - quartiles[0],
                peak_bytes=peak,
                steps=steps,
                mem_tracked=config.track_memory,
            ))
    return records


def fit_scaling_exponent(records: list[BenchRecord]) -> float:
    """Least-squares slope of log(median latency) against log(L)."""
    if len(records) < 3:
        raise ValueError(f"need at least 3 lengths to fit a slope, got {len(records)}")
    x = np.log([r.length for r in records])
    y = np.log([r.median_ms for r in records])
    return float(np.polyfit(x, y, 1)[0])


def write_csv(records: list[BenchRecord], path) -> None:
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            peak = "" if r.peak_bytes is None else str(r.peak_bytes)
            fh.write(f"{r.variant},{r.length},{r.n_tokens},{r.batch},"
                     f"{r.median_ms!r},{r.iqr_ms!r},{peak}\n")


def read_csv(path) -> list[BenchRecord]:
    records = []
    with open(path, "r") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise DataError(f"{path}: unexpected benchmark CSV header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 7:
                raise DataError(f"{path}:{lineno}: expected 7 fields, got {len(fields)}")
            records.append(BenchRecord(
                variant=fields[0],
                length=int(fields[1]),
                n_tokens=int(fields[2]),
                batch=int(fields[3]),
                median_ms=float(fields[4]),
                iqr_ms=float(fields[5]),
                peak_bytes=int(fields[6]) if fields[6] else None,
                steps=None,
                mem_tracked=bool(fields[6]),
            ))
    return records

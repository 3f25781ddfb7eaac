"""Reconstruction model assembly: input projection, core, output projection.

Four variants share the same skeleton (patchify -> project to d_model ->
core -> project back to P*F):

* ``patched-deltanet``   gated delta-rule core on patch tokens
* ``no-gate``            same core with the gate pinned to 1 (no gate params)
* ``pointwise``          gated delta-rule core with P = 1 (patching ablation)
* ``patched-attention``  softmax self-attention core on the same patch tokens

There is no residual around the core and no normalisation layer; parameter
counts are closed-form and checked against an exhaustive walk in the tests.
Checkpoints use a self-describing binary container that round-trips
bit-exactly (deterministic bytes: no timestamps, fixed field order).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from . import attention, delta
from .errors import DataError
from .numerics import ensure_finite, init_bias, init_matrix, make_rng, track
from .patching import PatchTokens, TimeSeries, patch_values

VARIANTS = ("patched-deltanet", "no-gate", "pointwise", "patched-attention")

CHECKPOINT_MAGIC = b"PDCKPT01"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    variant: str = "patched-deltanet"
    window_len: int = 100
    patch_len: int = 10
    n_features: int = 38
    d_model: int = 128
    d_ff: int = 1024
    seed: int = 0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.variant == "pointwise" and self.patch_len != 1:
            raise ValueError("pointwise variant requires patch_len = 1")
        if self.patch_len < 1 or self.patch_len > self.window_len:
            raise ValueError(
                f"patch_len {self.patch_len} outside [1, window_len={self.window_len}]"
            )
        if min(self.window_len, self.n_features, self.d_model, self.d_ff) < 1:
            raise ValueError("window_len, n_features, d_model, d_ff must be >= 1")

    @property
    def n_tokens(self) -> int:
        return self.window_len // self.patch_len

    @property
    def token_width(self) -> int:
        return self.patch_len * self.n_features

    @property
    def uses_attention(self) -> bool:
        return self.variant == "patched-attention"

    @property
    def gated(self) -> bool:
        return self.variant != "no-gate"


@dataclass
class ModelParams:
    w_in: np.ndarray
    b_in: np.ndarray
    core: delta.DeltaParams | attention.AttnParams
    w_out: np.ndarray
    b_out: np.ndarray


@dataclass
class ModelCache:
    x_p: np.ndarray       # (N, P*F) input patch tokens
    t0: np.ndarray        # (N, d) projected tokens
    core_cache: object
    core_out: np.ndarray  # (N, d)


def iter_arrays(obj, prefix: str = ""):
    """Yield (path, array) for every ndarray field, depth-first, field order."""
    for field in dataclasses.fields(obj):
        value = getattr(obj, field.name)
        path = f"{prefix}{field.name}"
        if value is None:
            continue
        if isinstance(value, np.ndarray):
            yield path, value
        elif dataclasses.is_dataclass(value):
            yield from iter_arrays(value, prefix=f"{path}.")


def map_arrays(obj, fn):
    """Rebuild a params dataclass applying fn to every ndarray field."""
    kwargs = {}
    for field in dataclasses.fields(obj):
        value = getattr(obj, field.name)
        if isinstance(value, np.ndarray):
            kwargs[field.name] = fn(value)
        elif dataclasses.is_dataclass(value):
            kwargs[field.name] = map_arrays(value, fn)
        else:
            kwargs[field.name] = value
    return type(obj)(**kwargs)


def zeros_like_params(params):
    return map_arrays(params, np.zeros_like)


def init_model(config: ModelConfig) -> ModelParams:
    """Initialise all weights from the config seed, fixed creation order."""
    rng = make_rng(config.seed)
    width = config.token_width
    d = config.d_model
    w_in = init_matrix(rng, width, d)
    b_in = init_bias(rng, width, d)
    if config.uses_attention:
        core = attention.init_attn_params(rng, d, config.d_ff, config.n_tokens)
    else:
        core = delta.init_delta_params(rng, d, d, gated=config.gated)
    w_out = init_matrix(rng, d, width)
    b_out = init_bias(rng, d, width)
    return ModelParams(w_in=w_in, b_in=b_in, core=core, w_out=w_out, b_out=b_out)


def model_forward(window, params: ModelParams, config: ModelConfig, need_cache: bool = False):
    """Reconstruct a window: returns (PatchTokens reconstruction, cache).

    ``window`` is a TimeSeries or an (L, F) array with exactly
    config.window_len rows and config.n_features columns.
    """
    values = window.values if isinstance(window, TimeSeries) else np.asarray(window)
    if values.shape != (config.window_len, config.n_features):
        raise ValueError(
            f"window shape {values.shape} does not match config "
            f"({config.window_len}, {config.n_features})"
        )
    x_p = patch_values(values, config.patch_len)
    t0 = track(x_p @ params.w_in + params.b_in)
    if config.uses_attention:
        core_out, core_cache = attention.attention_forward(t0, params.core, need_cache=need_cache)
    else:
        core_out, core_cache = delta.forward(t0, params.core)
        if not need_cache:
            core_cache = None
    x_hat = track(core_out @ params.w_out + params.b_out)
    ensure_finite(x_hat, "reconstruction")
    recon = PatchTokens(tokens=x_hat, patch_len=config.patch_len, n_features=config.n_features)
    cache = ModelCache(x_p=x_p, t0=t0, core_cache=core_cache, core_out=core_out)
    return recon, cache


def reconstruction_loss(x: PatchTokens | np.ndarray, x_hat: PatchTokens | np.ndarray) -> float:
    """MSE over all N*P*F entries of the patch-token matrices."""
    a = x.tokens if isinstance(x, PatchTokens) else x
    b = x_hat.tokens if isinstance(x_hat, PatchTokens) else x_hat
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def loss_and_grads(window, params: ModelParams, config: ModelConfig):
    """MSE reconstruction loss and its gradient w.r.t. every parameter."""
    recon, cache = model_forward(window, params, config, need_cache=True)
    diff = recon.tokens - cache.x_p
    loss = float(np.mean(diff**2))
    d_xhat = (2.0 / diff.size) * diff
    # output projection
    w_out_g = cache.core_out.T @ d_xhat
    b_out_g = d_xhat.sum(axis=0)
    d_core_out = d_xhat @ params.w_out.T
    # core
    if config.uses_attention:
        core_grads, d_t0 = attention.attention_backward(cache.core_cache, d_core_out, params.core)
    else:
        core_grads, d_t0 = delta.backward(cache.core_cache, d_core_out, params.core)
    # input projection
    w_in_g = cache.x_p.T @ d_t0
    b_in_g = d_t0.sum(axis=0)
    grads = ModelParams(w_in=w_in_g, b_in=b_in_g, core=core_grads, w_out=w_out_g, b_out=b_out_g)
    return loss, grads


def param_count(config: ModelConfig) -> int:
    """Closed-form count of all stored weight and bias entries."""
    width = config.token_width
    d = config.d_model
    in_proj = width * d + d
    out_proj = d * width + width
    if config.uses_attention:
        attn = 4 * (d * d + d)
        ffn = (d * config.d_ff + config.d_ff) + (config.d_ff * d + d)
        pos = config.n_tokens * d
        core = attn + ffn + pos
    else:
        # q, k, v, gate projections; the no-gate ablation stores (inert)
        # gate arrays too so the count is identical
        core = 4 * (d * d + d)
    return in_proj + core + out_proj


def save_checkpoint(path, config: ModelConfig, params: ModelParams,
                    norm_mean: np.ndarray | None = None,
                    norm_std: np.ndarray | None = None) -> None:
    """Write config + all matrices (+ optional normalisation stats) to one file.

    Layout: magic, 8-byte little-endian header length, JSON header with the
    config and per-array shape records, then raw little-endian float64 data
    in header order.  Byte-deterministic for identical inputs.
    """
    entries = list(iter_arrays(params))
    if (norm_mean is None) != (norm_std is None):
        raise ValueError("norm_mean and norm_std must be supplied together")
    if norm_mean is not None:
        entries.append(("norm.mean", np.asarray(norm_mean, dtype=np.float64).reshape(1, -1)))
        entries.append(("norm.std", np.asarray(norm_std, dtype=np.float64).reshape(1, -1)))
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": dataclasses.asdict(config),
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in entries],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (config, params, norm_mean, norm_std)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise DataError(
                f"{path}: unsupported checkpoint version {header.get('format_version')}"
            )
        config = ModelConfig(**header["config"])
        arrays = {}
        for record in header["arrays"]:
            shape = tuple(record["shape"])
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise DataError(f"{path}: truncated checkpoint array {record['name']}")
            arrays[record["name"]] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
    params = init_model(config)
    for path_name, arr in iter_arrays(params):
        if path_name not in arrays:
            raise DataError(f"{path}: checkpoint missing array {path_name}")
        stored = arrays[path_name]
        if stored.shape != arr.shape:
            raise DataError(
                f"{path}: array {path_name} shape {stored.shape} != expected {arr.shape}"
            )
        arr[...] = stored
    norm_mean = arrays.get("norm.mean")
    norm_std = arrays.get("norm.std")
    if norm_mean is not None:
        norm_mean = norm_mean.ravel()
        norm_std = norm_std.ravel()
    return config, params, norm_mean, norm_std

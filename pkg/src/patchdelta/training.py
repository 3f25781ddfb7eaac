"""Sliding-window dataset construction and Adam optimisation of the MSE loss.

Training is deterministic given (data, configs, seeds): the window order is
drawn from a seeded generator, gradients are accumulated over each batch in
a fixed order, and every weight follows the standard bias-corrected Adam
update.  Non-finite losses or gradients abort with diagnostics instead of
propagating.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericError
from .model import (
    ModelConfig,
    ModelParams,
    init_model,
    iter_arrays,
    loss_and_grads,
    zeros_like_params,
)
from .numerics import make_rng
from .patching import TimeSeries


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 16
    epochs: int = 10
    window_stride: int | None = None  # None -> window_len (non-overlapping)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.adam_eps <= 0:
            raise ValueError("learning_rate and adam_eps must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.window_stride is not None and self.window_stride < 1:
            raise ValueError("window_stride must be >= 1")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def sliding_windows(series, window_len: int, stride: int) -> np.ndarray:
    """Start indices of length-``window_len`` windows at 0, stride, 2*stride, ...

    The window at start s covers rows [s, s + window_len).
    """
    length = series.length if isinstance(series, TimeSeries) else int(series)
    if window_len > length:
        raise DataError(f"window_len {window_len} exceeds series length {length}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    return np.arange(0, length - window_len + 1, stride)


def init_adam(params: ModelParams) -> AdamState:
    state = AdamState()
    for name, arr in iter_arrays(params):
        state.m[name] = np.zeros_like(arr)
        state.v[name] = np.zeros_like(arr)
    return state


def adam_update_array(arr, grad, m, v, step, config: TrainConfig) -> None:
    """Bias-corrected Adam update of one array, in place."""
    b1, b2 = config.adam_beta1, config.adam_beta2
    m *= b1
    m += (1.0 - b1) * grad
    v *= b2
    v += (1.0 - b2) * grad**2
    m_hat = m / (1.0 - b1**step)
    v_hat = v / (1.0 - b2**step)
    arr -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState,
              config: TrainConfig):
    """Apply one Adam step to every parameter entry (params updated in place)."""
    state.step += 1
    grad_by_name = dict(iter_arrays(grads))
    for name, arr in iter_arrays(params):
        grad = grad_by_name[name]
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for {name} at step {state.step}")
        adam_update_array(arr, grad, state.m[name], state.v[name], state.step, config)
    return params, state


def accumulate(total: ModelParams, grads: ModelParams, scale: float = 1.0) -> None:
    grad_by_name = dict(iter_arrays(grads))
    for name, arr in iter_arrays(total):
        arr += scale * grad_by_name[name]


def scale_params(params: ModelParams, scale: float) -> None:
    for _, arr in iter_arrays(params):
        arr *= scale


def train(series: TimeSeries, model_config: ModelConfig, train_config: TrainConfig,
          log=None):
    """Train a freshly initialised model on a label-free series.

    Returns (params, loss_history) where loss_history holds the per-epoch
    mean window loss.  ``log`` receives one formatted line per epoch.
    """
    if series.labels is not None:
        raise DataError("training series must be label-free")
    params = init_model(model_config)
    state = init_adam(params)
    stride = train_config.window_stride or model_config.window_len
    starts = sliding_windows(series, model_config.window_len, stride)
    shuffle_rng = make_rng(train_config.seed)
    values = series.values
    history: list[float] = []
    for epoch in range(train_config.epochs):
        t_start = time.perf_counter()
        order = shuffle_rng.permutation(len(starts))
        epoch_losses: list[float] = []
        for lo in range(0, len(order), train_config.batch_size):
            batch = order[lo : lo + train_config.batch_size]
            batch_grads = zeros_like_params(params)
            for idx in batch:
                s = int(starts[idx])
                window = values[s : s + model_config.window_len]
                loss, grads = loss_and_grads(window, params, model_config)
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite loss at epoch {epoch + 1}, window {s}")
                epoch_losses.append(loss)
                accumulate(batch_grads, grads)
            scale_params(batch_grads, 1.0 / len(batch))
            adam_step(params, batch_grads, state, train_config)
        mean_loss = float(np.mean(epoch_losses))
        history.append(mean_loss)
        if log is not None:
            seconds = time.perf_counter() - t_start
            log(f"epoch={epoch + 1} mean_loss={mean_loss!r} seconds={seconds:.3f}")
    return params, history

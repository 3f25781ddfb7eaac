"""Softmax self-attention core used as the quadratic-complexity baseline.

Single head, single block, operating on the same projected patch tokens as
the delta-rule core: learned positional embeddings are added, then scaled
dot-product attention (non-causal, scale 1/sqrt(d)) with a residual
connection, then a GELU feed-forward sublayer with a second residual.  The
N x N score matrix is materialised; that quadratic buffer is the phenomenon
the benchmark measures.

The FFN nonlinearity is pinned to the tanh-approximation GELU
    gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
and held fixed across all experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ensure_finite, init_bias, init_matrix, track

# python-float constants so float32 benchmark paths are not upcast
_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x**3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * _GELU_C * (1.0 + 3.0 * _GELU_A * x**2)


@dataclass
class AttnParams:
    """Attention projections, FFN weights, and the positional table."""

    w_q: np.ndarray
    b_q: np.ndarray
    w_k: np.ndarray
    b_k: np.ndarray
    w_v: np.ndarray
    b_v: np.ndarray
    w_o: np.ndarray
    b_o: np.ndarray
    w_1: np.ndarray
    b_1: np.ndarray
    w_2: np.ndarray
    b_2: np.ndarray
    pos: np.ndarray  # (n_max, d) learned positional embeddings

    @property
    def d(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_ff(self) -> int:
        return self.w_1.shape[1]

    @property
    def n_max(self) -> int:
        return self.pos.shape[0]


@dataclass
class AttnCache:
    h0: np.ndarray       # tokens + positional embeddings
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    weights: np.ndarray  # (N, N) softmax rows
    ctx: np.ndarray
    h1: np.ndarray       # post-attention residual
    u: np.ndarray        # FFN pre-activation


def init_attn_params(rng: np.random.Generator, d: int, d_ff: int, n_max: int) -> AttnParams:
    return AttnParams(
        w_q=init_matrix(rng, d, d),
        b_q=init_bias(rng, d, d),
        w_k=init_matrix(rng, d, d),
        b_k=init_bias(rng, d, d),
        w_v=init_matrix(rng, d, d),
        b_v=init_bias(rng, d, d),
        w_o=init_matrix(rng, d, d),
        b_o=init_bias(rng, d, d),
        w_1=init_matrix(rng, d, d_ff),
        b_1=init_bias(rng, d, d_ff),
        w_2=init_matrix(rng, d_ff, d),
        b_2=init_bias(rng, d_ff, d),
        pos=rng.uniform(-1.0 / np.sqrt(d), 1.0 / np.sqrt(d), size=(n_max, d)),
    )


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def attention_forward(tokens: np.ndarray, params: AttnParams, need_cache: bool = True):
    """Full block forward over (N, d) tokens; returns (outputs, cache or None)."""
    n, d = tokens.shape
    if d != params.d:
        raise ValueError(f"token width {d} does not match d {params.d}")
    if n > params.n_max:
        raise ValueError(f"sequence length {n} exceeds positional table {params.n_max}")
    dtype = tokens.dtype
    h0 = tokens + params.pos[:n].astype(dtype, copy=False)
    q = track(h0 @ params.w_q.astype(dtype, copy=False) + params.b_q.astype(dtype, copy=False))
    k = track(h0 @ params.w_k.astype(dtype, copy=False) + params.b_k.astype(dtype, copy=False))
    v = track(h0 @ params.w_v.astype(dtype, copy=False) + params.b_v.astype(dtype, copy=False))
    scores = track(q @ k.T * (1.0 / float(np.sqrt(d))))
    weights = track(softmax_rows(scores))
    if not need_cache:
        del scores
    ctx = track(weights @ v)
    h1 = h0 + (ctx @ params.w_o.astype(dtype, copy=False) + params.b_o.astype(dtype, copy=False))
    u = track(h1 @ params.w_1.astype(dtype, copy=False) + params.b_1.astype(dtype, copy=False))
    out = h1 + (gelu(u) @ params.w_2.astype(dtype, copy=False) + params.b_2.astype(dtype, copy=False))
    ensure_finite(out, "attention outputs")
    if not need_cache:
        return out, None
    return out, AttnCache(h0=h0, q=q, k=k, v=v, weights=weights, ctx=ctx, h1=h1, u=u)


def attention_backward(cache: AttnCache, output_grads: np.ndarray, params: AttnParams):
    """Reverse-mode gradients through the block; finite-difference verified."""
    n = cache.h0.shape[0]
    if output_grads.shape != cache.h0.shape:
        raise ValueError(
            f"output_grads shape {output_grads.shape} does not match cache {cache.h0.shape}"
        )
    d = params.d
    # out = h1 + gelu(u) @ w_2 + b_2
    g_act = gelu(cache.u)
    dw_2 = g_act.T @ output_grads
    db_2 = output_grads.sum(axis=0)
    du = (output_grads @ params.w_2.T) * gelu_grad(cache.u)
    dw_1 = cache.h1.T @ du
    db_1 = du.sum(axis=0)
    dh1 = output_grads + du @ params.w_1.T
    # h1 = h0 + ctx @ w_o + b_o
    dw_o = cache.ctx.T @ dh1
    db_o = dh1.sum(axis=0)
    dctx = dh1 @ params.w_o.T
    # ctx = weights @ v
    dweights = dctx @ cache.v.T
    dv = cache.weights.T @ dctx
    # softmax rows
    a = cache.weights
    dscores = a * (dweights - (dweights * a).sum(axis=1, keepdims=True))
    # scores = q k^T / sqrt(d)
    scale = 1.0 / np.sqrt(d)
    dq = dscores @ cache.k * scale
    dk = dscores.T @ cache.q * scale
    # projections from h0
    dh0 = dh1 + dq @ params.w_q.T + dk @ params.w_k.T + dv @ params.w_v.T
    grads = AttnParams(
        w_q=cache.h0.T @ dq, b_q=dq.sum(axis=0),
        w_k=cache.h0.T @ dk, b_k=dk.sum(axis=0),
        w_v=cache.h0.T @ dv, b_v=dv.sum(axis=0),
        w_o=dw_o, b_o=db_o,
        w_1=dw_1, b_1=db_1,
        w_2=dw_2, b_2=db_2,
        pos=np.zeros_like(params.pos),
    )
    grads.pos[:n] = dh0
    return grads, dh0

import numpy as np
import pytest

from patchdelta.attention import (
    attention_backward,
    attention_forward,
    gelu,
    gelu_grad,
    init_attn_params,
    softmax_rows,
)
from patchdelta.numerics import make_rng, tracking
from helpers import finite_difference_grads, max_relative_error
from patchdelta.model import iter_arrays


def make_params(d=4, d_ff=6, n_max=8, seed=0):
    return init_attn_params(make_rng(seed), d, d_ff, n_max)


def naive_attention_oracle(tokens, params):
    """Independent re-implementation with explicit loops."""
    n, d = tokens.shape
    h0 = tokens + params.pos[:n]
    q = h0 @ params.w_q + params.b_q
    k = h0 @ params.w_k + params.b_k
    v = h0 @ params.w_v + params.b_v
    out = np.zeros_like(h0)
    for i in range(n):
        logits = np.array([q[i] @ k[j] for j in range(n)]) / np.sqrt(d)
        weights = np.exp(logits - logits.max())
        weights = weights / weights.sum()
        ctx = sum(weights[j] * v[j] for j in range(n))
        out[i] = h0[i] + (ctx @ params.w_o + params.b_o)
    hidden = gelu(out @ params.w_1 + params.b_1)
    return out + (hidden @ params.w_2 + params.b_2)


class TestForward:
    def test_single_token_softmax_weight_one(self):
        params = make_params(seed=1)
        token = make_rng(2).standard_normal((1, 4))
        out, cache = attention_forward(token, params)
        assert cache.weights.shape == (1, 1)
        assert cache.weights[0, 0] == pytest.approx(1.0, abs=1e-15)
        # output = FFN residual over h0 + w_o-projected value row
        h0 = token + params.pos[:1]
        v = h0 @ params.w_v + params.b_v
        h1 = h0 + v @ params.w_o + params.b_o
        expected = h1 + gelu(h1 @ params.w_1 + params.b_1) @ params.w_2 + params.b_2
        assert np.allclose(out, expected, atol=1e-12)

    def test_identical_tokens_zero_pos_identical_rows(self):
        params = make_params(seed=3)
        params.pos[:] = 0.0
        token = make_rng(4).standard_normal(4)
        out, _ = attention_forward(np.stack([token, token]), params)
        assert np.allclose(out[0], out[1], atol=1e-12)

    def test_matches_naive_oracle(self):
        params = make_params(seed=5)
        tokens = make_rng(6).standard_normal((4, 4))
        out, _ = attention_forward(tokens, params)
        assert np.allclose(out, naive_attention_oracle(tokens, params), atol=1e-10)

    def test_rejects_overlong_sequence(self):
        params = make_params(n_max=3)
        with pytest.raises(ValueError, match="positional"):
            attention_forward(np.zeros((4, 4)), params)

    def test_softmax_rows_sum_to_one(self):
        scores = make_rng(7).standard_normal((6, 6)) * 20
        weights = softmax_rows(scores)
        assert np.allclose(weights.sum(axis=1), 1.0, atol=1e-12)

    def test_permutation_equivariance_iff_pos_zeroed(self):
        params = make_params(seed=8)
        tokens = make_rng(9).standard_normal((5, 4))
        perm = np.array([3, 0, 4, 1, 2])
        with_pos, _ = attention_forward(tokens, params)
        with_pos_perm, _ = attention_forward(tokens[perm], params)
        assert not np.allclose(with_pos[perm], with_pos_perm, atol=1e-8)
        params.pos[:] = 0.0
        out, _ = attention_forward(tokens, params)
        out_perm, _ = attention_forward(tokens[perm], params)
        assert np.allclose(out[perm], out_perm, atol=1e-12)


class TestBackward:
    def test_zero_grads(self):
        params = make_params(seed=10)
        tokens = make_rng(11).standard_normal((3, 4))
        _, cache = attention_forward(tokens, params)
        grads, d_tokens = attention_backward(cache, np.zeros((3, 4)), params)
        for _, arr in iter_arrays(grads):
            assert np.array_equal(arr, np.zeros_like(arr))
        assert np.array_equal(d_tokens, np.zeros((3, 4)))

    def test_finite_difference_small(self):
        params = make_params(d=2, d_ff=3, n_max=2, seed=12)
        rng = make_rng(13)
        tokens = rng.standard_normal((2, 2))
        target = rng.standard_normal((2, 2))

        def loss_fn():
            out, _ = attention_forward(tokens, params)
            return float(np.mean((out - target) ** 2))

        out, cache = attention_forward(tokens, params)
        grads, _ = attention_backward(cache, (2.0 / out.size) * (out - target), params)
        fd = finite_difference_grads(loss_fn, params)
        assert max_relative_error(grads, fd) < 1e-4

    def test_softmax_logit_grads_rows_sum_to_zero(self):
        # constant per-row upstream weight gradient kills the softmax Jacobian
        a = softmax_rows(make_rng(14).standard_normal((5, 5)))
        dweights = np.ones((5, 5)) * 2.5
        dscores = a * (dweights - (dweights * a).sum(axis=1, keepdims=True))
        assert np.allclose(dscores.sum(axis=1), 0.0, atol=1e-12)
        assert np.allclose(dscores, 0.0, atol=1e-12)  # exactly constant rows

    def test_gelu_grad_matches_fd(self):
        x = np.linspace(-4, 4, 41)
        h = 1e-6
        fd = (gelu(x + h) - gelu(x - h)) / (2 * h)
        assert np.allclose(gelu_grad(x), fd, atol=1e-8)


class TestQuadraticAllocation:
    def test_score_matrix_dominates_peak(self):
        d = 16
        rng = make_rng(15)
        growth = []
        for n in (1024, 2048):
            params = make_params(d=d, d_ff=32, n_max=n, seed=16)
            tokens = rng.standard_normal((n, d))
            with tracking() as tracker:
                attention_forward(tokens, params, need_cache=False)
            growth.append(tracker.peak_bytes)
        assert growth[1] / growth[0] >= 3.0

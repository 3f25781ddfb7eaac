"""Independent oracles shared across the test modules.

Everything here is deliberately naive (triple loops, pair enumeration,
exhaustive sweeps, central differences) and never imports the code paths it
checks beyond the parameter-walking utilities.
"""

from __future__ import annotations

import numpy as np

from patchdelta.model import iter_arrays, zeros_like_params


def matmul_oracle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Triple-loop matrix product."""
    rows, inner = a.shape
    inner2, cols = b.shape
    assert inner == inner2
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(inner):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def rank_oracle(m: np.ndarray, tol: float = 1e-10) -> int:
    """Rank via Gaussian elimination with partial pivoting."""
    a = m.astype(np.float64).copy()
    rows, cols = a.shape
    rank = 0
    row = 0
    for col in range(cols):
        if row >= rows:
            break
        pivot = row + int(np.argmax(np.abs(a[row:, col])))
        if abs(a[pivot, col]) <= tol:
            continue
        a[[row, pivot]] = a[[pivot, row]]
        a[row] = a[row] / a[row, col]
        for r in range(rows):
            if r != row:
                a[r] -= a[r, col] * a[row]
        row += 1
        rank += 1
    return rank


def roc_auc_pair_oracle(scores: np.ndarray, labels: np.ndarray) -> float:
    """O(T^2) Mann-Whitney pair count, ties as one half."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def point_adjust_oracle(preds: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Two-pass segment scan: find runs of 1-labels, then flood detected runs."""
    out = preds.astype(np.int64).copy()
    n = len(labels)
    i = 0
    while i < n:
        if labels[i] == 1:
            j = i
            while j < n and labels[j] == 1:
                j += 1
            if out[i:j].sum() > 0:
                out[i:j] = 1
            i = j
        else:
            i += 1
    return out


def best_f1_oracle(scores: np.ndarray, labels: np.ndarray):
    """Exhaustive threshold sweep with naive per-threshold point adjustment."""
    candidates = np.concatenate(([-np.inf], np.unique(scores), [np.inf]))
    best = (-1.0, None)
    for threshold in candidates:
        preds = (scores >= threshold).astype(np.int64)
        adjusted = point_adjust_oracle(preds, labels)
        tp = int(((adjusted == 1) & (labels == 1)).sum())
        fp = int(((adjusted == 1) & (labels == 0)).sum())
        fn = int(((adjusted == 0) & (labels == 1)).sum())
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        if f1 >= best[0]:  # ties toward the higher threshold
            best = (f1, float(threshold))
    return best


def finite_difference_grads(loss_fn, params, h: float = 1e-5):
    """Central differences for every parameter entry, mutating in place."""
    grads = zeros_like_params(params)
    grad_by_name = dict(iter_arrays(grads))
    for name, arr in iter_arrays(params):
        flat = arr.ravel()
        gflat = grad_by_name[name].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
    return grads


def max_relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Worst-case |a - f| / max(|a|, |f|, floor) over all parameter entries.

    The floor absorbs finite-difference roundoff on entries whose true
    gradient is essentially zero.
    """
    analytic_by_name = dict(iter_arrays(analytic))
    worst = 0.0
    for name, fd in iter_arrays(numeric):
        a = analytic_by_name[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(fd)), floor)
        worst = max(worst, float(np.max(np.abs(a - fd) / denom)))
    return worst

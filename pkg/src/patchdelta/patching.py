"""Conversion between raw multivariate series and flattened patch tokens.

A length-L, F-feature series is cut into N = floor(L/P) non-overlapping
patches of P consecutive time steps; each patch is flattened into one token
of width P*F.  Flattening is time-major within the patch: token entry
``p*F + f`` holds the value at time offset ``p``, feature ``f``.  The
trailing ``L mod P`` steps are dropped.  Both directions copy; no views.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import track


@dataclass
class TimeSeries:
    """An L x F value matrix with optional per-point binary labels."""

    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"series values must be 2-D, got shape {self.values.shape}")
        if self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValueError(f"series needs L >= 1 and F >= 1, got shape {self.values.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.values.shape[0],):
                raise ValueError(
                    f"labels length {self.labels.shape} does not match series length "
                    f"{self.values.shape[0]}"
                )
            if not np.isin(self.labels, (0, 1)).all():
                raise ValueError("labels must be binary 0/1")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass
class PatchTokens:
    """N x (P*F) token matrix plus the patch geometry that produced it."""

    tokens: np.ndarray
    patch_len: int
    n_features: int

    def __post_init__(self) -> None:
        if self.tokens.ndim != 2:
            raise ValueError(f"tokens must be 2-D, got shape {self.tokens.shape}")
        if self.tokens.shape[1] != self.patch_len * self.n_features:
            raise ValueError(
                f"token width {self.tokens.shape[1]} != patch_len*n_features "
                f"({self.patch_len}*{self.n_features})"
            )

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]


def patch_values(values: np.ndarray, patch_len: int) -> np.ndarray:
    """Flatten an (L, F) array into (floor(L/P), P*F) patch rows (copies)."""
    length, n_features = values.shape
    if patch_len < 1 or patch_len > length:
        raise ValueError(f"patch_len {patch_len} outside [1, {length}]")
    n = length // patch_len
    out = values[: n * patch_len].reshape(n, patch_len * n_features).copy()
    return track(out)


def patchify(series: TimeSeries, patch_len: int) -> PatchTokens:
    """Cut a series into non-overlapping patches and flatten each into a token."""
    return PatchTokens(
        tokens=patch_values(series.values, patch_len),
        patch_len=patch_len,
        n_features=series.n_features,
    )


def unpatch_values(tokens: np.ndarray, patch_len: int, n_features: int) -> np.ndarray:
    """Inverse of patch_values: (N, P*F) tokens back to an (N*P, F) array."""
    if tokens.shape[1] % n_features != 0 or tokens.shape[1] != patch_len * n_features:
        raise ValueError(
            f"token width {tokens.shape[1]} not compatible with patch_len {patch_len}, "
            f"n_features {n_features}"
        )
    n = tokens.shape[0]
    return tokens.reshape(n * patch_len, n_features).copy()


def unpatchify(tokens: PatchTokens) -> TimeSeries:
    """Map tokens back to an (N*P) x F series; exact inverse when P divides L."""
    return TimeSeries(
        values=unpatch_values(tokens.tokens, tokens.patch_len, tokens.n_features)
    )

"""SMD-format ingestion, z-score normalisation, and synthetic benchmark data.

The on-disk format is plain text: one time step per line, comma-separated
decimal values; the label file holds one 0/1 per line.  Values are printed
with Python's shortest round-trip float repr, so write/reload is exact at
float64 precision.

The synthetic generator produces a per-feature sinusoid base signal plus
Gaussian noise; the train split is anomaly free, the test split embeds
point spikes, level shifts, and drift ramps at configurable multiples of
the noise standard deviation, with exact labels and a segment sidecar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .numerics import make_rng
from .patching import TimeSeries

STD_FLOOR = 1e-8


@dataclass
class DatasetBundle:
    """Train/test splits plus per-feature normalisation stats from train."""

    train: TimeSeries
    test: TimeSeries
    mean: np.ndarray
    std: np.ndarray
    normalized: bool = False

    def __post_init__(self) -> None:
        if self.train.n_features != self.test.n_features:
            raise DataError(
                f"train has {self.train.n_features} features but test has "
                f"{self.test.n_features}"
            )


@dataclass
class Segment:
    start: int
    end: int  # exclusive
    kind: str


@dataclass
class SynthConfig:
    length: int = 20000
    n_features: int = 8
    freq_range: tuple = (0.005, 0.05)   # cycles per step
    amp_range: tuple = (0.5, 1.5)
    noise_std: float = 0.1
    n_spikes: int = 8
    n_level_shifts: int = 4
    n_drifts: int = 3
    spike_scale: tuple = (6.0, 10.0)    # magnitudes in units of noise_std
    shift_scale: tuple = (6.0, 10.0)
    drift_scale: tuple = (8.0, 12.0)    # ramp peak; onset is intrinsically weak
    shift_len: tuple = (20, 50)
    drift_len: tuple = (25, 60)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.length < 1 or self.n_features < 1:
            raise ValueError("length and n_features must be >= 1")
        if self.noise_std <= 0:
            raise ValueError("noise_std must be positive")


def _parse_matrix(path) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path, "r", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise DataError(
                    f"{path}:{lineno}: ragged row with {len(fields)} fields, "
                    f"expected {width}"
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric field ({exc})") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _parse_labels(path) -> np.ndarray:
    labels: list[int] = []
    with open(path, "r", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line not in ("0", "1"):
                raise DataError(f"{path}:{lineno}: label must be 0 or 1, got {line!r}")
            labels.append(int(line))
    if not labels:
        raise DataError(f"{path}: no labels")
    return np.array(labels, dtype=np.int64)


def train_stats(values: np.ndarray):
    """Per-feature mean and floored standard deviation."""
    mean = values.mean(axis=0)
    std = np.maximum(values.std(axis=0), STD_FLOOR)
    return mean, std


def load_smd(train_path, test_path, label_path) -> DatasetBundle:
    """Parse SMD-format text files into an unnormalised bundle."""
    train_values = _parse_matrix(train_path)
    test_values = _parse_matrix(test_path)
    labels = _parse_labels(label_path)
    if labels.shape[0] != test_values.shape[0]:
        raise DataError(
            f"label length {labels.shape[0]} does not match test length "
            f"{test_values.shape[0]}"
        )
    if train_values.shape[1] != test_values.shape[1]:
        raise DataError(
            f"train has {train_values.shape[1]} features but test has "
            f"{test_values.shape[1]}"
        )
    mean, std = train_stats(train_values)
    return DatasetBundle(
        train=TimeSeries(values=train_values),
        test=TimeSeries(values=test_values, labels=labels),
        mean=mean,
        std=std,
    )


def normalize(bundle: DatasetBundle) -> DatasetBundle:
    """Z-score both splits with the train-split statistics."""
    if bundle.normalized:
        raise ValueError("bundle is already normalised")
    return DatasetBundle(
        train=TimeSeries(values=(bundle.train.values - bundle.mean) / bundle.std,
                         labels=bundle.train.labels),
        test=TimeSeries(values=(bundle.test.values - bundle.mean) / bundle.std,
                        labels=bundle.test.labels),
        mean=bundle.mean,
        std=bundle.std,
        normalized=True,
    )


def normalize_values(values: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (values - mean) / std


def denormalize_values(values: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return values * std + mean


def write_values(values: np.ndarray, path) -> None:
    """SMD text format: comma-separated shortest round-trip float reprs."""
    with open(path, "w") as fh:
        for row in values:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def write_labels(labels: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        for label in labels:
            fh.write(f"{int(label)}\n")


def write_segments(segments: list[Segment], path) -> None:
    """JSON sidecar: one {start, end, kind} record per anomaly, end exclusive."""
    payload = [{"start": s.start, "end": s.end, "kind": s.kind} for s in segments]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _base_signal(rng: np.random.Generator, config: SynthConfig) -> np.ndarray:
    t = np.arange(config.length)[:, None]
    freq = rng.uniform(*config.freq_range, size=config.n_features)
    amp = rng.uniform(*config.amp_range, size=config.n_features)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=config.n_features)
    return amp * np.sin(2.0 * np.pi * freq * t + phase)


def _place_segments(rng: np.random.Generator, config: SynthConfig):
    """Draw non-overlapping anomaly segments; raises if they cannot fit."""
    wanted = []
    for _ in range(config.n_spikes):
        wanted.append(("spike", 1))
    for _ in range(config.n_level_shifts):
        wanted.append(("level_shift", int(rng.integers(config.shift_len[0],
                                                       config.shift_len[1] + 1))))
    for _ in range(config.n_drifts):
        wanted.append(("drift", int(rng.integers(config.drift_len[0],
                                                 config.drift_len[1] + 1))))
    if sum(w for _, w in wanted) > config.length:
        raise DataError("anomaly spec exceeds series bounds")
    placed: list[Segment] = []
    for kind, seg_len in wanted:
        for _ in range(10000):
            start = int(rng.integers(0, config.length - seg_len + 1))
            end = start + seg_len
            # keep a one-point gap so segments stay distinct label runs
            if all(end + 1 <= p.start or start >= p.end + 1 for p in placed):
                placed.append(Segment(start=start, end=end, kind=kind))
                break
        else:
            raise DataError("anomaly spec exceeds series bounds (cannot place segments)")
    placed.sort(key=lambda s: s.start)
    return placed


def synth_generate(config: SynthConfig):
    """Seeded synthetic bundle; returns (DatasetBundle, segment list).

    Train and test share the same base process (one sinusoid draw) with
    independent noise; anomalies are injected into the test split only.
    """
    rng = make_rng(config.seed)
    base = _base_signal(rng, config)
    train_values = base + rng.normal(
        0.0, config.noise_std, size=(config.length, config.n_features))
    test_values = base + rng.normal(
        0.0, config.noise_std, size=(config.length, config.n_features))
    segments = _place_segments(rng, config)
    labels = np.zeros(config.length, dtype=np.int64)
    scale_by_kind = {
        "spike": config.spike_scale,
        "level_shift": config.shift_scale,
        "drift": config.drift_scale,
    }
    for seg in segments:
        lo, hi = scale_by_kind[seg.kind]
        magnitude = float(rng.uniform(lo, hi)) * config.noise_std
        signs = rng.choice((-1.0, 1.0), size=config.n_features)
        span = seg.end - seg.start
        if seg.kind == "drift":
            ramp = np.linspace(0.0, 1.0, span + 1)[1:, None]  # ends at full magnitude
            test_values[seg.start:seg.end] += ramp * magnitude * signs
        else:
            test_values[seg.start:seg.end] += magnitude * signs
        labels[seg.start:seg.end] = 1
    mean, std = train_stats(train_values)
    bundle = DatasetBundle(
        train=TimeSeries(values=train_values),
        test=TimeSeries(values=test_values, labels=labels),
        mean=mean,
        std=std,
    )
    return bundle, segments

"""Patch-token delta-rule recurrence for multivariate time-series anomaly detection."""

from .bench import BenchConfig, BenchRecord, fit_scaling_exponent, measure
from .data import DatasetBundle, SynthConfig, load_smd, normalize, synth_generate
from .model import (
    ModelConfig,
    ModelParams,
    init_model,
    load_checkpoint,
    model_forward,
    param_count,
    reconstruction_loss,
    save_checkpoint,
)
from .patching import PatchTokens, TimeSeries, patchify, unpatchify
from .scoring import EvalReport, ScoreSeries, best_f1, evaluate, point_adjust, point_scores, roc_auc
from .training import TrainConfig, sliding_windows, train

__version__ = "0.1.0"

__all__ = [
    "BenchConfig",
    "BenchRecord",
    "DatasetBundle",
    "EvalReport",
    "ModelConfig",
    "ModelParams",
    "PatchTokens",
    "ScoreSeries",
    "SynthConfig",
    "TimeSeries",
    "TrainConfig",
    "best_f1",
    "evaluate",
    "fit_scaling_exponent",
    "init_model",
    "load_checkpoint",
    "load_smd",
    "measure",
    "model_forward",
    "normalize",
    "param_count",
    "patchify",
    "point_adjust",
    "point_scores",
    "reconstruction_loss",
    "roc_auc",
    "save_checkpoint",
    "sliding_windows",
    "synth_generate",
    "train",
    "unpatchify",
]

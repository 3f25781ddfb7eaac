"""Command-line pipeline: synth, train, eval, bench, plot.

Every subcommand writes a ``manifest.json`` beside its outputs containing
the fully resolved configuration, both seeds, input paths, and SHA-256
hashes of every artifact; re-running with ``--config manifest.json``
reproduces the run bit-identically (timing fields aside).

Configuration precedence: command-line flags > JSON config file > defaults.
All randomness flows through exactly two seeds: ``--data-seed`` (synthetic
data, benchmark inputs) and ``--model-seed`` (weight init and window
shuffling).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import data as data_mod
from . import scoring
from .errors import DataError, NumericError
from .model import ModelConfig, init_model, load_checkpoint, param_count, save_checkpoint
from .patching import TimeSeries
from .training import TrainConfig, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        raise UsageError(message)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, subcommand: str, config: dict,
                    inputs: dict, outputs: list[Path]) -> Path:
    manifest = {
        "format_version": 1,
        "subcommand": subcommand,
        "config": config,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {p.name: f"sha256:{_sha256(p)}" for p in outputs},
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(payload, dict) and "config" in payload and "subcommand" in payload:
        payload = payload["config"]  # accept a previous run's manifest
    if not isinstance(payload, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return payload


def _resolve(args: argparse.Namespace, file_values: dict, defaults: dict) -> dict:
    """Merge flag values over file values over defaults."""
    resolved = dict(defaults)
    for key in defaults:
        if key in file_values:
            resolved[key] = file_values[key]
    for key in defaults:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value
    return resolved


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected lo,hi pair, got {text!r}")
    return (float(parts[0]), float(parts[1]))


def _int_pair(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected lo,hi pair, got {text!r}")
    return (int(parts[0]), int(parts[1]))


def _out_dir(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


SYNTH_DEFAULTS = {
    "length": 20000,
    "features": 8,
    "noise_std": 0.1,
    "spikes": 8,
    "shifts": 4,
    "drifts": 3,
    "spike_scale": (6.0, 10.0),
    "shift_scale": (6.0, 10.0),
    "drift_scale": (8.0, 12.0),
    "data_seed": 0,
}


def cmd_synth(args) -> int:
    cfg = _resolve(args, _load_config_file(args.config), SYNTH_DEFAULTS)
    out = _out_dir(args.out)
    synth = data_mod.SynthConfig(
        length=cfg["length"],
        n_features=cfg["features"],
        noise_std=cfg["noise_std"],
        n_spikes=cfg["spikes"],
        n_level_shifts=cfg["shifts"],
        n_drifts=cfg["drifts"],
        spike_scale=tuple(cfg["spike_scale"]),
        shift_scale=tuple(cfg["shift_scale"]),
        drift_scale=tuple(cfg["drift_scale"]),
        seed=cfg["data_seed"],
    )
    bundle, segments = data_mod.synth_generate(synth)
    train_path = out / "train.csv"
    test_path = out / "test.csv"
    label_path = out / "labels.csv"
    seg_path = out / "segments.json"
    data_mod.write_values(bundle.train.values, train_path)
    data_mod.write_values(bundle.test.values, test_path)
    data_mod.write_labels(bundle.test.labels, label_path)
    data_mod.write_segments(segments, seg_path)
    _write_manifest(out, "synth", cfg, {}, [train_path, test_path, label_path, seg_path])
    print(f"wrote synthetic bundle to {out} ({len(segments)} anomaly segments)")
    return 0


TRAIN_DEFAULTS = {
    "variant": "patched-deltanet",
    "window": 100,
    "patch": None,  # resolved per variant below
    "d_model": 128,
    "d_ff": 1024,
    "lr": 1e-3,
    "epochs": 10,
    "batch_size": 16,
    "stride": None,
    "normalize": True,
    "model_seed": 0,
}


def cmd_train(args) -> int:
    cfg = _resolve(args, _load_config_file(args.config), TRAIN_DEFAULTS)
    if args.no_gate:
        if cfg["variant"] not in ("patched-deltanet", "no-gate"):
            raise UsageError("--no-gate conflicts with --variant " + cfg["variant"])
        cfg["variant"] = "no-gate"
    if cfg["patch"] is None:
        cfg["patch"] = 1 if cfg["variant"] == "pointwise" else 10
    if cfg["variant"] == "pointwise" and cfg["patch"] != 1:
        raise UsageError("--variant pointwise requires --patch 1")
    out = _out_dir(args.out)
    train_values = data_mod._parse_matrix(args.train)
    series = TimeSeries(values=train_values)
    cfg["features"] = series.n_features

    model_config = ModelConfig(
        variant=cfg["variant"],
        window_len=cfg["window"],
        patch_len=cfg["patch"],
        n_features=series.n_features,
        d_model=cfg["d_model"],
        d_ff=cfg["d_ff"],
        seed=cfg["model_seed"],
    )
    train_config = TrainConfig(
        learning_rate=cfg["lr"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        window_stride=cfg["stride"],
        seed=cfg["model_seed"],
    )
    mean, std = data_mod.train_stats(train_values)
    if cfg["normalize"]:
        series = TimeSeries(values=data_mod.normalize_values(train_values, mean, std))
    else:
        mean = np.zeros(series.n_features)
        std = np.ones(series.n_features)

    log_path = out / "epochs.log"
    ckpt_path = out / "checkpoint.bin"
    with open(log_path, "w") as log_fh:
        def log(line: str) -> None:
            log_fh.write(line + "\n")
            print(line)

        params, history = train(series, model_config, train_config, log=log)
    save_checkpoint(ckpt_path, model_config, params, norm_mean=mean, norm_std=std)
    _write_manifest(out, "train", cfg, {"train": args.train}, [ckpt_path, log_path])
    print(f"trained {cfg['variant']} ({param_count(model_config)} params) -> {ckpt_path}")
    return 0


EVAL_DEFAULTS = {
    "threshold_mode": "best-f1",
    "percentile": 99.0,
}


def _load_scores_csv(path) -> tuple[np.ndarray, np.ndarray]:
    scores = []
    mask = []
    with open(path, "r") as fh:
        header = fh.readline().strip()
        if header != "index,score,covered,label":
            raise DataError(f"{path}: unexpected scores CSV header {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields")
            scores.append(float(fields[1]))
            mask.append(fields[2] == "1")
    return np.array(scores), np.array(mask, dtype=bool)


def _write_scores_csv(score_series: scoring.ScoreSeries, labels, path) -> None:
    with open(path, "w") as fh:
        fh.write("index,score,covered,label\n")
        for i in range(score_series.scores.size):
            fh.write(f"{i},{float(score_series.scores[i])!r},"
                     f"{int(score_series.mask[i])},{int(labels[i])}\n")


def cmd_eval(args) -> int:
    cfg = _resolve(args, _load_config_file(args.config), EVAL_DEFAULTS)
    out = _out_dir(args.out)
    labels = data_mod._parse_labels(args.labels)

    if args.scores:
        scores_vec, mask = _load_scores_csv(args.scores)
        if scores_vec.size != labels.size:
            raise DataError(
                f"scores length {scores_vec.size} does not match labels {labels.size}")
        score_series = scoring.ScoreSeries(scores=scores_vec, mask=mask)
        inputs = {"scores": args.scores, "labels": args.labels}
    else:
        if not args.checkpoint or not args.test:
            raise UsageError("eval needs --checkpoint and --test (or --scores)")
        config, params, mean, std = load_checkpoint(args.checkpoint)
        test_values = data_mod._parse_matrix(args.test)
        if labels.size != test_values.shape[0]:
            raise DataError(
                f"label length {labels.size} does not match test length "
                f"{test_values.shape[0]}")
        if test_values.shape[1] != config.n_features:
            raise DataError(
                f"checkpoint expects {config.n_features} features but test has "
                f"{test_values.shape[1]}")
        if mean is not None:
            test_values = data_mod.normalize_values(test_values, mean, std)
        score_series = scoring.point_scores(
            params, config, TimeSeries(values=test_values))
        inputs = {"checkpoint": args.checkpoint, "test": args.test,
                  "labels": args.labels}

    mask = score_series.mask
    report = scoring.best_f1(score_series.scores[mask], labels[mask])
    if cfg["threshold_mode"] == "percentile":
        threshold = float(np.percentile(score_series.scores[mask], cfg["percentile"]))
        precision, recall, f1, (tp, fp, fn, tn) = scoring.f1_at_threshold(
            score_series.scores[mask], labels[mask], threshold)
        report = dataclasses.replace(
            report, pa_f1=f1, threshold=threshold, precision=precision,
            recall=recall, tp=tp, fp=fp, fn=fn, tn=tn)
    elif cfg["threshold_mode"] != "best-f1":
        raise UsageError(f"unknown threshold mode {cfg['threshold_mode']!r}")

    report_path = out / "report.txt"
    sweep_path = out / "sweep.csv"
    scores_path = out / "scores.csv"
    scoring.write_report(report, report_path)
    scoring.write_sweep_csv(report, sweep_path)
    _write_scores_csv(score_series, labels, scores_path)
    _write_manifest(out, "eval", cfg, inputs, [report_path, sweep_path, scores_path])
    print(f"roc_auc={report.roc_auc:.4f} pa_f1={report.pa_f1:.4f} "
          f"threshold={report.threshold:.6g}")
    return 0


BENCH_DEFAULTS = {
    "lengths": list(bench_mod.DEFAULT_LENGTHS),
    "variants": list(bench_mod.DEFAULT_VARIANTS),
    "batch_size": 16,
    "repetitions": 20,
    "warmup": 3,
    "patch": 10,
    "features": 8,
    "d_model": 128,
    "d_ff": 1024,
    "dtype": "float32",
    "data_seed": 0,
}


def cmd_bench(args) -> int:
    cfg = _resolve(args, _load_config_file(args.config), BENCH_DEFAULTS)
    if args.full_ladder:
        cfg["lengths"] = list(bench_mod.FULL_LADDER)
    out = _out_dir(args.out)
    config = bench_mod.BenchConfig(
        variants=tuple(cfg["variants"]),
        lengths=tuple(cfg["lengths"]),
        batch_size=cfg["batch_size"],
        repetitions=cfg["repetitions"],
        warmup=cfg["warmup"],
        patch_len=cfg["patch"],
        n_features=cfg["features"],
        d_model=cfg["d_model"],
        d_ff=cfg["d_ff"],
        seed=cfg["data_seed"],
        dtype=cfg["dtype"],
    )
    records = bench_mod.measure(config)
    csv_path = out / "bench.csv"
    bench_mod.write_csv(records, csv_path)
    svg_path = out / "bench.svg"
    from .plotting import plot_records

    plot_records(records, svg_path)
    _write_manifest(out, "bench", cfg, {}, [csv_path, svg_path])
    for variant in config.variants:
        rows = [r for r in records if r.variant == variant]
        if len(rows) >= 3:
            slope = bench_mod.fit_scaling_exponent(rows)
            print(f"{variant}: fitted log-log latency slope {slope:.3f}")
    print(f"wrote {csv_path}")
    return 0


def cmd_plot(args) -> int:
    from .plotting import plot_csv

    plot_csv(args.csv, args.svg)
    print(f"wrote {args.svg}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="patchdelta",
                     description="patch-token delta-rule anomaly detection pipeline")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--config")
    p_synth.add_argument("--length", type=int)
    p_synth.add_argument("--features", type=int)
    p_synth.add_argument("--noise-std", dest="noise_std", type=float)
    p_synth.add_argument("--spikes", type=int)
    p_synth.add_argument("--shifts", type=int)
    p_synth.add_argument("--drifts", type=int)
    p_synth.add_argument("--spike-scale", dest="spike_scale", type=_float_pair)
    p_synth.add_argument("--shift-scale", dest="shift_scale", type=_float_pair)
    p_synth.add_argument("--drift-scale", dest="drift_scale", type=_float_pair)
    p_synth.add_argument("--seed", "--data-seed", dest="data_seed", type=int)
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train a model variant")
    p_train.add_argument("--train", required=True, help="training series CSV")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--config")
    p_train.add_argument("--variant", choices=("patched-deltanet", "no-gate",
                                               "pointwise", "patched-attention"))
    p_train.add_argument("--no-gate", dest="no_gate", action="store_true",
                         help="disable the memory gate (ablation)")
    p_train.add_argument("--window", type=int)
    p_train.add_argument("--patch", type=int)
    p_train.add_argument("--d-model", dest="d_model", type=int)
    p_train.add_argument("--d-ff", dest="d_ff", type=int)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", dest="batch_size", type=int)
    p_train.add_argument("--stride", type=int)
    p_train.add_argument("--normalize", dest="normalize",
                         action=argparse.BooleanOptionalAction)
    p_train.add_argument("--seed", "--model-seed", dest="model_seed", type=int)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="score a test series and report metrics")
    p_eval.add_argument("--checkpoint")
    p_eval.add_argument("--test")
    p_eval.add_argument("--labels", required=True)
    p_eval.add_argument("--scores", help="evaluate precomputed scores CSV instead")
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--config")
    p_eval.add_argument("--threshold-mode", dest="threshold_mode",
                        choices=("best-f1", "percentile"))
    p_eval.add_argument("--percentile", type=float)
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser("bench", help="latency/memory scaling harness")
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--config")
    p_bench.add_argument("--lengths", type=_int_list)
    p_bench.add_argument("--variants", type=lambda s: s.split(","))
    p_bench.add_argument("--full-ladder", dest="full_ladder", action="store_true",
                         help="use the 8k..512k ladder")
    p_bench.add_argument("--batch-size", dest="batch_size", type=int)
    p_bench.add_argument("--repetitions", type=int)
    p_bench.add_argument("--warmup", type=int)
    p_bench.add_argument("--patch", type=int)
    p_bench.add_argument("--features", type=int)
    p_bench.add_argument("--d-model", dest="d_model", type=int)
    p_bench.add_argument("--d-ff", dest="d_ff", type=int)
    p_bench.add_argument("--dtype", choices=("float32", "float64"))
    p_bench.add_argument("--seed", "--data-seed", dest="data_seed", type=int)
    p_bench.set_defaults(func=cmd_bench)

    p_plot = sub.add_parser("plot", help="render a benchmark CSV to SVG")
    p_plot.add_argument("--csv", required=True)
    p_plot.add_argument("--svg", required=True)
    p_plot.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        if isinstance(exc, DataError):
            print(f"data error: {exc}", file=sys.stderr)
            return 2
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

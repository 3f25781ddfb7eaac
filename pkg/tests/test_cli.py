import json
from pathlib import Path

import numpy as np
import pytest

from patchdelta.cli import main
from patchdelta.model import ModelConfig, init_model, iter_arrays, load_checkpoint
from patchdelta.numerics import make_rng


def run(*argv):
    return main(list(argv))


def read_report(path: Path) -> dict:
    out = {}
    for line in path.read_text().splitlines():
        key, value = line.split("=", 1)
        out[key] = eval(value)  # repr'd ints and floats
    return out


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = run("synth", "--out", str(out), "--length", "1200", "--features", "4",
               "--seed", "11")
    assert code == 0
    return out


class TestSynth:
    def test_outputs_present_with_manifest(self, synth_dir):
        for name in ("train.csv", "test.csv", "labels.csv", "segments.json",
                     "manifest.json"):
            assert (synth_dir / name).exists()
        manifest = json.loads((synth_dir / "manifest.json").read_text())
        assert manifest["subcommand"] == "synth"
        assert set(manifest["outputs"]) == {"train.csv", "test.csv", "labels.csv",
                                            "segments.json"}

    def test_byte_identical_reruns(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("synth", "--out", str(out), "--seed", "7",
                       "--length", "1500", "--features", "3") == 0
        for name in ("train.csv", "test.csv", "labels.csv", "segments.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_zero_anomaly_spec(self, tmp_path):
        out = tmp_path / "clean"
        assert run("synth", "--out", str(out), "--length", "300",
                   "--spikes", "0", "--shifts", "0", "--drifts", "0") == 0
        labels = (out / "labels.csv").read_text().split()
        assert set(labels) == {"0"}

    def test_spike_count_in_sidecar(self, tmp_path):
        out = tmp_path / "spikes"
        assert run("synth", "--out", str(out), "--length", "1000",
                   "--spikes", "3", "--shifts", "0", "--drifts", "0") == 0
        segments = json.loads((out / "segments.json").read_text())
        assert len(segments) == 3
        assert all(s["kind"] == "spike" for s in segments)

    def test_manifest_reproduces_run(self, tmp_path, synth_dir):
        out = tmp_path / "replay"
        assert run("synth", "--out", str(out), "--config",
                   str(synth_dir / "manifest.json")) == 0
        for name in ("train.csv", "test.csv", "labels.csv"):
            assert (out / name).read_bytes() == (synth_dir / name).read_bytes()


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, synth_dir):
    out = tmp_path_factory.mktemp("trained")
    code = run("train", "--train", str(synth_dir / "train.csv"),
               "--out", str(out), "--epochs", "2", "--seed", "5")
    assert code == 0
    return out


class TestTrain:
    def test_defaults_recorded_in_manifest(self, trained_dir):
        manifest = json.loads((trained_dir / "manifest.json").read_text())
        cfg = manifest["config"]
        assert (cfg["window"], cfg["patch"], cfg["d_model"]) == (100, 10, 128)
        assert cfg["variant"] == "patched-deltanet"
        assert cfg["model_seed"] == 5

    def test_checkpoint_and_log(self, trained_dir):
        config, params, mean, std = load_checkpoint(trained_dir / "checkpoint.bin")
        assert config.variant == "patched-deltanet"
        assert mean is not None and mean.shape == (4,)
        log_lines = (trained_dir / "epochs.log").read_text().splitlines()
        assert len(log_lines) == 2
        assert log_lines[0].startswith("epoch=1 ")

    def test_pointwise_forces_patch_one(self, tmp_path, synth_dir):
        out = tmp_path / "pw"
        assert run("train", "--train", str(synth_dir / "train.csv"),
                   "--out", str(out), "--variant", "pointwise",
                   "--epochs", "0") == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["patch"] == 1

    def test_pointwise_patch_conflict_is_usage_error(self, tmp_path, synth_dir, capsys):
        code = run("train", "--train", str(synth_dir / "train.csv"),
                   "--out", str(tmp_path / "x"), "--variant", "pointwise",
                   "--patch", "10")
        assert code == 1
        assert "pointwise" in capsys.readouterr().err

    def test_no_gate_flag_selects_variant(self, tmp_path, synth_dir):
        out = tmp_path / "ng"
        assert run("train", "--train", str(synth_dir / "train.csv"),
                   "--out", str(out), "--no-gate", "--epochs", "0") == 0
        config, _, _, _ = load_checkpoint(out / "checkpoint.bin")
        assert config.variant == "no-gate"

    def test_no_gate_conflicts_with_attention(self, tmp_path, synth_dir):
        code = run("train", "--train", str(synth_dir / "train.csv"),
                   "--out", str(tmp_path / "y"), "--no-gate",
                   "--variant", "patched-attention")
        assert code == 1

    def test_zero_epochs_emits_initialisation(self, tmp_path, synth_dir):
        out = tmp_path / "init"
        assert run("train", "--train", str(synth_dir / "train.csv"),
                   "--out", str(out), "--epochs", "0", "--seed", "42") == 0
        config, params, _, _ = load_checkpoint(out / "checkpoint.bin")
        reference = init_model(ModelConfig(variant="patched-deltanet",
                                           n_features=4, seed=42))
        for (name, a), (_, b) in zip(iter_arrays(params), iter_arrays(reference)):
            assert np.array_equal(a, b), name

    def test_missing_train_file_is_data_error(self, tmp_path):
        code = run("train", "--train", str(tmp_path / "nope.csv"),
                   "--out", str(tmp_path / "z"))
        assert code == 2


class TestEval:
    def test_end_to_end_eval(self, tmp_path, synth_dir, trained_dir):
        out = tmp_path / "eval"
        code = run("eval", "--checkpoint", str(trained_dir / "checkpoint.bin"),
                   "--test", str(synth_dir / "test.csv"),
                   "--labels", str(synth_dir / "labels.csv"),
                   "--out", str(out))
        assert code == 0
        report = read_report(out / "report.txt")
        assert 0.0 <= report["roc_auc"] <= 1.0
        assert 0.0 <= report["pa_f1"] <= 1.0
        # harmonic-mean identity at the reported threshold
        p, r = report["precision"], report["recall"]
        expected = 2 * p * r / (p + r) if p + r else 0.0
        assert abs(report["pa_f1"] - expected) < 1e-12
        assert (out / "sweep.csv").exists()
        scores_lines = (out / "scores.csv").read_text().splitlines()
        assert scores_lines[0] == "index,score,covered,label"
        assert len(scores_lines) == 1201

    def test_perfect_oracle_scores_fixture(self, tmp_path, synth_dir):
        labels = [int(x) for x in (synth_dir / "labels.csv").read_text().split()]
        scores_path = tmp_path / "oracle_scores.csv"
        with open(scores_path, "w") as fh:
            fh.write("index,score,covered,label\n")
            for i, label in enumerate(labels):
                fh.write(f"{i},{float(label)!r},1,{label}\n")
        out = tmp_path / "eval_oracle"
        assert run("eval", "--scores", str(scores_path),
                   "--labels", str(synth_dir / "labels.csv"),
                   "--out", str(out)) == 0
        report = read_report(out / "report.txt")
        assert report["pa_f1"] == 1.0
        assert report["roc_auc"] == 1.0

    def test_shuffled_labels_auc_near_half(self, tmp_path):
        # permutation null over 10 seeds
        for seed in range(10):
            rng = make_rng(seed)
            size = 2000
            scores = rng.standard_normal(size)
            labels = (rng.uniform(size=size) < 0.3).astype(int)
            labels[0], labels[1] = 0, 1
            labels_path = tmp_path / f"labels_{seed}.csv"
            labels_path.write_text("".join(f"{v}\n" for v in labels))
            scores_path = tmp_path / f"scores_{seed}.csv"
            with open(scores_path, "w") as fh:
                fh.write("index,score,covered,label\n")
                for i in range(size):
                    fh.write(f"{i},{float(scores[i])!r},1,{labels[i]}\n")
            out = tmp_path / f"eval_{seed}"
            assert run("eval", "--scores", str(scores_path),
                       "--labels", str(labels_path), "--out", str(out)) == 0
            report = read_report(out / "report.txt")
            assert abs(report["roc_auc"] - 0.5) <= 0.05, seed

    def test_percentile_threshold_mode(self, tmp_path, synth_dir, trained_dir):
        out = tmp_path / "eval_pct"
        code = run("eval", "--checkpoint", str(trained_dir / "checkpoint.bin"),
                   "--test", str(synth_dir / "test.csv"),
                   "--labels", str(synth_dir / "labels.csv"),
                   "--out", str(out), "--threshold-mode", "percentile",
                   "--percentile", "98")
        assert code == 0
        report = read_report(out / "report.txt")
        assert report["tp"] + report["fn"] == report["n_anomalous"]

    def test_feature_mismatch_is_data_error(self, tmp_path, trained_dir):
        bad_test = tmp_path / "bad_test.csv"
        bad_test.write_text("".join("1.0,2.0\n" for _ in range(120)))
        bad_labels = tmp_path / "bad_labels.csv"
        bad_labels.write_text("0\n" * 119 + "1\n")
        code = run("eval", "--checkpoint", str(trained_dir / "checkpoint.bin"),
                   "--test", str(bad_test), "--labels", str(bad_labels),
                   "--out", str(tmp_path / "ev"))
        assert code == 2

    def test_eval_without_inputs_is_usage_error(self, tmp_path, synth_dir):
        code = run("eval", "--labels", str(synth_dir / "labels.csv"),
                   "--out", str(tmp_path / "e2"))
        assert code == 1


class TestBenchCli:
    def test_csv_shape_and_columns(self, tmp_path):
        out = tmp_path / "bench"
        code = run("bench", "--out", str(out), "--lengths", "200,400,800",
                   "--batch-size", "2", "--repetitions", "5", "--warmup", "1",
                   "--features", "3", "--d-model", "16", "--d-ff", "32")
        assert code == 0
        lines = (out / "bench.csv").read_text().splitlines()
        assert lines[0] == "variant,L,N,batch,median_ms,iqr_ms,peak_bytes"
        assert len(lines) == 1 + 3 * 3  # three variants x three lengths
        assert (out / "bench.svg").exists()

    def test_variant_subset(self, tmp_path):
        out = tmp_path / "bench1"
        code = run("bench", "--out", str(out), "--lengths", "200,400",
                   "--variants", "patched-deltanet", "--batch-size", "1",
                   "--repetitions", "5", "--warmup", "0",
                   "--features", "2", "--d-model", "8", "--d-ff", "16")
        assert code == 0
        lines = (out / "bench.csv").read_text().splitlines()
        assert len(lines) == 3
        assert all(line.startswith("patched-deltanet,") for line in lines[1:])


class TestPlotCli:
    def test_plot_from_csv(self, tmp_path):
        csv_path = tmp_path / "bench.csv"
        csv_path.write_text(
            "variant,L,N,batch,median_ms,iqr_ms,peak_bytes\n"
            "patched-deltanet,1000,100,16,1.0,0.1,1000\n"
            "patched-deltanet,2000,200,16,2.0,0.1,2000\n"
            "patched-deltanet,4000,400,16,4.0,0.1,4000\n")
        svg = tmp_path / "out.svg"
        assert run("plot", "--csv", str(csv_path), "--svg", str(svg)) == 0
        assert "<svg" in svg.read_text()


class TestUsageErrors:
    def test_unknown_subcommand(self, capsys):
        assert run("frobnicate") == 1

    def test_missing_required_flag(self):
        assert run("synth") == 1

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from affectfuse.cli import main
from affectfuse.dataio import (
    read_gold_csv,
    read_labels_csv,
    read_prediction_csv,
    read_segments_csv,
)


def _values(stdout: str) -> dict[str, str]:
    out = {}
    for line in stdout.splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            out[key] = value
    return out


def _tree_digest(root: Path) -> list[tuple[str, str]]:
    files = sorted(p for p in root.rglob("*") if p.is_file())
    return [
        (str(p.relative_to(root)), hashlib.sha256(p.read_bytes()).hexdigest()) for p in files
    ]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """A small synthetic corpus plus fused gold, shared by the module."""
    root = tmp_path_factory.mktemp("corpus")
    rc = main(
        [
            "synth",
            "--out",
            str(root / "data"),
            "--recordings",
            "8",
            "--duration",
            "40",
            "--rate",
            "2",
            "--raters",
            "3",
            "--feature-dim",
            "4",
            "--seed",
            "77",
        ]
    )
    assert rc == 0
    rc = main(
        [
            "raaw",
            "--annotations",
            str(root / "data" / "annotations"),
            "--kind",
            "arousal",
            "--out",
            str(root / "gold"),
        ]
    )
    assert rc == 0
    return root


class TestSynth:
    def test_reports_and_writes(self, tmp_path, capsys):
        rc = main(
            [
                "synth",
                "--out",
                str(tmp_path / "c"),
                "--recordings",
                "2",
                "--duration",
                "20",
                "--raters",
                "2",
                "--seed",
                "5",
            ]
        )
        captured = capsys.readouterr()
        assert rc == 0
        vals = _values(captured.out)
        assert vals["recordings"] == "2"
        assert vals["feature_sets"] == "modal_a,modal_b"
        assert (tmp_path / "c" / "partitions.csv").is_file()

    def test_bad_parameter_exits_2(self, tmp_path, capsys):
        rc = main(
            ["synth", "--out", str(tmp_path / "c"), "--recordings", "0"]
        )
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_unknown_subcommand_exits_2(self):
        assert main(["mystery"]) == 2


class TestRaaw:
    def test_gold_files_with_sidecars(self, corpus, capsys):
        out = corpus / "gold"
        files = sorted(out.glob("*.csv"))
        assert len(files) == 8
        for f in files:
            ts, vals, meta = read_gold_csv(f)
            assert ts.size == vals.size == 81
            assert "weights" in meta
            assert meta["converged"] in (True, False)
            assert meta["iterations"] >= 1

    def test_parallel_jobs_byte_identical(self, corpus, tmp_path):
        ann = corpus / "data" / "annotations"
        rc = main(
            ["raaw", "--annotations", str(ann), "--kind", "arousal", "--out", str(tmp_path / "g1")]
        )
        assert rc == 0
        rc = main(
            [
                "raaw",
                "--annotations",
                str(ann),
                "--kind",
                "arousal",
                "--out",
                str(tmp_path / "g2"),
                "--jobs",
                "3",
            ]
        )
        assert rc == 0
        assert _tree_digest(tmp_path / "g1") == _tree_digest(tmp_path / "g2")

    def test_agreement_reported(self, corpus, tmp_path, capsys):
        ann = corpus / "data" / "annotations"
        rc = main(
            ["raaw", "--annotations", str(ann), "--kind", "arousal", "--out", str(tmp_path / "g")]
        )
        captured = capsys.readouterr()
        assert rc == 0
        vals = _values(captured.out)
        assert float(vals["agreement_mean"]) > 0.9
        assert vals["recordings"] == "8"

    def test_dump_paths(self, corpus, tmp_path):
        ann = corpus / "data" / "annotations"
        rc = main(
            [
                "raaw",
                "--annotations",
                str(ann),
                "--kind",
                "arousal",
                "--out",
                str(tmp_path / "g"),
                "--dump-paths",
                str(tmp_path / "paths"),
            ]
        )
        assert rc == 0
        dumps = sorted((tmp_path / "paths").rglob("*.csv"))
        assert len(dumps) == 24  # 8 recordings x 3 raters
        assert dumps[0].read_text().splitlines()[0] == "src_idx,ref_idx"

    def test_missing_annotations_exit_3(self, tmp_path, capsys):
        rc = main(
            [
                "raaw",
                "--annotations",
                str(tmp_path / "nowhere"),
                "--kind",
                "arousal",
                "--out",
                str(tmp_path / "g"),
            ]
        )
        assert rc == 3
        assert "data error:" in capsys.readouterr().err

    def test_single_rater_names_recording(self, tmp_path, capsys):
        ann = tmp_path / "ann" / "rec_x" / "arousal"
        ann.mkdir(parents=True)
        ts = np.arange(20) * 500
        lines = ["timestamp_ms,value"] + [f"{t},{np.sin(t / 2000.0)}" for t in ts]
        (ann / "r0.csv").write_text("\n".join(lines) + "\n")
        rc = main(
            [
                "raaw",
                "--annotations",
                str(tmp_path / "ann"),
                "--kind",
                "arousal",
                "--out",
                str(tmp_path / "g"),
            ]
        )
        captured = capsys.readouterr()
        assert rc == 2
        assert "rec_x" in captured.err


class TestPhysio:
    def test_runs_and_records_substitution(self, corpus, tmp_path, capsys):
        rc = main(
            [
                "physio",
                "--annotations",
                str(corpus / "data" / "annotations"),
                "--kind",
                "arousal",
                "--eda",
                str(corpus / "data" / "eda"),
                "--out",
                str(tmp_path / "pg"),
            ]
        )
        captured = capsys.readouterr()
        assert rc == 0
        assert float(_values(captured.out)["agreement_mean"]) > 0.5
        _, _, meta = read_gold_csv(sorted((tmp_path / "pg").glob("*.csv"))[0])
        assert meta["sg_window"] == 26
        assert any(r.startswith("physio:") for r in meta["rater_ids"])
        assert meta["removed_rater"] not in meta["rater_ids"]

    def test_missing_eda_file_named(self, corpus, tmp_path, capsys):
        eda_dir = tmp_path / "eda_partial"
        eda_dir.mkdir()
        src = sorted((corpus / "data" / "eda").glob("*.csv"))[0]
        (eda_dir / src.name).write_text(src.read_text())
        rc = main(
            [
                "physio",
                "--annotations",
                str(corpus / "data" / "annotations"),
                "--kind",
                "arousal",
                "--eda",
                str(eda_dir),
                "--out",
                str(tmp_path / "pg"),
            ]
        )
        captured = capsys.readouterr()
        assert rc == 2
        assert "rec_001.csv" in captured.err


class TestDiscretize:
    def test_labels_and_report(self, corpus, tmp_path, capsys):
        rc = main(
            [
                "discretize",
                "--gold",
                str(corpus / "gold"),
                "--segments",
                str(corpus / "data" / "segments.csv"),
                "--target",
                "arousal",
                "--method",
                "kmeans",
                "--out",
                str(tmp_path / "labels.csv"),
                "--model-out",
                str(tmp_path / "classes.json"),
            ]
        )
        captured = capsys.readouterr()
        assert rc == 0
        vals = _values(captured.out)
        assert "silhouette" in vals
        assert vals["min_share_ok"] in ("True", "False")
        counts = [int(c) for c in vals["class_counts"].split(",")]
        assert len(counts) == 5
        labels = read_labels_csv(tmp_path / "labels.csv")
        segs = read_segments_csv(corpus / "data" / "segments.csv")
        assert set(labels) == {s.segment_id for s in segs}
        assert sum(counts) == len(labels)
        payload = json.loads((tmp_path / "classes.json").read_text())
        assert payload["kind"] == "class_model"

    def test_missing_gold_dir_exit_3(self, corpus, tmp_path):
        rc = main(
            [
                "discretize",
                "--gold",
                str(tmp_path / "nope"),
                "--segments",
                str(corpus / "data" / "segments.csv"),
                "--target",
                "arousal",
                "--out",
                str(tmp_path / "labels.csv"),
            ]
        )
        assert rc == 3


@pytest.fixture(scope="module")
def trained(corpus, tmp_path_factory):
    """Two tiny regression models on the two synthetic feature sets."""
    root = tmp_path_factory.mktemp("trained")
    for fset in ("modal_a", "modal_b"):
        rc = main(
            [
                "train",
                "--task",
                "stress",
                "--features",
                str(corpus / "data" / "features" / fset),
                "--gold",
                str(corpus / "gold"),
                "--partitions",
                str(corpus / "data" / "partitions.csv"),
                "--out",
                str(root / fset),
                "--window",
                "30",
                "--hop",
                "15",
                "--hidden",
                "8",
                "--epochs",
                "3",
                "--patience",
                "3",
                "--batch",
                "4",
                "--seed",
                "9",
            ]
        )
        assert rc == 0
    return root


class TestTrainRegression:
    def test_artifacts_written(self, corpus, trained, capsys):
        out = trained / "modal_a"
        assert (out / "model.json").is_file()
        assert (out / "history.csv").is_file()
        for split in ("train", "devel", "test"):
            preds = sorted((out / "preds" / split).glob("*.csv"))
            assert preds, f"no predictions for {split}"
        # prediction length matches the gold grid
        ts, _ = read_prediction_csv(sorted((out / "preds" / "devel").glob("*.csv"))[0])
        assert ts.size == 81

    def test_history_csv_shape(self, trained):
        lines = (trained / "modal_a" / "history.csv").read_text().splitlines()
        assert lines[0] == "epoch,train_loss,devel_metric"
        assert len(lines) == 4  # 3 epochs

    def test_missing_gold_flag_exit_2(self, corpus, tmp_path, capsys):
        rc = main(
            [
                "train",
                "--task",
                "stress",
                "--features",
                str(corpus / "data" / "features" / "modal_a"),
                "--out",
                str(tmp_path / "m"),
            ]
        )
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_huge_gold_values_exit_4(self, corpus, tmp_path, capsys):
        # gold values overflow the loss -> numeric failure, not a crash
        bad_gold = tmp_path / "gold"
        for f in sorted((corpus / "gold").glob("*.csv")):
            ts, vals, _ = read_gold_csv(f)
            lines = ["timestamp_ms,value"]
            lines += [f"{int(t)},{1e200 * (1 if i % 2 else -1)}" for i, t in enumerate(ts)]
            (bad_gold / f.name).parent.mkdir(parents=True, exist_ok=True)
            (bad_gold / f.name).write_text("\n".join(lines) + "\n")
        rc = main(
            [
                "train",
                "--task",
                "stress",
                "--features",
                str(corpus / "data" / "features" / "modal_a"),
                "--gold",
                str(bad_gold),
                "--partitions",
                str(corpus / "data" / "partitions.csv"),
                "--out",
                str(tmp_path / "m"),
                "--hidden",
                "4",
                "--epochs",
                "2",
                "--lr",
                "1e-2",
            ]
        )
        captured = capsys.readouterr()
        assert rc == 4
        assert "numeric error:" in captured.err


class TestEvalRegression:
    def test_scores_predictions(self, corpus, trained, capsys):
        rc = main(
            [
                "eval",
                "--pred",
                str(trained / "modal_a" / "preds" / "devel"),
                "--gold",
                str(corpus / "gold"),
            ]
        )
        captured = capsys.readouterr()
        assert rc == 0
        vals = _values(captured.out)
        assert -1.0 <= float(vals["ccc"]) <= 1.0

    def test_two_target_combined(self, corpus, trained, capsys):
        rc = main(
            [
                "eval",
                "--pred",
                str(trained / "modal_a" / "preds" / "devel"),
                "--gold",
                str(corpus / "gold"),
                "--name",
                "arousal",
                "--pred2",
                str(trained / "modal_b" / "preds" / "devel"),
                "--gold2",
                str(corpus / "gold"),
                "--name2",
                "valence",
            ]
        )
        captured = capsys.readouterr()
        assert rc == 0
        vals = _values(captured.out)
        expected = (float(vals["arousal"]) + float(vals["valence"])) / 2.0
        assert float(vals["combined"]) == pytest.approx(expected, abs=1e-6)

    def test_per_recording_table_on_stderr(self, corpus, trained, capsys):
        rc = main(
            [
                "eval",
                "--pred",
                str(trained / "modal_a" / "preds" / "devel"),
                "--gold",
                str(corpus / "gold"),
                "--per-recording",
            ]
        )
        captured = capsys.readouterr()
        assert rc == 0
        assert "rec_" in captured.err

    def test_needs_some_input_exit_2(self):
        assert main(["eval"]) == 2


class TestSentPath:
    @pytest.fixture(scope="class")
    @staticmethod
    def sent_run(corpus, tmp_path_factory):
        root = tmp_path_factory.mktemp("sent")
        rc = main(
            [
                "discretize",
                "--gold",
                str(corpus / "gold"),
                "--segments",
                str(corpus / "data" / "segments.csv"),
                "--target",
                "arousal",
                "--method",
                "kmeans",
                "--out",
                str(root / "labels.csv"),
            ]
        )
        assert rc == 0
        for fset in ("modal_a", "modal_b"):
            rc = main(
                [
                    "train",
                    "--task",
                    "sent",
                    "--features",
                    str(corpus / "data" / "features" / fset),
                    "--segments",
                    str(corpus / "data" / "segments.csv"),
                    "--labels",
                    str(root / "labels.csv"),
                    "--out",
                    str(root / fset),
                    "--hidden",
                    "8",
                    "--epochs",
                    "3",
                    "--patience",
                    "3",
                    "--batch",
                    "8",
                    "--seed",
                    "9",
                ]
            )
            assert rc == 0
        return root

    def test_sent_training_artifacts(self, sent_run):
        out = sent_run / "modal_a"
        assert (out / "model.json").is_file()
        for split in ("train", "devel", "test"):
            assert (out / "preds" / f"{split}_labels.csv").is_file()
            logits = (out / "preds" / f"{split}_logits.csv").read_text().splitlines()
            assert logits[0].startswith("segment_id,l0")

    def test_eval_classification(self, sent_run, corpus, capsys):
        rc = main(
            [
                "eval",
                "--pred-labels",
                str(sent_run / "modal_a" / "preds" / "devel_labels.csv"),
                "--gold-labels",
                str(sent_run / "labels.csv"),
            ]
        )
        captured = capsys.readouterr()
        assert rc == 0
        score = float(_values(captured.out)["macro_f1"])
        assert 0.0 <= score <= 1.0

    def test_fuse_late_sent(self, sent_run, capsys):
        rc = main(
            [
                "fuse-late",
                "--task",
                "sent",
                "--streams",
                str(sent_run / "modal_a" / "preds"),
                str(sent_run / "modal_b" / "preds"),
                "--gold-labels",
                str(sent_run / "labels.csv"),
                "--out",
                str(sent_run / "fused"),
                "--epochs",
                "3",
                "--patience",
                "3",
                "--batch",
                "8",
            ]
        )
        captured = capsys.readouterr()
        assert rc == 0
        vals = _values(captured.out)
        assert "devel_f1" in vals
        assert (sent_run / "fused" / "preds" / "devel_labels.csv").is_file()


class TestFuseLateRegression:
    def test_fuses_two_streams(self, corpus, trained, tmp_path, capsys):
        rc = main(
            [
                "fuse-late",
                "--task",
                "stress",
                "--streams",
                str(trained / "modal_a" / "preds"),
                str(trained / "modal_b" / "preds"),
                "--gold",
                str(corpus / "gold"),
                "--partitions",
                str(corpus / "data" / "partitions.csv"),
                "--out",
                str(tmp_path / "fused"),
                "--epochs",
                "3",
                "--patience",
                "3",
                "--batch",
                "2",
            ]
        )
        captured = capsys.readouterr()
        assert rc == 0
        vals = _values(captured.out)
        assert "devel_ccc" in vals
        # parent-qualified names since both roots end in "preds"
        assert vals["streams"] == "modal_a_preds,modal_b_preds"
        for split in ("train", "devel", "test"):
            assert sorted((tmp_path / "fused" / "preds" / split).glob("*.csv"))

    def test_single_stream_exit_2(self, corpus, trained, tmp_path, capsys):
        rc = main(
            [
                "fuse-late",
                "--task",
                "stress",
                "--streams",
                str(trained / "modal_a" / "preds"),
                "--gold",
                str(corpus / "gold"),
                "--partitions",
                str(corpus / "data" / "partitions.csv"),
                "--out",
                str(tmp_path / "fused"),
            ]
        )
        assert rc == 2


class TestConfigFile:
    def test_config_sets_defaults_cli_wins(self, corpus, tmp_path, capsys):
        # rec_000 needs 4 refinement rounds to converge, so a cap below that
        # binds and the sidecar iteration count exposes the effective max-iter
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# fusion settings\nmax-iter = 2\n")
        rc = main(
            [
                "raaw",
                "--annotations",
                str(corpus / "data" / "annotations"),
                "--kind",
                "arousal",
                "--out",
                str(tmp_path / "g1"),
                "--config",
                str(cfg),
            ]
        )
        assert rc == 0
        _, _, meta = read_gold_csv(sorted((tmp_path / "g1").glob("*.csv"))[0])
        assert meta["iterations"] == 2
        assert meta["converged"] is False
        # explicit flag beats the config value
        rc = main(
            [
                "raaw",
                "--annotations",
                str(corpus / "data" / "annotations"),
                "--kind",
                "arousal",
                "--out",
                str(tmp_path / "g2"),
                "--config",
                str(cfg),
                "--max-iter",
                "3",
            ]
        )
        assert rc == 0
        _, _, meta = read_gold_csv(sorted((tmp_path / "g2").glob("*.csv"))[0])
        assert meta["iterations"] == 3

    def test_unknown_key_exit_2(self, corpus, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("warp-speed = 9\n")
        rc = main(
            [
                "raaw",
                "--annotations",
                str(corpus / "data" / "annotations"),
                "--kind",
                "arousal",
                "--out",
                str(tmp_path / "g"),
                "--config",
                str(cfg),
            ]
        )
        captured = capsys.readouterr()
        assert rc == 2
        assert "warp_speed" in captured.err

    def test_missing_config_is_parameter_error(self, corpus, tmp_path):
        rc = main(
            [
                "raaw",
                "--annotations",
                str(corpus / "data" / "annotations"),
                "--kind",
                "arousal",
                "--out",
                str(tmp_path / "g"),
                "--config",
                str(tmp_path / "ghost.cfg"),
            ]
        )
        assert rc == 2


class TestDataRoot:
    def test_env_resolves_relative_paths(self, corpus, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("AFFECTFUSE_DATA_ROOT", str(corpus))
        rc = main(
            [
                "raaw",
                "--annotations",
                "data/annotations",
                "--kind",
                "arousal",
                "--out",
                str(tmp_path / "g"),
            ]
        )
        assert rc == 0
        assert sorted((tmp_path / "g").glob("*.csv"))

    def test_absolute_paths_ignore_env(self, corpus, tmp_path, monkeypatch):
        monkeypatch.setenv("AFFECTFUSE_DATA_ROOT", str(tmp_path / "bogus"))
        rc = main(
            [
                "raaw",
                "--annotations",
                str(corpus / "data" / "annotations"),
                "--kind",
                "arousal",
                "--out",
                str(tmp_path / "g"),
            ]
        )
        assert rc == 0

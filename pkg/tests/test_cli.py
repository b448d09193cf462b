import csv
import json

import numpy as np
import pytest

from ummaso import cli
from ummaso import pipeline as pl
from ummaso.sarn import network as nw

FAST_CONFIG = {
    "umap": {"k": 8, "epochs": 30},
    "sarn": {"epochs": 30, "learning_rate": 0.1},
}


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A generated dataset plus one fitted artifacts directory."""
    root = tmp_path_factory.mktemp("cli")
    data_csv = str(root / "data.csv")
    config_path = str(root / "config.json")
    (root / "config.json").write_text(json.dumps(FAST_CONFIG))
    artifacts = str(root / "artifacts")
    assert cli.main(["generate", "--per-class", "140,40,20", "--out", data_csv, "--seed", "5"]) == 0
    assert cli.main([
        "fit", "--data", data_csv, "--out", artifacts, "--seed", "11", "--config", config_path,
    ]) == 0
    return root, data_csv, artifacts, config_path


class TestGenerate:
    def test_writes_requested_counts(self, tmp_path, capsys):
        out = str(tmp_path / "g.csv")
        code, stdout, _ = run_cli(
            capsys, "generate", "--per-class", "7,2,1", "--out", out, "--seed", "7"
        )
        assert code == 0
        assert stdout.strip() == "per_class_counts=7,2,1"
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["N", "P", "K", "pH", "EC", "fertility"]
        assert len(rows) == 11

    def test_missing_out_flag_exits_2(self, capsys):
        code, _, err = run_cli(capsys, "generate", "--per-class", "5,5")
        assert code == 2

    def test_unwritable_path_exits_3(self, capsys):
        code, _, err = run_cli(
            capsys, "generate", "--per-class", "2,2,2", "--out", "/nonexistent/dir/x.csv"
        )
        assert code == 3
        assert err.strip()

    def test_count_center_mismatch_exits_2(self, capsys):
        code, _, err = run_cli(capsys, "generate", "--per-class", "5,5", "--out", "/tmp/x.csv")
        assert code == 2
        assert "class centers" in err


class TestFit:
    def test_artifacts_directory_complete(self, workspace):
        _, _, artifacts, _ = workspace
        import os

        assert sorted(os.listdir(artifacts)) == sorted(pl.ARTIFACT_FILES)

    def test_metrics_summary_line(self, workspace, tmp_path, capsys):
        _, data_csv, _, config_path = workspace
        out = str(tmp_path / "run")
        code, stdout, _ = run_cli(
            capsys, "fit", "--data", data_csv, "--out", out, "--seed", "11",
            "--config", config_path,
        )
        assert code == 0
        parts = dict(p.split("=") for p in stdout.split())
        assert set(parts) == {"accuracy", "precision", "recall", "kappa"}
        for v in parts.values():
            assert len(v.split(".")[1]) == 4

    def test_repeat_run_byte_identical_metrics(self, workspace, tmp_path):
        root, data_csv, artifacts, config_path = workspace
        out2 = str(tmp_path / "again")
        assert cli.main([
            "fit", "--data", data_csv, "--out", out2, "--seed", "11",
            "--config", config_path,
        ]) == 0
        import os

        a = open(os.path.join(artifacts, "metrics.json"), "rb").read()
        b = open(os.path.join(out2, "metrics.json"), "rb").read()
        assert a == b

    def test_paths_may_come_from_the_config_file(self, workspace, tmp_path, capsys):
        _, data_csv, _, _ = workspace
        out = str(tmp_path / "from_config")
        config = dict(FAST_CONFIG, data=data_csv, out=out, seed=11)
        config["sarn"] = dict(FAST_CONFIG["sarn"], epochs=5)
        path = tmp_path / "full.json"
        path.write_text(json.dumps(config))
        code, stdout, _ = run_cli(capsys, "fit", "--config", str(path))
        assert code == 0
        assert "accuracy=" in stdout

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"sarn": {"epoch": 10}}))
        code, _, err = run_cli(
            capsys, "fit", "--data", "x.csv", "--out", "y", "--config", str(config)
        )
        assert code == 2
        assert "sarn.epoch" in err

    def test_missing_data_file_exits_3(self, tmp_path, capsys):
        code, _, err = run_cli(
            capsys, "fit", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o")
        )
        assert code == 3

    def test_malformed_csv_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b,fertility\n1,zzz,0\n")
        code, _, err = run_cli(
            capsys, "fit", "--data", str(bad), "--out", str(tmp_path / "o")
        )
        assert code == 2
        assert "row 2" in err


class TestPredict:
    def test_reproduces_in_process_predictions(self, workspace, tmp_path, capsys):
        _, data_csv, artifacts, _ = workspace
        out = str(tmp_path / "preds.csv")
        code, stdout, _ = run_cli(
            capsys, "predict", "--artifacts", artifacts, "--data", data_csv, "--out", out
        )
        assert code == 0
        with open(out) as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
        loaded = pl.load_artifacts(artifacts)
        from ummaso.dataset import load_csv

        data = load_csv(data_csv)
        feats = pl.transform_new(loaded, data.features)
        probs, labels = nw.predict(loaded.model, feats)
        assert len(rows) == probs.shape[0]
        for r, row in enumerate(rows):
            assert int(row["predicted_label"]) == labels[r]
            got = [float(row[f"p_class_{c}"]) for c in range(probs.shape[1])]
            np.testing.assert_array_equal(got, probs[r])

    def test_probability_rows_sum_to_one(self, workspace, tmp_path):
        _, data_csv, artifacts, _ = workspace
        out = str(tmp_path / "preds.csv")
        assert cli.main(["predict", "--artifacts", artifacts, "--data", data_csv, "--out", out]) == 0
        with open(out) as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                total = sum(float(v) for k, v in row.items() if k.startswith("p_class_"))
                assert total == pytest.approx(1.0, abs=1e-9)

    def test_missing_feature_column_exits_2(self, workspace, tmp_path, capsys):
        _, _, artifacts, _ = workspace
        bad = tmp_path / "bad.csv"
        bad.write_text("N,P,K,pH\n1,2,3,4\n")
        code, _, err = run_cli(
            capsys, "predict", "--artifacts", artifacts, "--data", str(bad),
            "--out", str(tmp_path / "p.csv"),
        )
        assert code == 2
        assert "EC" in err


class TestEvaluate:
    def test_perfect_agreement_prints_unit_accuracy(self, workspace, tmp_path, capsys):
        root, data_csv, artifacts, _ = workspace
        preds = str(tmp_path / "preds.csv")
        from ummaso.dataset import load_csv

        data = load_csv(data_csv)
        with open(preds, "w") as fh:
            fh.write("row_index,predicted_label\n")
            for r, label in enumerate(data.labels):
                fh.write(f"{r},{int(label)}\n")
        out = str(tmp_path / "metrics.json")
        code, stdout, _ = run_cli(
            capsys, "evaluate", "--predictions", preds, "--data", data_csv, "--out", out
        )
        assert code == 0
        assert "accuracy=1.0000" in stdout
        doc = json.loads(open(out).read())
        assert doc["accuracy"] == 1.0

    def test_optional_bar_chart_csv(self, workspace, tmp_path, capsys):
        _, data_csv, _, _ = workspace
        preds = str(tmp_path / "preds.csv")
        from ummaso.dataset import load_csv

        data = load_csv(data_csv)
        with open(preds, "w") as fh:
            fh.write("row_index,predicted_label\n")
            for r, label in enumerate(data.labels):
                fh.write(f"{r},{int(label)}\n")
        chart = tmp_path / "metrics.csv"
        code, _, _ = run_cli(
            capsys, "evaluate", "--predictions", preds, "--data", data_csv,
            "--out", str(tmp_path / "m.json"), "--csv", str(chart),
        )
        assert code == 0
        lines = chart.read_text().strip().splitlines()
        assert lines[0] == "metric,value"
        assert lines[1] == "accuracy,1.0"

    def test_row_count_mismatch_exits_2(self, workspace, tmp_path, capsys):
        _, data_csv, _, _ = workspace
        preds = tmp_path / "preds.csv"
        preds.write_text("row_index,predicted_label\n0,1\n")
        code, _, err = run_cli(
            capsys, "evaluate", "--predictions", str(preds), "--data", data_csv,
            "--out", str(tmp_path / "m.json"),
        )
        assert code == 2


class TestReduceSelect:
    def test_reduce_emits_three_column_embedding(self, workspace, tmp_path, capsys):
        _, data_csv, _, _ = workspace
        out = str(tmp_path / "embedding.csv")
        code, stdout, _ = run_cli(
            capsys, "reduce", "--data", data_csv, "--out", out, "--seed", "3"
        )
        assert code == 0
        with open(out) as fh:
            header = fh.readline().strip().split(",")
        assert header == ["dim_0", "dim_1", "label"]

    def test_select_ranking_puts_never_last(self, workspace, tmp_path, capsys):
        _, data_csv, _, _ = workspace
        out = str(tmp_path / "sel")
        code, stdout, _ = run_cli(capsys, "select", "--data", data_csv, "--out", out)
        assert code == 0
        doc = json.loads(open(out + "/ranking.json").read())
        entries = doc["entry_lambdas"]
        order = doc["order"]
        seen_never = False
        for j in order:
            if entries[j] == "never":
                seen_never = True
            else:
                assert not seen_never  # active features precede "never" ones


class TestUsability:
    def test_version_flag(self, capsys):
        code, stdout, _ = run_cli(capsys, "--version")
        assert code == 0
        assert stdout.strip().split()[-1].count(".") == 2

    @pytest.mark.parametrize(
        "command", ["generate", "fit", "predict", "evaluate", "reduce", "select"]
    )
    def test_help_per_subcommand(self, command, capsys):
        code, stdout, _ = run_cli(capsys, command, "--help")
        assert code == 0
        assert "usage" in stdout

    def test_unknown_subcommand_exits_2(self, capsys):
        code, _, _ = run_cli(capsys, "frobnicate")
        assert code == 2


class TestFuzzLite:
    def test_malformed_inputs_never_crash(self, tmp_path, capsys):
        rng = np.random.default_rng(99)
        alphabet = list("abc,01\n\r\"'x;\t .-")
        for case in range(60):
            blob = "".join(rng.choice(alphabet) for _ in range(int(rng.integers(0, 120))))
            path = tmp_path / f"fuzz_{case}.csv"
            path.write_text(blob)
            code = cli.main(
                ["fit", "--data", str(path), "--out", str(tmp_path / f"out_{case}")]
            )
            err = capsys.readouterr().err
            assert code in (2, 3, 4)
            assert err.strip()

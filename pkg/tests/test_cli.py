import json

import pytest

from smokeynet.cli import build_parser, main, read_predictions
from smokeynet.metrics import read_metrics_table
from smokeynet.training import DESK_TRAIN


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "corpus"
    assert main(["synth", "--out", str(out), "--fires", "4", "--frames-per-fire", "5", "--seed", "2"]) == 0
    return out


def test_prepare_reports_counts(corpus, capsys):
    assert main(["prepare", "--root", str(corpus)]) == 0
    out = capsys.readouterr().out
    assert "4 fires, 20 frames" in out
    assert "train\t2 fires\t10 images" in out


def test_train_eval_report_round_trip(corpus, tmp_path, capsys):
    run = tmp_path / "run"
    common = ["--root", str(corpus), "--geometry", "desk", "--variant", "resnet34_1frame"]
    assert main(["train", *common, "--epochs", "1", "--out", str(run)]) == 0
    assert (run / "checkpoints" / "epoch_001.pt").exists()
    assert "model.tile_size = 32" in (run / "config.txt").read_text()
    assert "train.micro_batch = 2" in (run / "config.txt").read_text()

    ev = tmp_path / "eval"
    assert main(["eval", *common, "--checkpoint", str(run / "checkpoints" / "epoch_001.pt"),
                 "--split", "val", "--name", "r34", "--out", str(ev)]) == 0
    [row] = read_metrics_table(ev / "metrics.tsv")
    assert row["Model"] == "r34"
    fires = read_predictions(ev / "predictions.tsv")
    assert len(fires) == 1 and len(next(iter(fires.values()))[0]) == 5

    rep = tmp_path / "report"
    assert main(["report", "--predictions", str(ev / "predictions.tsv"), "--out", str(rep)]) == 0
    assert (rep / "fire_grid.png").exists() and (rep / "fire_grid.tsv").exists()
    summary = json.loads((rep / "summary.json").read_text())
    assert set(summary) >= {"accuracy", "f1", "ttd_minutes"}


def test_errors_exit_2(tmp_path, capsys):
    assert main(["train", "--geometry", "desk", "--out", str(tmp_path)]) == 2
    assert "no archive root" in capsys.readouterr().err
    assert main(["prepare", "--root", str(tmp_path / "absent")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("train.nope = 1\n")
    assert main(["train", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_parser_rejects_unknown_variant():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["train", "--variant", "vgg", "--out", "x"])


def test_desk_runs_default_to_desk_training_settings():
    from smokeynet.cli import _run_config

    args = build_parser().parse_args(["train", "--geometry", "desk", "--out", "x"])
    assert _run_config(args).train == DESK_TRAIN

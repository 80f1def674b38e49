import json

import pytest

from torus_pursuit.cli import build_parser, main


def test_sweep_requires_seed():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["sweep", "--ratios", "1.0"])


def test_sweep_to_stdout(capsys):
    assert main(["sweep", "--seed", "1", "--ratios", "1.3", "--episodes", "3", "--policy", "greedy"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "ratio,episodes,captures,capture_rate,mean_steps"
    assert lines[1].startswith("1.3,3,")


def test_baseline_table(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["baseline", "--seed", "0", "--ratios", "1.3", "--episodes", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("policy,ratio")
    assert [l.split(",")[0] for l in lines[1:]] == ["greedy", "pincer"]


def test_export_then_replay(tmp_path, capsys):
    traj = tmp_path / "t.csv"
    assert main(["export", "--ratio", "1.3", "--seed", "2", "--out", str(traj)]) == 0
    assert main(["replay", "--ratio", "1.3", "--seed", "2", "--trajectory", str(traj)]) == 0
    assert "matches_stored=yes" in capsys.readouterr().out
    assert main(["replay", "--ratio", "1.3", "--seed", "3", "--trajectory", str(traj)]) == 1


def test_train_then_sweep_checkpoint(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"episode": {"max_steps": 30},
                               "train": {"batch_size": 8, "warmup": 10, "hidden": [8], "buffer_capacity": 200}}))
    run = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--seed", "0", "--episodes", "2", "--no-comm", "--out", str(run)]) == 0
    assert len((run / "metrics.csv").read_text().splitlines()) == 3
    saved = json.loads((run / "config.json").read_text())
    assert saved["train"]["comm_enabled"] is False and saved["episode"]["max_steps"] == 30
    assert main(["sweep", "--config", str(cfg), "--seed", "0", "--ratios", "0.6", "--episodes", "2",
                 "--policy", f"ckpt:{run / 'final'}"]) == 0
    assert capsys.readouterr().out.splitlines()[1].startswith("0.6,2,")


def test_unknown_config_section(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"other": {}}')
    with pytest.raises(SystemExit):
        main(["sweep", "--config", str(cfg), "--seed", "0", "--episodes", "1", "--ratios", "1"])

import json
import logging
import os

import pytest

import app
from conftest import tiny_experiment_dict
from controller import load_weights, param_count
from core_types import read_json, read_ppm, write_json
from experiment_config import (
    EFFECTIVE_CONFIG_NAME,
    ConfigValidationError,
    ExperimentConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    validate_schedule,
)


@pytest.fixture(autouse=True)
def log_dir(tmp_path, monkeypatch):
    path = tmp_path / "logs"
    monkeypatch.setenv("HAZNAV_LOG_DIR", str(path))
    yield path
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_haznav", False):
            root.removeHandler(handler)
            handler.close()


def _status(capsys):
    lines = capsys.readouterr().out.strip().splitlines()
    return json.loads(lines[-1])


def test_default_schedule_parameter_count():
    assert param_count(ExperimentConfig().schedule()) == 444219


def test_config_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("HAZNAV_THREADS", "3")
    path = tmp_path / "cfg.json"
    write_json(path, {"seed": 11, "camera": {"height": 40, "width": 60}})
    cfg = load_config(path)
    assert cfg.seed == 11
    assert cfg.threads == 3
    assert (cfg.camera.height, cfg.camera.width) == (40, 60)
    cfg = load_config(path, {"seed": 12, "threads": 2})
    assert cfg.seed == 12
    assert cfg.threads == 2
    assert cfg.camera.height == 40
    assert load_config().seed == ExperimentConfig().seed


def test_config_lists_every_bad_field():
    with pytest.raises(ConfigValidationError) as info:
        config_from_dict({
            "seed": -1,
            "train": {"batch_size": "many", "dropout": 1.5},
            "world": {"hazard_count": 2, "mystery": 1},
        })
    text = "\n".join(info.value.errors)
    assert len(info.value.errors) == 4
    for field_name in ("seed", "train.batch_size", "train.dropout", "world.mystery"):
        assert field_name in text


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigValidationError):
        load_config(tmp_path / "missing.json")


def test_effective_config_roundtrip(tmp_path):
    cfg = config_from_dict(tiny_experiment_dict(tmp_path))
    app.write_effective_config(cfg, tmp_path)
    again = load_config(tmp_path / EFFECTIVE_CONFIG_NAME)
    assert config_to_dict(again) == config_to_dict(cfg)


def test_parse_frames():
    assert app.parse_frames("400x600") == (400, 600)
    for bad in ("400", "axb", "1x600"):
        with pytest.raises(Exception):
            app.parse_frames(bad)


def test_setup_logging_writes_file(log_dir):
    app.setup_logging()
    logging.getLogger("haznav.test").debug("调试信息")
    assert (log_dir / "app.log").exists()
    marked = [h for h in logging.getLogger().handlers if getattr(h, "_haznav", False)]
    assert len(marked) == 2
    app.setup_logging()
    assert len([h for h in logging.getLogger().handlers if getattr(h, "_haznav", False)]) == 2


def test_heatmap_command(tmp_path, capsys):
    code = app.main(["heatmap", "--procedure", "radar", "--out", str(tmp_path)])
    status = _status(capsys)
    assert code == 0
    assert status["status"] == "ok"
    assert status["cells"] == 2500
    lines = (tmp_path / "heatmap_radar.csv").read_text().splitlines()
    assert lines[0] == "coord1,coord2,t_f"
    assert "6000.0,370.0,0.0" in lines
    assert (tmp_path / EFFECTIVE_CONFIG_NAME).exists()


def test_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    write_json(path, {"train": {"max_epochs": 0}})
    code = app.main(["heatmap", "--config", str(path), "--out", str(tmp_path / "out")])
    status = _status(capsys)
    assert code == 2
    assert status["stage"] == "config"
    assert status["errors"]


def test_runtime_error_exit_code(tmp_path, capsys):
    data = tiny_experiment_dict(tmp_path / "out")
    data["world"]["hazard_count"] = 40
    path = tmp_path / "cfg.json"
    write_json(path, data)
    code = app.main(["world", "--config", str(path)])
    status = _status(capsys)
    assert code == 1
    assert status["stage"] == "world"


def test_world_command(tmp_path, capsys):
    code = app.main(["world", "--seed", "3", "--out", str(tmp_path), "--frames", "24x32"])
    status = _status(capsys)
    assert code == 0
    assert status["seed"] == 3
    world = read_json(tmp_path / "world.json")
    assert len(world["hazards"]) == status["hazards"]
    assert read_ppm(tmp_path / "preview.ppm").shape == (24, 32, 3)
    assert read_ppm(tmp_path / "preview_segmented.ppm").shape == (24, 32, 3)


def test_eval_twice_is_byte_identical(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    write_json(path, tiny_experiment_dict(tmp_path / "unused"))
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert app.main(["eval", "--config", str(path), "--out", str(out)]) == 0
        outputs.append(out)
    capsys.readouterr()
    for name in ("eval_report.json", "eval_summary.txt", "trajectory_ground.csv", "history_case2.csv"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()
    report = read_json(outputs[0] / "eval_report.json")
    assert [c["case"] for c in report["cases"]] == ["case1", "case2", "case3"]
    assert sorted(os.listdir(outputs[0])) == sorted(os.listdir(outputs[1]))


def test_train_command(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    write_json(path, tiny_experiment_dict(tmp_path / "out"))
    code = app.main(["train", "--config", str(path), "--case", "2"])
    status = _status(capsys)
    assert code == 0
    assert status["case"] == "case2"
    cfg = load_config(path)
    net = load_weights(tmp_path / "out" / "weights_case2.json", expected_schedule=cfg.schedule())
    assert param_count(net.schedule) == param_count(cfg.schedule())
    history = (tmp_path / "out" / "history_case2.csv").read_text().splitlines()
    assert history[0] == "epoch,train_loss,val_loss,best_flag"
    assert len(history) - 1 == status["epochs_run"]


def test_dataset_command(tmp_path, capsys):
    data = tiny_experiment_dict(tmp_path / "out")
    data["dataset"]["export_frames"] = True
    path = tmp_path / "cfg.json"
    write_json(path, data)
    code = app.main(["dataset", "--config", str(path)])
    status = _status(capsys)
    assert code == 0
    manifest = read_json(tmp_path / "out" / "manifest.json")
    assert manifest["counts"] == status["counts"]
    assert status["counts"]["test"] == 8
    assert (tmp_path / "out" / "frames").is_dir()


def test_small_frames_only_rejected_for_network_commands():
    cfg = config_from_dict({"camera": {"height": 24, "width": 32}})
    assert (cfg.camera.height, cfg.camera.width) == (24, 32)
    with pytest.raises(ConfigValidationError) as info:
        validate_schedule(cfg)
    assert info.value.errors[0].startswith("controller:")
    assert param_count(validate_schedule(ExperimentConfig())) == 444219


def test_train_rejects_frames_too_small_for_network(tmp_path, capsys):
    code = app.main(["train", "--out", str(tmp_path), "--frames", "24x32"])
    status = _status(capsys)
    assert code == 2
    assert status["stage"] == "config"
    assert any("controller" in e for e in status["errors"])


def test_pixel_heatmap_with_small_frames(tmp_path, capsys):
    code = app.main(["heatmap", "--procedure", "pixel", "--resolution", "5",
                     "--frames", "24x32", "--out", str(tmp_path)])
    status = _status(capsys)
    assert code == 0
    assert status["cells"] == 25


def test_heatmap_span(tmp_path, capsys):
    code = app.main(["heatmap", "--span", "2", "--resolution", "5", "--out", str(tmp_path)])
    status = _status(capsys)
    assert code == 0
    assert status["span"] == 2.0
    lines = (tmp_path / "heatmap_radar.csv").read_text().splitlines()
    assert "12000.0,740.0,0.0" in lines
    assert "6000.0,370.0,0.0" in lines

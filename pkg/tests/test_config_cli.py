import json

import pytest

from mobiscope.cli import main
from mobiscope.config import PipelineConfig, load_config, loads_config
from mobiscope.errors import ConfigError


def test_default_round_trip():
    cfg = PipelineConfig()
    assert loads_config(cfg.to_toml()) == cfg
    assert load_config(None) == cfg


def test_dump_default_config(capsys, tmp_path):
    assert main(["--dump-default-config"]) == 0
    text = capsys.readouterr().out
    assert "[poi]" in text and "dist_m = 200" in text
    path = tmp_path / "c.toml"
    path.write_text(text)
    assert load_config(path) == PipelineConfig()


def test_partial_config_keeps_defaults():
    cfg = loads_config("seed = 9\n[cluster]\nk = 4\n")
    assert cfg.seed == 9 and cfg.cluster.k == 4 and cfg.cluster.restarts == 50


@pytest.mark.parametrize(
    "text",
    [
        "bogus = 1\n",
        "[poi]\ndistance = 3\n",
        "[cluster]\nk = 'three'\n",
        "[features]\ndcd_edges = [15.0, 5.0]\n",
        "[poi]\nhome_window_h = [6, 0]\n",
        "not toml = = 1\n",
    ],
)
def test_bad_configs_raise(text):
    with pytest.raises(ConfigError):
        loads_config(text)


def test_unknown_key_exit_code(tmp_path, capsys):
    path = tmp_path / "c.toml"
    path.write_text("[cluster]\nkk = 3\n")
    assert main(["cluster", "f.csv", "--config", str(path)]) == 2
    assert "kk" in capsys.readouterr().err


def test_flag_override_and_position(tmp_path):
    out = tmp_path / "s"
    assert main(["--seed", "3", "synth", "--homebody", "1", "--short", "1", "--long", "1", "--days", "3", "--out", str(out)]) == 0
    truth = json.loads((out / "ground_truth.json").read_text())
    assert truth["spec"]["seed"] == 3 and len(truth["users"]) == 3
    out2 = tmp_path / "s2"
    assert main(["synth", "--homebody", "1", "--short", "1", "--long", "1", "--days", "3", "--seed", "3", "--out", str(out2)]) == 0
    assert (out / "fixes.csv").read_bytes() == (out2 / "fixes.csv").read_bytes()


def test_bad_k_scan_is_config_error(capsys):
    assert main(["cluster", "f.csv", "--k-scan", "5:2"]) == 2


def test_corrupt_fixes_abort_in_ingest(tmp_path, capsys):
    bad = tmp_path / "fixes.csv"
    bad.write_text("user_id,lat,lon,start_epoch_s,end_epoch_s\nu,x,y,z,w\nu,a,b,c,d\n")
    out = tmp_path / "out"
    rc = main(["run-all", "--fixes", str(bad), "--out", str(out)])
    assert rc == 1
    assert "ingest" in capsys.readouterr().err
    assert (out / "failed").is_dir()
    assert not (out / "manifest.json").exists()


def test_missing_command_prints_help(capsys):
    assert main([]) == 2

import csv
import json
import subprocess
import sys

import pytest
from hypothesis import given, strategies as st

from fbcast.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_RUN, EXIT_USAGE, main
from fbcast.config import (
    PRESETS, ConfigError, ExperimentConfig, content_hash, dump_config, load_config,
    parse_config_text, preset,
)

SMALL = """\
# tiny run for tests
num_files_N = 6
cache_cap_C = 1
num_slots_T = 8
episodes = 10
hidden = 8
eval_episodes = 2
mc_samples = 20000
"""


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return str(p)


def _err_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return err[0]


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("# nothing\n\n")
    cfg = load_config(p)
    assert cfg == ExperimentConfig()
    assert (cfg.num_files_N, cfg.cache_cap_C, cfg.num_slots_T) == (200, 10.0, 256)
    assert (cfg.lambda_bs, cfg.zipf_skew, cfg.gamma, cfg.gamma_mov) == (100.0, 0.6, 0.99, 0.95)
    assert cfg.churn_k is None and cfg.env().churn_k is None


def test_capacity_above_library_names_both_fields():
    with pytest.raises(ConfigError) as info:
        parse_config_text("cache_cap_C = 300")
    assert "cache_cap_C" in str(info.value) and "num_files_N" in str(info.value)


def test_line_numbers_in_errors():
    with pytest.raises(ConfigError, match=r"<config>:3: unknown key 'bogus'"):
        parse_config_text("seed = 1\n\nbogus = 2\n")
    with pytest.raises(ConfigError, match=r":2: duplicate key"):
        parse_config_text("seed = 1\nseed = 2\n")
    with pytest.raises(ConfigError, match=r":1: expected 'key = value'"):
        parse_config_text("seed 1\n")
    with pytest.raises(ConfigError, match=r":1: bad value"):
        parse_config_text("num_files_N = 2.5\n")
    with pytest.raises(ConfigError, match=r"JSON parse error"):
        parse_config_text('{"seed": }')


def test_json_form():
    cfg = parse_config_text(json.dumps({"num_files_N": 20, "cache_cap_C": 2, "hidden": [16, 8],
                                        "churn_k": "auto", "seed": 9}))
    assert cfg.hidden == (16, 8) and cfg.churn_k is None and cfg.seed == 9


@given(st.integers(2, 300), st.floats(0, 1), st.integers(0, 2**64 - 1),
       st.lists(st.integers(1, 64), min_size=1, max_size=3), st.one_of(st.none(), st.integers(0, 9)))
def test_dump_round_trip(N, frac, seed, hidden, churn):
    cfg = ExperimentConfig(num_files_N=N, cache_cap_C=1 + frac * (N - 1), seed=seed, hidden=tuple(hidden),
                           churn_k=churn)
    text = dump_config(cfg)
    assert parse_config_text(text) == cfg
    assert content_hash(text) == content_hash(dump_config(parse_config_text(text)))


def test_content_hash_is_git_blob_hash():
    assert content_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
    assert content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"


def test_presets():
    assert preset("paper") == ExperimentConfig()
    tiny = preset("tiny")
    assert tiny.num_files_N == PRESETS["tiny"]["num_files_N"]
    with pytest.raises(ConfigError):
        preset("huge")


def test_component_validation_surfaces_as_config_error():
    with pytest.raises(ConfigError):
        parse_config_text("gamma = 1.5")
    with pytest.raises(ConfigError):
        parse_config_text("w_qos = 0\nw_bw = 0\nw_lat = 0")
    with pytest.raises(ConfigError):
        parse_config_text("unicast_target_outage = 0")


# -- CLI ------------------------------------------------------------------------

def test_unknown_flag_is_usage_error(capsys):
    assert main(["train", "--bogus"]) == EXIT_USAGE
    line = _err_line(capsys)
    assert line.startswith("fbcast: error: usage:")


def test_missing_subcommand(capsys):
    assert main([]) == EXIT_USAGE
    assert _err_line(capsys).startswith("fbcast: error: usage:")


def test_bad_seed(capsys):
    assert main(["selftest", "--seed", "-1"]) == EXIT_USAGE
    _err_line(capsys)


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("cache_cap_C = 300\n")
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "r")]) == EXIT_CONFIG
    line = _err_line(capsys)
    assert line.startswith("fbcast: error: config:") and "num_files_N" in line
    assert main(["train", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    _err_line(capsys)


def test_eval_bad_checkpoint(tmp_path, small_cfg, capsys):
    bad = tmp_path / "x.fbck"
    bad.write_bytes(b"nope")
    assert main(["eval", "--config", small_cfg, "--checkpoint", str(bad),
                 "--out", str(tmp_path / "e")]) == EXIT_RUN
    assert _err_line(capsys).startswith("fbcast: error: run:")
    assert main(["eval", "--config", small_cfg, "--checkpoint", str(tmp_path / "none.fbck")]) == EXIT_RUN
    _err_line(capsys)


def test_train_and_eval_deterministic(tmp_path, small_cfg, capsys):
    outs = []
    for k in ("a", "b"):
        run = tmp_path / k
        assert main(["train", "--config", small_cfg, "--seed", "7", "--out", str(run)]) == 0
        assert main(["eval", "--config", small_cfg, "--seed", "7", "--checkpoint",
                     str(run / "checkpoint.fbck"), "--out", str(run / "eval")]) == 0
        outs.append(run)
    a, b = outs
    for name in ("episodes.csv", "checkpoint.fbck", "config.txt", "manifest.txt",
                 "eval/trajectory.csv", "eval/summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    manifest = (a / "manifest.txt").read_text()
    assert "seed = 7" in manifest
    assert f"config_hash = {content_hash((a / 'config.txt').read_text())}" in manifest
    rows = list(csv.reader((a / "episodes.csv").read_text().splitlines()[1:]))
    assert rows[0] == ["episode", "r_qos", "r_bw", "r_lat", "scalarized", "entropy"]
    assert len(rows) == 11
    assert "ok:" in capsys.readouterr().out


def test_train_other_learners_and_weights(tmp_path, small_cfg):
    for learner in ("a2c", "ppo"):
        assert main(["train", "--config", small_cfg, "--learner", learner,
                     "--episodes", "10", "--out", str(tmp_path / learner)]) == 0
    assert main(["train", "--config", small_cfg, "--weights", "0,0,1", "--out", str(tmp_path / "w")]) == 0
    assert "w_qos = 0.0" in (tmp_path / "w" / "config.txt").read_text()


def test_out_root_from_environment(tmp_path, small_cfg, monkeypatch):
    monkeypatch.setenv("FBCAST_OUT", str(tmp_path / "root"))
    assert main(["train", "--config", small_cfg]) == 0
    runs = list((tmp_path / "root").iterdir())
    assert len(runs) == 1 and runs[0].name.startswith("train-fbmoac-")


def test_validate_outage_deterministic(tmp_path, small_cfg, capsys):
    for k in ("a", "b"):
        rc = main(["validate-outage", "--config", small_cfg, "--seed", "3", "--jobs", "2",
                   "--out", str(tmp_path / k)])
        assert rc in (0, EXIT_CHECK)
    a = (tmp_path / "a" / "outage_validation.csv").read_bytes()
    assert a == (tmp_path / "b" / "outage_validation.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0] == "# schema=fbcast-outage-validation/1"
    assert lines[1].startswith("point,p_cach,alpha,lambda_bs")
    assert len(lines) == 2 + 12
    assert "kernel_backend" in (tmp_path / "a" / "manifest.txt").read_text()


def test_selftest_passes(tmp_path, capsys):
    assert main(["selftest", "--out", str(tmp_path / "s")]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.strip().endswith("ok: selftest passed")


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "fbcast", "nope"], capture_output=True, text=True)
    assert r.returncode == EXIT_USAGE
    assert r.stderr.count("\n") == 1 and r.stderr.startswith("fbcast: error: usage:")

import json
import math
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellsim.analysis import sweep_ch, STANDARD
from bellsim.cli import emit_sweep_csv, main, run_to_string
from bellsim.config import (
    Config,
    ConfigParseError,
    ConfigValidationError,
    emit_config,
    parse_config,
)
from bellsim.models import ModelSpec

DATA = Path(__file__).parent / "data"
PI = math.pi


class TestParseConfig:
    def test_minimal(self):
        cfg = parse_config("model = quantum\ntrials = 1000\nseed = 42", env={})
        assert (cfg.model, cfg.trials, cfg.seed) == ("quantum", 1000, 42)
        assert cfg.window_s == Config().window_s

    def test_degrees(self):
        assert parse_config("theta_max = 45 deg", env={}).theta_max == pytest.approx(PI / 4, abs=1e-15)
        assert parse_config("theta_max = 0.5 rad", env={}).theta_max == 0.5
        assert parse_config("theta_max = 0.5", env={}).theta_max == 0.5

    def test_efficiency_range(self):
        with pytest.raises(ConfigValidationError) as exc:
            parse_config("efficiency = 1.2", env={})
        assert exc.value.key == "efficiency"

    def test_unknown_key_line_number(self):
        with pytest.raises(ConfigParseError) as exc:
            parse_config("model = quantum\n# comment\n\nbogus = 3\n", env={})
        assert exc.value.lineno == 4

    def test_syntax_error(self):
        with pytest.raises(ConfigParseError) as exc:
            parse_config("seed 4")
        assert exc.value.lineno == 1

    def test_duplicate(self):
        with pytest.raises(ConfigParseError):
            parse_config("seed = 1\nseed = 2")

    @pytest.mark.parametrize("text,key", [
        ("model = classical", "model"),
        ("trials = 0", "trials"),
        ("trials = many", "trials"),
        ("window_s = 0", "window_s"),
        ("theta_max = 45 grad", "theta_max"),
        ("format = xml", "format"),
        ("seed = -1", "seed"),
    ])
    def test_validation_names_key(self, text, key):
        with pytest.raises(ConfigValidationError) as exc:
            parse_config(text, env={})
        assert exc.value.key == key

    def test_comments(self):
        cfg = parse_config("seed = 5  # trailing\n# whole line\n", env={})
        assert cfg.seed == 5

    def test_overrides_win(self):
        cfg = parse_config("seed = 5\nmodel = lhv_sharp", {"seed": "9"}, env={})
        assert (cfg.seed, cfg.model) == (9, "lhv_sharp")

    def test_env_seed_fallback(self):
        assert parse_config("", env={"BELLSIM_SEED": "77"}).seed == 77
        assert parse_config("seed = 3", env={"BELLSIM_SEED": "77"}).seed == 3
        assert parse_config("", env={}).seed == 0

    def test_experiment_config(self):
        cfg = parse_config("setting_policy = random\ntrials = 10\nefficiency = 0.5", env={})
        exp = cfg.experiment(theta=PI / 8)
        assert exp.setting_policy == "randomPerTrial"
        assert exp.trials_per_pair == 10
        assert exp.model.efficiency == 0.5
        assert exp.quad.relative_angles() == pytest.approx((PI / 8, 3 * PI / 8, PI / 8, PI / 8))


@settings(max_examples=60)
@given(st.builds(
    Config,
    model=st.sampled_from(["quantum", "lhv_sharp", "lhv_malus"]),
    trials=st.one_of(st.none(), st.integers(1, 10 ** 7)),
    seed=st.integers(0, 2 ** 64 - 1),
    workers=st.integers(1, 16),
    setting_policy=st.sampled_from(["block", "random"]),
    window_s=st.floats(1e-12, 1e-6),
    jitter_s=st.floats(0, 1e-9),
    delay_s=st.floats(-1e-6, 1e-6),
    efficiency=st.floats(0, 1),
    theta_min=st.floats(0, 0.3),
    theta_max=st.floats(0.3, 1.5),
    theta_steps=st.integers(1, 500),
    theta=st.floats(0, 1.5),
    output=st.one_of(st.none(), st.just("out.csv")),
    format=st.one_of(st.none(), st.sampled_from(["csv", "json", "both"])),
))
def test_config_round_trip(cfg):
    assert parse_config(emit_config(cfg), env={}) == cfg


class TestCsv:
    def _rows(self, grid):
        return sweep_ch(ModelSpec(), STANDARD, grid)

    def _text(self, rows, tmp_path):
        path = tmp_path / "out.csv"
        emit_sweep_csv(rows, path)
        return path.read_bytes().decode()

    def test_header_and_pi_over_8(self, tmp_path):
        lines = self._text(self._rows([PI / 8]), tmp_path).split("\n")
        assert lines[0] == "theta_rad,ch_analytic,ch_mc,ch_mc_stderr,p_cond,criterion,violation"
        assert lines[1] == "0.392699082,1.20710678,,,0.853553391,true,true"
        assert lines[2] == ""

    def test_pi_over_4(self, tmp_path):
        lines = self._text(self._rows([PI / 4]), tmp_path).split("\n")
        assert lines[1] == "0.785398163,0.5,,,0.5,false,false"

    def test_unix_newlines(self, tmp_path):
        assert "\r" not in self._text(self._rows([0.1, 0.2]), tmp_path)

    def test_empty_rows(self, tmp_path):
        with pytest.raises(ValueError):
            emit_sweep_csv([], tmp_path / "x.csv")

    @pytest.mark.parametrize("workers", ["1", "2", "8"])
    def test_golden_file(self, tmp_path, workers):
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--trials", "2000", "--seed", "42", "--theta-steps", "7",
                     "--efficiency", "0.95", "--jitter", "5e-11", "--workers", workers,
                     "--output", str(out)])
        assert code == 0
        assert out.read_bytes() == (DATA / "golden_sweep.csv").read_bytes()


def _summary(argv):
    code, out, err = run_to_string(argv + ["--format", "json"])
    assert code == 0, err
    return json.loads(out)


class TestSummary:
    def test_key_order(self):
        s = _summary(["boundary"])
        assert list(s) == ["subcommand", "config", "overrides", "violation", "ch_max",
                           "theta_max", "theta_boundary", "eta_threshold", "containment",
                           "details", "wall_clock_s"]
        assert list(s["config"]) == list(Config().as_dict())

    def test_quantum_boundary(self):
        code, out, _ = run_to_string(["boundary"])
        assert code == 0
        assert '"theta_boundary": 0.598031' in out
        s = json.loads(out)
        assert s["violation"] is True
        assert s["ch_max"] == pytest.approx(1.2071067811865475, abs=1e-9)
        assert s["theta_max"] == pytest.approx(PI / 8, abs=1e-6)
        assert s["eta_threshold"] == pytest.approx(0.8284, abs=1e-4)
        assert s["containment"] is True

    def test_lhv_sharp(self):
        s = _summary(["sweep", "--model", "lhv_sharp"])
        assert s["violation"] is False
        assert s["theta_boundary"] is None
        assert s["eta_threshold"] is None

    def test_echo_overrides(self):
        argv = ["run", "--model", "lhv_malus", "--trials", "500", "--seed", "11",
                "--efficiency", "0.9", "--theta", "30 deg", "--workers", "2", "--window", "2e-9"]
        s = _summary(argv)
        assert s["overrides"] == {"model": "lhv_malus", "trials": "500", "seed": "11",
                                  "efficiency": "0.9", "theta": "30 deg", "workers": "2",
                                  "window_s": "2e-9", "format": "json"}
        assert s["config"]["theta"] == pytest.approx(PI / 6)
        assert s["config"]["trials"] == 500
        counts = s["details"]["counts"]
        assert sum(r["n_pairs"] for r in counts.values()) == 2000

    def test_config_file_and_flag(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text("model = lhv_sharp\nseed = 4\ntheta_steps = 5\n")
        s = _summary(["sweep", "--config", str(path), "--seed", "8"])
        assert s["config"]["model"] == "lhv_sharp"
        assert s["config"]["seed"] == 8
        assert s["details"]["rows"] == 5

    def test_compare(self):
        s = _summary(["compare"])
        models = s["details"]["models"]
        assert models["quantum"]["violation"] and not models["lhv_malus"]["violation"]
        assert models["lhv_sharp"]["ch_max"] == pytest.approx(1.0, abs=1e-12)

    def test_reproducible(self, tmp_path):
        argv = ["run", "--trials", "3000", "--seed", "5", "--jitter", "1e-10"]
        a, b = _summary(argv), _summary(argv)
        a.pop("wall_clock_s"), b.pop("wall_clock_s")
        assert json.dumps(a) == json.dumps(b)

    def test_both_formats(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code, _, err = run_to_string(["sweep", "--format", "both", "--output", str(out)])
        assert code == 0, err
        assert out.read_text().startswith("theta_rad,")
        assert json.loads(out.with_suffix(".json").read_text())["subcommand"] == "sweep"


class TestExitCodes:
    def test_success(self):
        assert run_to_string(["sweep", "--theta-steps", "3"])[0] == 0

    @pytest.mark.parametrize("argv", [
        ["sweep", "--efficiency", "1.2"],
        ["sweep", "--theta-max", "45 parsecs"],
        ["frobnicate"],
        ["sweep", "--no-such-flag", "1"],
        ["run", "--format", "csv"],
        ["sweep", "--format", "both"],
        ["sweep", "--config", "/nonexistent/bellsim.conf"],
    ])
    def test_config_errors(self, argv):
        code, out, err = run_to_string(argv)
        assert code == 1
        assert "config error" in err

    def test_bad_config_file(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("model = quantum\nwhat\n")
        code, _, err = run_to_string(["sweep", "--config", str(path)])
        assert code == 1 and "line 2" in err

    @pytest.mark.parametrize("model", ["lhv_sharp", "lhv_malus"])
    def test_no_violation_boundary(self, model):
        code, out, err = run_to_string(["boundary", "--model", model])
        assert code == 2
        assert out == ""

    def test_subprocess_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "bellsim", "boundary", "--model", "lhv_sharp"],
                              capture_output=True, text=True)
        assert proc.returncode == 2
        proc = subprocess.run([sys.executable, "-m", "bellsim", "sweep", "--theta-steps", "2"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert proc.stdout.splitlines()[-1] == "0.785398163,0.5,,,0.5,false,false"

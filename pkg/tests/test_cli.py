import json
from pathlib import Path

import pytest

from mfgp_search.cli import ConfigError, main, parse_config_text, resolve_config

REPO = Path(__file__).resolve().parent.parent
DESK = REPO / "configs" / "desk.cfg"


def small_cfg_text(**over) -> str:
    kv = {
        "domain.x_min": 0,
        "domain.x_max": 10,
        "domain.y_min": 0,
        "domain.y_max": 10,
        "domain.resolution": 10,
        "model.levels": 2,
        "model.mu_1": 0.0,
        "model.mu_2": 0.0,
        "model.v_1": 0.5,
        "model.v_2": 0.3,
        "model.l_1": 4.0,
        "model.l_2": 2.0,
        "model.s_1": 0.1,
        "model.s_2": 0.08,
        "model.z_1": 8.0,
        "model.z_2": 4.0,
        "mission.delta": 0.1,
        "mission.th": 0.3,
        "mission.seed": 1,
        "mission.max_epochs": 4,
        "bench.samples": 15,
        "bench.seeds": 3,
    }
    kv.update(over)
    return "\n".join(f"{k} = {v}" for k, v in kv.items()) + "\n"


@pytest.fixture
def small_cfg(tmp_path):
    path = tmp_path / "mission.cfg"
    path.write_text(small_cfg_text())
    return path


class TestConfigParsing:
    def test_comments_and_blanks_ignored(self):
        kv = parse_config_text("# hello\n\na.b = 1\n")
        assert kv == {"a.b": "1"}

    def test_malformed_line_diagnostic(self):
        with pytest.raises(ConfigError, match="line 2"):
            parse_config_text("a.b = 1\nnot a pair\n")

    def test_duplicate_key_diagnostic(self):
        with pytest.raises(ConfigError, match="duplicate key 'a.b'"):
            parse_config_text("a.b = 1\na.b = 2\n")

    def test_missing_key_named(self):
        kv = parse_config_text(small_cfg_text())
        del kv["mission.delta"]
        with pytest.raises(ConfigError, match="mission.delta"):
            resolve_config(kv)

    def test_bad_value_named(self):
        kv = parse_config_text(small_cfg_text(**{"domain.resolution": "2.5"}))
        with pytest.raises(ConfigError, match="domain.resolution"):
            resolve_config(kv)


class TestRun:
    def test_missing_config_exits_1_with_path(self, tmp_path, capsys):
        missing = tmp_path / "nope.cfg"
        code = main(["run", "--config", str(missing), "--out", str(tmp_path / "o")])
        assert code == 1
        assert str(missing) in capsys.readouterr().err

    def test_run_writes_artifacts(self, small_cfg, tmp_path):
        out = tmp_path / "out"
        code = main(["run", "--config", str(small_cfg), "--out", str(out)])
        assert code in (0, 2)
        for name in (
            "manifest.json",
            "report.json",
            "occupancy.csv",
            "occupancy.pgm",
            "variance.csv",
            "mean.csv",
            "plans.csv",
            "tours.csv",
            "decay.csv",
            "samples.log",
            "truth_f1.csv",
            "truth_f2.pgm",
        ):
            assert (out / name).exists(), name
        report = json.loads((out / "report.json").read_text())
        assert report["schema_version"] == 1
        assert report["n_total"] > 0

    def test_override_recorded_in_manifest(self, small_cfg, tmp_path):
        out = tmp_path / "out"
        code = main(
            [
                "run",
                "--config",
                str(small_cfg),
                "--out",
                str(out),
                "--set",
                "mission.delta=0.01",
            ]
        )
        assert code in (0, 2)
        manifest = json.loads((out / "manifest.json").read_text())
        assert "mission.delta=0.01" in manifest["overrides"]
        assert manifest["resolved"]["mission.delta"] == 0.01

    def test_rerun_from_manifest_reproduces_bytes(self, small_cfg, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", str(small_cfg), "--out", str(out1)]) in (0, 2)
        assert main(
            ["run", "--config", str(out1 / "manifest.json"), "--out", str(out2)]
        ) in (0, 2)
        for name in ("report.json", "occupancy.csv", "variance.csv", "decay.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_seed_flag_changes_outputs(self, small_cfg, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["run", "--config", str(small_cfg), "--out", str(out1)])
        main(["run", "--config", str(small_cfg), "--out", str(out2), "--seed", "99"])
        assert (out1 / "report.json").read_bytes() != (out2 / "report.json").read_bytes()

    def test_epoch_cap_exit_code(self, tmp_path):
        cfg = tmp_path / "cap.cfg"
        cfg.write_text(small_cfg_text(**{"mission.max_epochs": 1}))
        code = main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 2


class TestValidate:
    def test_valid_config_normalized_echo(self, small_cfg, capsys):
        assert main(["validate", "--config", str(small_cfg)]) == 0
        echo = capsys.readouterr().out
        assert "mission.delta=0.1" in echo
        assert "model.v_1=0.5" in echo

    def test_amplitude_ordering_violation(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(small_cfg_text(**{"model.v_2": 0.9}))
        assert main(["validate", "--config", str(cfg)]) == 1
        assert "decreasing" in capsys.readouterr().err

    def test_delta_out_of_range(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(small_cfg_text(**{"mission.delta": 0.6}))
        assert main(["validate", "--config", str(cfg)]) == 1
        assert "delta" in capsys.readouterr().err

    def test_grid_guard(self, tmp_path, capsys):
        cfg = tmp_path / "big.cfg"
        cfg.write_text(small_cfg_text(**{"domain.resolution": 200}))
        out = tmp_path / "o"
        assert main(["run", "--config", str(cfg), "--out", str(out)]) == 1
        assert "cells" in capsys.readouterr().err


class TestBench:
    def test_single_level_refused(self, tmp_path, capsys):
        cfg = tmp_path / "m1.cfg"
        lines = [
            "domain.x_min=0", "domain.x_max=10", "domain.y_min=0", "domain.y_max=10",
            "domain.resolution=10", "model.levels=1", "model.mu_1=0", "model.v_1=0.5",
            "model.l_1=3", "model.s_1=0.1", "model.z_1=5",
            "mission.delta=0.1", "mission.th=0.3",
        ]
        cfg.write_text("\n".join(lines) + "\n")
        assert main(["bench", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "levels" in capsys.readouterr().err

    def test_bench_outputs_and_schema(self, tmp_path):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text(small_cfg_text(**{"bench.seeds": 4, "bench.samples": 12}))
        out = tmp_path / "o"
        assert main(["bench", "--config", str(cfg), "--out", str(out)]) == 0
        decay = (out / "decay.csv").read_text().splitlines()
        assert decay[0] == "n,multi_fidelity_max_var,single_fidelity_max_var"
        assert len(decay) == 14  # header + n=0..12
        dt = (out / "detection_time.csv").read_text().splitlines()
        assert dt[0] == "bin,delta_min,delta_max,mean_time,classified,censored"
        assert len(dt) == 4

    def test_single_seed_warns_but_runs(self, tmp_path, capsys):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text(small_cfg_text(**{"bench.seeds": 1, "bench.samples": 5}))
        out = tmp_path / "o"
        assert main(["bench", "--config", str(cfg), "--out", str(out)]) == 0
        assert "warning" in capsys.readouterr().err
        assert (out / "detection_time.csv").exists()

    def test_bench_rerun_from_manifest_reproduces_bytes(self, tmp_path):
        cfg = tmp_path / "bench.cfg"
        cfg.write_text(small_cfg_text(**{"bench.seeds": 3, "bench.samples": 8}))
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["bench", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["bench", "--config", str(out1 / "manifest.json"), "--out", str(out2)]) == 0
        for name in ("decay.csv", "detection_time.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name


def test_desk_config_is_valid():
    assert DESK.exists()
    assert main(["validate", "--config", str(DESK)]) == 0


def test_normalized_echo_round_trips(small_cfg, capsys, tmp_path):
    assert main(["validate", "--config", str(small_cfg)]) == 0
    echo = capsys.readouterr().out
    normalized = tmp_path / "normalized.cfg"
    normalized.write_text(echo)
    assert main(["validate", "--config", str(normalized)]) == 0
    assert capsys.readouterr().out == echo

import json

import numpy as np
import pytest

from fieldreuse import cli
from fieldreuse.errors import ConfigError, ParseError
from fieldreuse.harness.config import PRESETS, ScenarioConfig, parse_config, preset
from fieldreuse.harness.reports import csv_text, format_value, json_text, scenario_reports, sibling
from fieldreuse.harness.scenarios import (binomial_sigma, run_ber_sweep, run_divergence_table,
                                          run_learning_curves, substream)


def small_ber(**kw):
    base = dict(scenario="ber-sweep", snr_list=[8.0, 30.0], n_bits=4000, seed=3)
    base.update(kw)
    return ScenarioConfig(**base).validate()


class TestConfig:
    def test_defaults(self):
        cfg = ScenarioConfig()
        assert (cfg.L_f, cfg.L_b, cfg.n0) == (20, 4, 19)
        assert cfg.channel["taps"] == [1.0, 0.9472, 0.4586, 0.4315, 0.1497]

    def test_roundtrip(self):
        cfg = preset("fig12-analog")
        assert parse_config(cfg.to_json()) == cfg

    def test_parse_error_position(self):
        with pytest.raises(ParseError) as info:
            parse_config('{\n  "seed": 1,\n  "n_bits": }')
        assert info.value.line == 3 and info.value.col > 1

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_config('{"bogus": 1}')

    def test_preset_key_and_override(self):
        cfg = parse_config('{"preset": "fig9", "seed": 11}')
        assert cfg.scenario == "learn" and cfg.seed == 11 and cfg.n_trials == 20

    def test_invalid_values(self):
        with pytest.raises(ConfigError):
            parse_config('{"lam": 1.5}')
        with pytest.raises(ConfigError):
            parse_config('{"equalizers": ["zf", "cma"]}')

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_presets_validate(self, name):
        assert preset(name).scenario in ("ber-sweep", "divergence", "learn", "playback")


class TestReports:
    def test_format(self):
        assert format_value(True) == "true"
        assert format_value(None) == ""
        assert format_value(0.1) == "0.1"
        assert format_value(3) == "3"

    def test_csv_header_comment(self):
        text = csv_text([{"a": 1, "b": 0.5}], ["a", "b"], config={"seed": 1, "x": [1]})
        lines = text.splitlines()
        assert lines[0] == '# config {"seed":1,"x":[1]}'
        assert lines[1:] == ["a,b", "1,0.5"]

    def test_json_config_key(self):
        out = json.loads(json_text({"rows": []}, config={"seed": 2}))
        assert out["config"] == {"seed": 2}

    def test_sibling(self, tmp_path):
        assert str(sibling(tmp_path / "run.csv", "snr", "csv")) == str(tmp_path / "run_snr.csv")

    def test_byte_identical(self):
        cfg = small_ber()
        a = scenario_reports(cfg, run_ber_sweep(cfg))
        b = scenario_reports(cfg, run_ber_sweep(cfg))
        assert a == b


class TestScenarios:
    def test_substreams_independent_and_repeatable(self):
        a = substream(1, 2, 3).random(5)
        np.testing.assert_array_equal(a, substream(1, 2, 3).random(5))
        assert not np.array_equal(a, substream(1, 2, 4).random(5))

    def test_high_snr_zero_errors(self):
        rows = run_ber_sweep(small_ber())
        for r in rows:
            if r["snr_db"] == 30.0:
                assert r["errors"] == 0, r

    def test_zf_arms_identical(self):
        # ZF removes the dither exactly, so both arms see the same decisions
        rows = run_ber_sweep(small_ber(equalizers=["zf"]))
        by = {(r["snr_db"], r["arm"]): r["errors"] for r in rows}
        for snr in (8.0, 30.0):
            assert by[(snr, "reference")] == by[(snr, "dither")]

    def test_coded_runs(self):
        rows = run_ber_sweep(small_ber(codec="convolutional", snr_list=[30.0], n_bits=500))
        assert all(r["n_bits"] == 500 and r["errors"] == 0 for r in rows)

    def test_divergence_zero_dither_row(self):
        cfg = ScenarioConfig(scenario="divergence", snr_list=[18.0], n_symbols=4000,
                             dithers=["m1_down"]).validate()
        rows = run_divergence_table(cfg)
        for r in rows:
            if r["dither"] == "none":
                assert r["msd_closed"] == 0 and r["msd_empirical"] == 0 and r["kl_empirical"] == 0

    def test_learning_rows(self):
        cfg = ScenarioConfig(scenario="learn", equalizers=["lms"], snr_list=[20.0],
                             n_symbols=1500, training_length=1500, n_trials=2,
                             mu_list=[0.005], window=50).validate()
        rows = run_learning_curves(cfg)
        assert {r["arm"] for r in rows} == {"reference", "dither"}
        assert len(rows) == 2 * 1500

    def test_binomial_sigma(self):
        assert binomial_sigma(0.5, 100) == 0.05
        assert binomial_sigma(0.0, 100) == 0.0


class TestCli:
    def test_ber_sweep_csv(self, tmp_path):
        cfgp = tmp_path / "c.json"
        cfgp.write_text('{"snr_list": [30.0], "n_bits": 400, "equalizers": ["zf"]}')
        out = tmp_path / "out" / "ber.csv"
        assert cli.main(["ber-sweep", "--config", str(cfgp), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# config ")
        assert lines[1] == "snr_db,arm,equalizer,dither,ber,errors,n_bits,seed"
        assert len(lines) == 4

    def test_preset_mismatch(self, capsys):
        assert cli.main(["ber-sweep", "--preset", "fig9"]) == 2
        assert "learn" in capsys.readouterr().err

    def test_bad_json(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text("{\n  oops\n}")
        assert cli.main(["divergence", "--config", str(p)]) == 2
        assert "line 2" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["learn", "--config", str(tmp_path / "nope.json")]) == 2

    def test_numeric_failure(self, tmp_path):
        p = tmp_path / "zero.json"
        p.write_text('{"channel": {"kind": "static", "taps": [0, 0]}, "n_bits": 100,'
                     ' "snr_list": [10.0], "equalizers": ["zf"]}')
        assert cli.main(["ber-sweep", "--config", str(p)]) == 3

    def test_wotan(self, tmp_path, capsys):
        x = np.random.default_rng(0).standard_normal(100_000)
        p = tmp_path / "noise.csv"
        np.savetxt(p, x, delimiter=",", header="x", comments="")
        assert cli.main(["wotan", "--in", str(p), "--fs", "50000", "--freq", "8"]) == 0
        res = json.loads(capsys.readouterr().out)
        np.testing.assert_allclose(res["ssl"], 10 * np.log10(2 / 50000), atol=0.5)
        assert set(res) == {"ssl", "ssl0", "p0", "u10", "valid"}

    def test_wotan_out_of_band(self, tmp_path):
        p = tmp_path / "noise.csv"
        np.savetxt(p, np.zeros(4096))
        assert cli.main(["wotan", "--in", str(p), "--fs", "200000", "--freq", "80"]) == 2

    def test_constellation(self, capsys):
        assert cli.main(["constellation", "--k", "2"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "n,re,im,label" and len(lines) == 5
        re0, im0 = map(float, lines[1].split(",")[1:3])
        np.testing.assert_allclose([re0, im0], [-1 / np.sqrt(2), -1 / np.sqrt(2)])

    def test_constellation_dither(self, capsys):
        assert cli.main(["constellation", "--dither", "m1_down", "--n-symbols", "50"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 51
        assert {int(l.split(",")[3]) for l in lines[1:]} <= {0, 1, 2, 3}

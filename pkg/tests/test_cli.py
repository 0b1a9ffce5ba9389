import json

import numpy as np
import pytest

from rmats.cli import main, parse_rounds_csv

SMALL_SPEC = """
n_assets = 6
days = 830
seed = 13
start = 2020-01-01
regime_schedule = bull:600,bear:60,bull:170
events = shock:2022-03-09:2022-04-26
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "spec.txt"
    spec.write_text(SMALL_SPEC, encoding="utf-8")
    events = root / "events.csv"
    events.write_text("name,start,end\nshock,2022-03-09,2022-04-26\n", encoding="utf-8")
    prices = root / "prices.csv"
    assert main(["synth", "--spec", str(spec), "--out", str(prices)]) == 0
    return root


class TestSynthAndValidate:
    def test_synth_is_deterministic_bytes(self, workdir, tmp_path):
        spec = workdir / "spec.txt"
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["synth", "--spec", str(spec), "--out", str(out1)]) == 0
        assert main(["synth", "--spec", str(spec), "--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_validate_accepts_generated_file(self, workdir):
        assert main(["validate", "--prices", str(workdir / "prices.csv")]) == 0

    def test_validate_rejects_malformed_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("date,AAA\n2021-01-05,10\n2021-01-04,11\n", encoding="utf-8")
        assert main(["validate", "--prices", str(bad)]) == 1
        assert "row 3" in capsys.readouterr().err

    def test_validate_config_unknown_key(self, tmp_path, capsys):
        cfgfile = tmp_path / "cfg.txt"
        cfgfile.write_text("not_a_key = 1\n", encoding="utf-8")
        assert main(["validate", "--config", str(cfgfile)]) == 1
        assert "not_a_key" in capsys.readouterr().err

    def test_validate_needs_an_input(self, capsys):
        assert main(["validate"]) == 1


class TestBacktestCommand:
    def test_equal_weight_report_identity(self, workdir, tmp_path):
        out = tmp_path / "run"
        rc = main(
            [
                "backtest",
                "--prices",
                str(workdir / "prices.csv"),
                "--strategy",
                "equal_weight",
                "--events",
                str(workdir / "events.csv"),
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        m = report["metrics"]
        if m["mdd"] > 0:
            assert m["calmar"] * m["mdd"] == pytest.approx(m["ann_return"], abs=1e-12)
        assert (out / "equity.csv").exists() and (out / "weights.csv").exists()
        assert report["events"] and report["events"][0]["name"] == "shock"

    def test_unknown_strategy_rejected(self, workdir, tmp_path, capsys):
        rc = main(
            ["backtest", "--prices", str(workdir / "prices.csv"), "--strategy", "nope", "--out", str(tmp_path / "x")]
        )
        assert rc == 1
        assert "nope" in capsys.readouterr().err

    def test_malformed_config_key_is_validation_error(self, workdir, tmp_path, capsys):
        cfgfile = tmp_path / "cfg.txt"
        cfgfile.write_text("eps = not_a_number\n", encoding="utf-8")
        rc = main(
            [
                "backtest",
                "--prices",
                str(workdir / "prices.csv"),
                "--config",
                str(cfgfile),
                "--out",
                str(tmp_path / "y"),
            ]
        )
        assert rc == 1
        assert "eps" in capsys.readouterr().err

    def test_rmats_run_writes_rounds_log(self, workdir, tmp_path):
        out = tmp_path / "rmats_run"
        rc = main(
            [
                "backtest",
                "--prices",
                str(workdir / "prices.csv"),
                "--strategy",
                "rmats",
                "--events",
                str(workdir / "events.csv"),
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        rounds = out / "rounds.csv"
        assert rounds.exists()
        logs = parse_rounds_csv(str(rounds))
        assert len(logs) >= 5
        assert all(1 <= rec["rounds_used"] <= 8 for rec in logs)
        report = json.loads((out / "report.json").read_text())
        assert report["convergence"]["n"] == len(logs)

    def test_convergence_subcommand_round_trips(self, workdir, tmp_path, capsys):
        out = tmp_path / "conv_run"
        main(
            [
                "backtest",
                "--prices",
                str(workdir / "prices.csv"),
                "--strategy",
                "rmats",
                "--events",
                str(workdir / "events.csv"),
                "--out",
                str(out),
            ]
        )
        report = json.loads((out / "report.json").read_text())
        rc = main(
            ["convergence", "--rounds", str(out / "rounds.csv"), "--events", str(workdir / "events.csv")]
        )
        assert rc == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["median_rounds"] == report["convergence"]["median_rounds"]
        assert stats["frac_within_2"] == report["convergence"]["frac_within_2"]
        assert np.allclose(stats["delta_curve"], report["convergence"]["delta_curve"])


class TestAblateCommand:
    def test_two_variant_ablation(self, workdir, tmp_path):
        out = tmp_path / "ablate_run"
        rc = main(
            [
                "ablate",
                "--prices",
                str(workdir / "prices.csv"),
                "--variants",
                "full,no_recursion",
                "--events",
                str(workdir / "events.csv"),
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert set(report["variants"]) == {"full", "no_recursion"}
        assert report["variants"]["no_recursion"]["convergence"]["max_rounds"] == 1
        header = (out / "equity.csv").read_text().splitlines()[0]
        assert header == "date,full,no_recursion"

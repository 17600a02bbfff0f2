import json

import pandas as pd
import pytest

from app.main import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main


def _run(tmp_path, *argv):
    return main(["--out", str(tmp_path), *argv])


def _manifest(run_dir):
    return json.loads((run_dir / "manifest.json").read_text())


def test_rates_for_preset(tmp_path):
    assert _run(tmp_path, "--preset", "case1", "rates") == EXIT_OK
    run_dir = tmp_path / "rates-0"
    frame = pd.read_csv(run_dir / "rates.csv", dtype={"user": str})
    assert frame["user"].tolist() == ["1", "2", "3", "sum"]
    assert frame["rate_bpcu"].iloc[-1] == pytest.approx(1.0, abs=1e-9)
    payload = json.loads((run_dir / "rates.json").read_text())
    assert payload["capacity_bpcu"] == pytest.approx(1.0)
    manifest = _manifest(run_dir)
    assert manifest["subcommand"] == "rates"
    assert sorted(manifest["outputs"]) == ["rates.csv", "rates.json"]


def test_sic_order_and_region_check(tmp_path):
    code = _run(tmp_path, "--preset", "case1", "rates", "--sic", "3,2,1", "--check-region", "0.1,0.2,0.3")
    assert code == EXIT_OK
    region = json.loads((tmp_path / "rates-0" / "region.json").read_text())
    assert region["inside"] is True
    assert region["on_dominant_face"] is False


def test_seed_and_tag_name_the_run(tmp_path):
    assert _run(tmp_path, "--preset", "case1", "--seed", "7", "--tag", "x", "rates") == EXIT_OK
    manifest = _manifest(tmp_path / "rates-7-x")
    assert manifest["seed"] == 7
    assert manifest["config"]["seed"] == 7


def test_qpsk_sweep_needs_no_system(tmp_path):
    assert _run(tmp_path, "rates", "--qpsk-sweep", "--sweep-k", "1,2", "--sweep-snr", "0,10") == EXIT_OK
    sweep = pd.read_csv(tmp_path / "rates-0" / "qpsk_sweep.csv")
    assert len(sweep) == 4
    assert (sweep["sum_rate_bpcu"] <= 2.0).all()


def test_missing_system_is_a_usage_error(tmp_path):
    assert _run(tmp_path, "rates") == EXIT_USAGE
    assert (tmp_path / "rates-0" / "manifest.json").exists()


def test_unknown_preset(tmp_path):
    assert _run(tmp_path, "--preset", "nope", "rates") == EXIT_USAGE


def test_malformed_path_file(tmp_path):
    bad = tmp_path / "bad_path.json"
    bad.write_text(json.dumps({"breakpoints": [[1, 1, 1], [0.2, 0.5, 0.4], [0.3, 0, 0], [0, 0, 0]]}))
    assert _run(tmp_path, "--preset", "case1", "rates", "--path", str(bad)) == EXIT_USAGE
    not_json = tmp_path / "garbage.json"
    not_json.write_text("{not json")
    assert _run(tmp_path, "--preset", "case1", "rates", "--path", str(not_json)) == EXIT_USAGE


def test_config_file_input_is_hashed(tmp_path):
    doc = tmp_path / "system.toml"
    doc.write_text("[users]\nK = 2\ng = [0.5, 0.5]\n[channel]\nnoise_var = 1.0\nmodulation = \"Gaussian\"\n")
    assert _run(tmp_path, "--config", str(doc), "rates") == EXIT_OK
    manifest = _manifest(tmp_path / "rates-0")
    assert len(manifest["inputs"]["config"]) == 64
    rates = pd.read_csv(tmp_path / "rates-0" / "rates.csv", dtype={"user": str})
    assert rates["rate_bpcu"].iloc[:2].tolist() == pytest.approx([0.5, 0.5])


def test_infeasible_target_is_a_numeric_failure(tmp_path):
    code = _run(tmp_path, "--preset", "case1", "pipeline", "--target", "0.2,0.3,0.5")
    assert code == EXIT_NUMERIC
    region = pd.read_csv(tmp_path / "pipeline-0" / "region.csv", dtype={"subset": str})
    assert (region.loc[region["subset"] == "1", "slack_bpcu"] < 0).all()
    assert (tmp_path / "pipeline-0" / "manifest.json").exists()


def test_pipeline_dry_run(tmp_path, capsys):
    assert _run(tmp_path, "--preset", "case2", "pipeline", "--dry-run") == EXIT_OK
    steps = json.loads((tmp_path / "pipeline-0" / "plan.json").read_text())
    assert steps[1] == "solve a decoding path for the target rates"
    assert sum("optimize user" in s for s in steps) == 3
    assert "1. check target" in capsys.readouterr().out


def test_path_for_preset(tmp_path):
    assert _run(tmp_path, "--preset", "case2", "path") == EXIT_OK
    run_dir = tmp_path / "path-0"
    path = json.loads((run_dir / "path.json").read_text())
    assert len(path["breakpoints"]) == 4
    assert (run_dir / "ese_transfer.csv").exists()


def test_evolve_for_preset(tmp_path):
    assert _run(tmp_path, "--preset", "case1", "evolve", "--snr-db", "3", "--max-outer", "300") == EXIT_OK
    run_dir = tmp_path / "evolve-0"
    trajectory = pd.read_csv(run_dir / "trajectory.csv")
    assert trajectory["iter"].iloc[0] == 0
    assert (run_dir / "evolution.json").exists()


def test_report_lists_earlier_runs(tmp_path, capsys):
    runs = tmp_path / "runs"
    assert main(["--out", str(runs), "--preset", "case1", "rates"]) == EXIT_OK
    capsys.readouterr()
    assert main(["--out", str(tmp_path / "reports"), "report", str(runs)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["runs"] == 1
    assert [e["run"] for e in summary["by_subcommand"]["rates"]] == ["rates-0"]


def test_plots_are_rendered_on_request(tmp_path):
    assert _run(tmp_path, "--plots", "rates", "--qpsk-sweep", "--sweep-k", "1,2,4") == EXIT_OK
    run_dir = tmp_path / "rates-0"
    assert (run_dir / "qpsk_sweep.png").stat().st_size > 0
    assert "qpsk_sweep.png" in _manifest(run_dir)["outputs"]


def test_simulate_writes_llr_histograms(tmp_path):
    code = _run(tmp_path, "--preset", "llrhist", "simulate", "--n", "240", "--block-budget", "2", "--max-outer", "3",
                "--hist-user", "1", "--hist-iters", "1,2", "--bins", "20")
    assert code == EXIT_OK
    run_dir = tmp_path / "simulate-0"
    ber = pd.read_csv(run_dir / "ber.csv")
    assert ber["user"].tolist() == [1, 2, 3, 4]
    stats = json.loads((run_dir / "llr_stats.json").read_text())
    assert stats[0]["iter"] == 1
    assert stats[0]["snr_dB"] == pytest.approx(20.0)
    hist = pd.read_csv(run_dir / "llr_hist.csv")
    assert len(hist[hist["iter"] == 1]) == 20

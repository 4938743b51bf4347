import json

import pytest
from click.testing import CliRunner

from weakdep.cli import main


@pytest.fixture()
def chain_doc():
    return {"type": "finite_chain", "states": ["+", "-"],
            "transition": [[0.75, 0.25], [0.25, 0.75]],
            "observable": [1.0, -1.0], "step": 1.0}


def write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


def test_coeffs_command(tmp_path, chain_doc):
    cfg = write_config(tmp_path, {"process": chain_doc})
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["coeffs", "--config", cfg, "--seed", "1",
                                       "--out", str(out), "--horizon", "8"])
    assert result.exit_code == 0, result.output
    summary = json.loads((out / "summary.json").read_text())
    assert summary["summary"]["sigma2"] == pytest.approx(3.0, abs=1e-8)
    assert (out / "theta_table.csv").exists()
    assert (out / "theta.csv").exists()


def test_bound_fit_and_check(tmp_path, chain_doc):
    cfg = write_config(tmp_path, {
        "process": chain_doc, "grid_n": [64, 128], "points_per_n": 2,
        "replicates": 1500, "seed": 3, "theta_horizon": 10})
    out_fit = tmp_path / "fit"
    result = CliRunner().invoke(main, ["bound", "fit", "--config", cfg,
                                       "--out", str(out_fit)])
    assert result.exit_code == 0, result.output
    fitted = json.loads((out_fit / "summary.json").read_text())["summary"]
    out_check = tmp_path / "check"
    result = CliRunner().invoke(main, [
        "bound", "check", "--config", cfg, "--out", str(out_check),
        "--c1", str(fitted["c1"]), "--c2", str(fitted["c2"])])
    assert result.exit_code == 0, result.output
    checked = json.loads((out_check / "summary.json").read_text())["summary"]
    assert checked["dominates_holdout"] is True


def test_couple_run(tmp_path, chain_doc):
    cfg = write_config(tmp_path, {"process": chain_doc, "n": 256, "seed": 5})
    out = tmp_path / "out"
    result = CliRunner().invoke(main, ["couple", "run", "--config", cfg,
                                       "--out", str(out)])
    assert result.exit_code == 0, result.output
    lines = (out / "coupled_path.csv").read_text().splitlines()
    assert lines[0] == "k,s,t"
    assert len(lines) == 258
    summary = json.loads((out / "summary.json").read_text())["summary"]
    assert summary["sup_error"] > 0


def test_rates_command_deterministic(tmp_path, chain_doc):
    cfg = write_config(tmp_path, {
        "process": chain_doc, "n_list": [256, 512, 1024],
        "replicates": 16, "seed": 9})
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    for out, threads in ((out1, "1"), (out2, "3")):
        result = CliRunner().invoke(main, ["rates", "--config", cfg,
                                           "--out", str(out),
                                           "--threads", threads])
        assert result.exit_code == 0, result.output
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()
    assert (out1 / "rates.csv").read_bytes() == (out2 / "rates.csv").read_bytes()


def test_wasserstein_command(tmp_path, chain_doc):
    cfg = write_config(tmp_path, {
        "process": chain_doc, "n_list": [256, 512], "replicates": 16, "seed": 9})
    out = tmp_path / "w"
    result = CliRunner().invoke(main, ["wasserstein", "--config", cfg,
                                       "--out", str(out)])
    assert result.exit_code == 0, result.output
    summary = json.loads((out / "summary.json").read_text())["summary"]
    assert summary["target"] == -0.25
    assert summary["reference_exponent"] == pytest.approx(-1 / 6)


def test_degenerate_command(tmp_path, chain_doc):
    proc = {"type": "finite_chain", "states": ["a", "b"],
            "transition": [[0.75, 0.25], [0.25, 0.75]],
            "observable": [1.0, -1.0], "step": 1.0}
    # build the telescoping process inline via the library, then serialize it
    from weakdep import make_coboundary
    from weakdep.processes import process_from_config, process_to_config
    cob = make_coboundary(process_from_config(proc), [1.0, -1.0])
    cfg = write_config(tmp_path, {
        "process": process_to_config(cob), "n_list": [64, 256, 1024],
        "replicates": 400, "seed": 3, "alpha": 0.5})
    out = tmp_path / "d"
    result = CliRunner().invoke(main, ["degenerate", "--config", cfg,
                                       "--out", str(out)])
    assert result.exit_code == 0, result.output
    summary = json.loads((out / "summary.json").read_text())["summary"]
    assert abs(summary["sigma2"]) < 1e-6


def test_lsv_rates_command(tmp_path):
    cfg = write_config(tmp_path, {
        "process": {"type": "lsv", "gamma": 0.2, "burn_in": 200,
                    "observable": {"kind": "identity", "center": 0.5}},
        "n_list": [256, 512], "replicates": 16, "seed": 2})
    out = tmp_path / "l"
    result = CliRunner().invoke(main, ["rates", "--config", cfg,
                                       "--out", str(out)])
    assert result.exit_code == 0, result.output
    summary = json.loads((out / "summary.json").read_text())["summary"]
    assert summary["target"] == 0.25


def test_export_path_command(tmp_path, chain_doc):
    cfg = write_config(tmp_path, {"process": chain_doc, "seed": 4})
    out = tmp_path / "p"
    result = CliRunner().invoke(main, ["export-path", "--config", cfg,
                                       "--out", str(out), "--n", "32"])
    assert result.exit_code == 0, result.output
    lines = (out / "path.csv").read_text().splitlines()
    assert lines[0] == "index,value,partial_sum"
    assert len(lines) == 33

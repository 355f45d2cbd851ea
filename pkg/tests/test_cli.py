import csv

import numpy as np
import pytest

from composite_spde import cli


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = cli.main([*argv, "--out_dir", str(out)])
    return code, out


def manifest(out):
    values = {}
    for line in (out / "manifest.cfg").read_text().splitlines():
        if line.startswith("#"):
            k, v = line[2:].split("=", 1)
        else:
            k, v = line.split("=", 1)
        values[k] = v
    return values


def test_defaults_resolved_into_manifest(tmp_path):
    cfg, origin = cli.parse_config(["verify-kernel", "--out_dir", str(tmp_path)])
    assert origin == "explicit"
    assert cfg == cli.RunConfig(out_dir=str(tmp_path))


def test_lambda_recorded(tmp_path):
    (tmp_path / "c.cfg").write_text("a1=1 a2=4\nnt=5 nx=5  # tiny\n")
    cfg, origin = cli.parse_config(["simulate", "--config", str(tmp_path / "c.cfg"), "--n_paths", "3"])
    cfg.out_dir = str(tmp_path / "o")
    assert cli.run(cfg, origin) == 0
    assert float(manifest(tmp_path / "o")["lambda"]) == pytest.approx(1 / 3)


@pytest.mark.parametrize(
    "argv, key",
    [(["--a1", "-1"], "a1"), (["--bogus", "1"], "bogus"), (["--nx", "ten"], "nx"),
     (["--command", "fly"], "command"), (["--u0", "5"], "u0"), (["--nx", "4"], "nx")],
)
def test_bad_configuration_exits_2(tmp_path, capsys, argv, key):
    code, _ = run(tmp_path, *argv)
    assert code == 2
    assert f"{key}:" in capsys.readouterr().err


def test_unknown_key_in_file(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("a3=2\n")
    assert cli.main(["--config", str(tmp_path / "c.cfg")]) == 2
    assert "a3: unknown key" in capsys.readouterr().err


def test_flags_override_file(tmp_path):
    (tmp_path / "c.cfg").write_text("command=simulate\nseed=1\nsigma0=0.1\n")
    cfg, _ = cli.parse_config(["--config", str(tmp_path / "c.cfg"), "--seed", "7"])
    assert (cfg.command, cfg.seed, cfg.sigma0) == ("simulate", 7, 0.1)


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    cfg, origin = cli.parse_config(["simulate", "--nx", "5", "--nt", "2", "--n_paths", "2"])
    assert origin == "env"
    assert cli.run(cfg, origin) == 0
    m = manifest(tmp_path / "env")
    assert m["out_dir"] == str(tmp_path / "env") and m["out_dir_source"] == "env"


def test_verify_kernel_writes_passing_table(tmp_path):
    code, out = run(tmp_path, "verify-kernel")
    assert code == 0
    with open(out / "checks.csv") as fh:
        table = list(csv.DictReader(fh))
    assert table and all(r["pass"] == "pass" for r in table)


def test_simulate_linear_variance(tmp_path):
    code, out = run(tmp_path, "simulate", "--T", "2", "--nt", "20", "--nx", "9", "--n_paths", "4000",
                    "--sigma0", "0.5", "--seed", "3")
    assert code == 0
    with open(out / "stats.csv") as fh:
        last = [r for r in csv.DictReader(fh) if float(r["t"]) == 2.0]
    var = np.array([float(r["variance"]) for r in last])
    se = np.array([float(r["stderr"]) for r in last])
    assert np.all(np.abs(var - 0.5) <= 4 * se)


def test_linear_solver_rejects_drift(tmp_path):
    code, _ = run(tmp_path, "simulate", "--b_slope", "-1")
    assert code == 2


def test_picard_non_convergence_exits_1_with_diagnostics(tmp_path):
    code, out = run(tmp_path, "simulate", "--solver", "picard", "--s_slope", "0.5", "--ic", "constant",
                    "--picard_max_iter", "1", "--picard_tol", "1e-12", "--nx", "9", "--nt", "10", "--n_paths", "8")
    assert code == 1
    assert (out / "picard.csv").read_text().startswith("iteration,h_n\n")


@pytest.mark.parametrize(
    "argv, outputs",
    [
        (["simulate", "--solver", "picard", "--s_slope", "0.2", "--ic", "bump", "--nx", "21", "--nt", "10",
          "--n_paths", "50", "--write_paths", "true"], ("stats.csv", "paths.csv", "picard.csv")),
        (["optimize", "--x_min", "-1", "--x_max", "1", "--nx", "11", "--nt", "5", "--n_paths", "200",
          "--ic", "bump", "--max_iter", "5"], ("trace.csv", "control.csv", "status.txt")),
    ],
)
def test_rerun_from_manifest_is_byte_identical(tmp_path, argv, outputs):
    code, first = run(tmp_path, *argv, name="first")
    assert code == 0
    second = tmp_path / "second"
    assert cli.main(["--config", str(first / "manifest.cfg"), "--out_dir", str(second)]) == 0
    for name in outputs:
        assert (first / name).read_bytes() == (second / name).read_bytes()

import csv
import json
import math
from pathlib import Path

import pytest

from dilute_fermi import cli
from dilute_fermi.config import load_config

ROOT = Path(__file__).resolve().parents[1]
GOLDEN_HEADER = ("schema,subcommand,quantity,value,std_error,n_samples,seed,method,flags,"
                 "rho_up,rho_down,a,delta,alpha,q_x,q_y,q_z,sigma,L,x,s")


def run(tmp_path, sub, *extra, config=None):
    argv = [sub, "-o", str(tmp_path / sub)] + list(extra)
    if config:
        argv += ["-c", str(config)]
    code = cli.main(argv)
    return code, tmp_path / sub


def rows(path):
    with path.open() as fh:
        return list(csv.DictReader(fh))


def test_golden_header(tmp_path):
    code, out = run(tmp_path, "energy", "--set", "physical.a=1")
    assert code == 0
    assert (out / "energy.csv").read_text().splitlines()[0] == GOLDEN_HEADER
    assert cli.CSV_SCHEMA == "1"


def test_energy_free_gas_only(tmp_path):
    code, out = run(tmp_path, "energy", "--set", "physical.a=0")
    assert code == 0
    r = {x["quantity"]: float(x["value"]) for x in rows(out / "energy.csv")}
    rho = 2e-3
    assert r["huang_yang_total"] == r["huang_yang_free"]
    assert r["huang_yang_free"] == pytest.approx(0.6 * (3 * math.pi**2) ** (2 / 3) * rho ** (5 / 3), rel=1e-15)


def test_scatter_bundled_config(tmp_path):
    code, out = run(tmp_path, "scatter", config=ROOT / "configs" / "square_barrier.ini")
    assert code == 0
    r = {x["quantity"]: x for x in rows(out / "scatter.csv")}
    assert float(r["scattering_length"]["value"]) == pytest.approx(0.51799, abs=5e-6)
    # 17 significant digits survive the text round trip
    v = r["scattering_length"]["value"]
    assert repr(float(v)) == repr(float(f"{float(v):.17g}"))


@pytest.mark.parametrize("sub", ["belyakov", "regularization"])
def test_manifest_round_trip(tmp_path, sub):
    extra = ["--set", "task.max_samples=65536", "--seed", "5"]
    code, out = run(tmp_path, sub, *extra, config=ROOT / "configs" / "square_barrier.ini")
    assert code == 0
    manifest = json.loads((out / f"{sub}.manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["config"]["io"]["seed"] == "5"
    assert {"numpy", "scipy", "python"} <= set(manifest["versions"])
    code2 = cli.main([sub, "-c", str(out / f"{sub}.manifest.json"), "-o", str(tmp_path / "again")])
    assert code2 == 0
    assert (tmp_path / "again" / f"{sub}.csv").read_bytes() == (out / f"{sub}.csv").read_bytes()


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DILUTE_FERMI_SEED", "99")
    code, out = run(tmp_path, "energy", "--set", "physical.a=1")
    assert code == 0 and rows(out / "energy.csv")[0]["seed"] == "99"
    assert json.loads((out / "energy.manifest.json").read_text())["config"]["io"]["seed"] == "99"


@pytest.mark.parametrize("override, needle", [("physical.delta=0.2", "δ > 2/9"),
                                              ("physical.alpha=0.05", "0 < α < 1/27")])
def test_constraint_errors(tmp_path, capsys, override, needle):
    code, out = run(tmp_path, "energy", "--set", "physical.a=1", "--set", override)
    assert code == 2
    rec = json.loads((out / "error.json").read_text())
    assert rec["config_error"] and needle in rec["message"]
    assert needle in json.loads(capsys.readouterr().err)["message"]


def test_missing_scattering_input(tmp_path):
    code, out = run(tmp_path, "belyakov")
    assert code == 2
    assert "potential" in json.loads((out / "error.json").read_text())["message"]


def test_bad_override_and_missing_file(tmp_path):
    assert cli.main(["energy", "--set", "nonsense"]) == 2
    assert cli.main(["energy", "-c", str(tmp_path / "nope.ini")]) == 2
    # a misspelt key must not be silently ignored
    assert cli.main(["energy", "--set", "task.max_sample=10"]) == 2
    (tmp_path / "typo.ini").write_text("[physical]\na = 1\nrho_upp = 1e-3\n")
    assert cli.main(["energy", "-c", str(tmp_path / "typo.ini")]) == 2


def test_runtime_error_exit_code(tmp_path):
    # x outside (0, 1] for I_s becomes a flagged row, so force a real failure instead
    code, out = run(tmp_path, "bounds", "--set", "physical.a=1", "--set", "task.max_samples=0")
    assert code == 1
    assert json.loads((out / "error.json").read_text())["config_error"] is False


def test_bounds_and_sweep_small(tmp_path):
    code, out = run(tmp_path, "bounds", "--set", "physical.a=1", "--set", "task.x_values=1.0",
                    "--set", "task.s_values=2", "--set", "task.q_values=2", "--set", "task.xq_values=1",
                    "--set", "task.max_samples=65536")
    assert code == 0
    q = [r["quantity"] for r in rows(out / "bounds.csv")]
    assert "I2_value" in q and "I2q_ratio_ratio" in q
    code, out = run(tmp_path, "sweep", "--set", "physical.a=1", "--set", "task.rho_list=1e-3,1e-4",
                    "--set", "task.q_over_kF=0", "--set", "task.max_samples=65536")
    assert code == 0
    r = rows(out / "sweep.csv")
    assert [x["quantity"] for x in r] == ["leading_order_ratio"] * 2
    assert [float(x["rho_up"]) for x in r] == [1e-3, 1e-4]


def test_lattice_subcommand(tmp_path):
    code, out = run(tmp_path, "lattice", "--set", "task.L_list=10,14", "--set", "task.max_samples=65536",
                    config=ROOT / "configs" / "lattice.ini")
    assert code == 0
    q = [r["quantity"] for r in rows(out / "lattice.csv")]
    assert q.count("B2_constant") == 2 and "B1B2_constant" in q and "continuum_C_g" in q


def test_config_grammar(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[physical]\nrho_up = 1e-4   # comment\nR0 = 2\n[task]\nL_list = 10, 20\n")
    cfg = load_config(p)
    assert cfg.pf("rho_up") == 1e-4 and cfg.pf("R0") == 2.0
    assert cfg.tlist("L_list") == [10.0, 20.0]
    p.write_text("[bogus]\nx = 1\n")
    with pytest.raises(ValueError):
        load_config(p)


def test_bundled_configs_validate():
    for path in sorted((ROOT / "configs").glob("*.ini")):
        load_config(path).validate()

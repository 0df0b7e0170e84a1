import copy
import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given, settings, strategies as st

from flyby.cli import main
from flyby.config import dump_config, load_config, parse_config
from flyby.errors import ConfigurationError
from flyby.io import read_csv
from flyby.runner import run_config
from flyby.splitop import EnergyLedger

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

SMALL_ENC = {
    "grid": {"x_min": -256.0, "x_max": 256.0, "n_points": 512},
    "packet": {"x0": -150.0, "k0": 1.5, "sigma": 10.0},
    "coupling": {"g": 0.5, "b": 2.0, "gamma": 1.0, "B": 0.5},
    "m": 1.0,
    "dt": 0.05,
    "t_final": 180.0,
    "ledger_stride": 50,
}


def enc_run_cfg(**over):
    d = {"kind": "enc-run", "enc": copy.deepcopy(SMALL_ENC)}
    d["enc"].update(over)
    return d


def write_yaml(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_round_trip(path, capsys):
    cfg = load_config(path)
    assert parse_config(yaml.safe_load(dump_config(cfg))) == cfg
    assert main(["validate", str(path)]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["kind"] == cfg.kind


@settings(max_examples=20, deadline=None)
@given(emit=st.lists(st.sampled_from(["csv", "json"]), min_size=1, max_size=4))
def test_emit_is_normalised(emit):
    cfg = parse_config(dict(enc_run_cfg(), emit=emit))
    assert cfg.emit == tuple(sorted(set(emit)))
    assert parse_config(yaml.safe_load(dump_config(cfg))) == cfg


def test_defaults_are_applied():
    cfg = parse_config(enc_run_cfg())
    assert cfg.enc.hbar == 1.0 and cfg.enc.spin1_init == "down" and cfg.emit == ("csv", "json")


@pytest.mark.parametrize(
    "mutate, needle",
    [
        (lambda d: d["enc"].pop("m"), "enc.m"),
        (lambda d: d["enc"]["grid"].update(n_points=500), "n_points"),
        (lambda d: d["enc"]["coupling"].update(bogus=1), "enc.coupling.bogus"),
        (lambda d: d["enc"].update(dt=0.5), "max kinetic"),
        (lambda d: d.update(kind="enc-scan-b"), "scan"),
        (lambda d: d.update(hermite={}), "hermite"),
        (lambda d: d["enc"].update(spin1_init="sideways"), "spin1_init"),
    ],
)
def test_malformed_configs_exit_2_naming_the_field(tmp_path, capsys, mutate, needle):
    data = enc_run_cfg()
    mutate(data)
    path = write_yaml(tmp_path, data)
    assert main(["validate", str(path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert needle in err["message"]
    assert main(["run", str(path), "--output-dir", str(tmp_path / "out")]) == 2


def test_unreadable_configs(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("kind: [unclosed\n")
    assert main(["validate", str(bad)]) == 2
    assert main(["validate", str(tmp_path / "missing.yaml")]) == 2
    with pytest.raises(ConfigurationError, match="mapping"):
        parse_config([1, 2])


def test_workers_must_be_positive(tmp_path):
    path = write_yaml(tmp_path, enc_run_cfg())
    assert main(["run", str(path), "--workers", "0"]) == 2


def _ledger_from_csv(path):
    header, rows = read_csv(path)
    assert tuple(header) == EnergyLedger.COLUMNS
    return {k: np.array([float(r[k]) for r in rows]) for k in header}


@pytest.fixture(scope="module")
def enc_outputs(tmp_path_factory):
    base = tmp_path_factory.mktemp("enc")
    path = write_yaml(base, enc_run_cfg())
    assert main(["run", str(path), "--output-dir", str(base / "a")]) == 0
    assert main(["run", str(path), "--output-dir", str(base / "b")]) == 0
    return base


def test_enc_run_outputs(enc_outputs):
    out = enc_outputs / "a"
    names = sorted(p.name for p in out.iterdir())
    assert names == ["branches.csv", "ledger.csv", "manifest.json", "momentum_histogram.csv", "summary.json"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["kind"] == "enc-run" and manifest["toolkit_version"]
    assert manifest["config"]["enc"]["m"] == 1.0
    # headline metrics are recomputable from the CSVs
    led = _ledger_from_csv(out / "ledger.csv")
    drift = np.max(np.abs(led["E_total"] - led["E_total"][0])) / abs(led["E_total"][0])
    assert manifest["metrics"]["energy_drift"] == pytest.approx(drift, rel=1e-12)
    _, branches = read_csv(out / "branches.csv")
    p_flip = sum(float(r["probability"]) for r in branches if r["s1"] == "0")
    assert manifest["metrics"]["P_flip"] == pytest.approx(p_flip, rel=1e-12)
    by = {r["branch"]: r for r in branches}
    noflip = sum(float(by[b]["probability"]) * float(by[b]["mean_kinetic"]) for b in ("du", "dd"))
    noflip /= sum(float(by[b]["probability"]) for b in ("du", "dd"))
    shift = float(by["uu"]["mean_kinetic"]) - noflip
    assert manifest["metrics"]["dE_kin_flip"]["uu"] == pytest.approx(shift, rel=1e-10)


def test_outputs_are_byte_deterministic(enc_outputs):
    for name in ("ledger.csv", "branches.csv", "momentum_histogram.csv", "summary.json"):
        assert (enc_outputs / "a" / name).read_bytes() == (enc_outputs / "b" / name).read_bytes(), name


def test_csv_floats_round_trip(enc_outputs):
    text = (enc_outputs / "a" / "ledger.csv").read_text()
    assert "\r" not in text
    value = text.splitlines()[2].split(",")[5]
    assert format(float(value), ".17g") == value


def test_emit_json_only(tmp_path):
    cfg = parse_config(enc_run_cfg())
    outcome = run_config(cfg, output_dir=tmp_path, emit=("json",))
    assert outcome.exit_code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["manifest.json", "summary.json"]


def test_scan_csv_has_one_row_per_field(tmp_path):
    data = {"kind": "enc-scan-b", "enc": copy.deepcopy(SMALL_ENC), "scan": {"B_values": [0.2, 0.5]}}
    path = write_yaml(tmp_path, data)
    assert main(["run", str(path), "--output-dir", str(tmp_path / "o"), "--emit", "csv"]) == 0
    header, rows = read_csv(tmp_path / "o" / "scan.csv")
    assert header == ["B", "P_flip", "dE_kin_flip", "drift"]
    assert [float(r["B"]) for r in rows] == [0.2, 0.5]
    assert not (tmp_path / "o" / "summary.json").exists()


def test_smatrix_outputs(tmp_path):
    out = tmp_path / "sm"
    assert main(["run", str(CONFIG_DIR / "nash_smatrix.yaml"), "--output-dir", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    T00 = summary["smatrices"][0]["T"][0][0]
    assert len(T00) == 2  # [re, im]
    _, scan = read_csv(out / "energy_scan.csv")
    assert len(scan) == 3
    _, sm = read_csv(out / "smatrix.csv")
    # rebuild S at the first energy and recompute the unitarity defect from the CSV
    E0 = scan[0]["E_total"]
    n = int(scan[0]["open_count"])
    blocks = {b: np.zeros((n, n), complex) for b in ("R", "T", "R_right", "T_right")}
    for r in sm:
        if r["E_total"] == E0:
            blocks[r["block"]][int(r["n_out"]), int(r["n_in"])] = complex(float(r["re"]), float(r["im"]))
    S = np.block([[blocks["R"], blocks["T_right"]], [blocks["T"], blocks["R_right"]]])
    defect = np.max(np.abs(S.conj().T @ S - np.eye(2 * n)))
    assert defect == pytest.approx(float(scan[0]["unitarity_defect"]), rel=1e-6, abs=1e-15)
    _, probs = read_csv(out / "probabilities.csv")
    assert set(probs[0]) == {"E_total", "n_in", "n_out", "P_reflection", "P_transmission"}


def test_hermite_check_outputs(tmp_path):
    out = tmp_path / "hc"
    assert main(["run", str(CONFIG_DIR / "hermite_check.yaml"), "--output-dir", str(out)]) == 0
    _, checks = read_csv(out / "checks.csv")
    assert checks and all(r["passed"] == "true" for r in checks)
    header, rows = read_csv(out / "coefficients.csv")
    assert header[:3] == ["x1", "V_0", "V_1"] and len(rows) == 64


def test_numerical_failure_exits_3(tmp_path, capsys):
    path = write_yaml(tmp_path, enc_run_cfg(t_final=300.0, coupling={"g": 0.0, "b": 2.0, "gamma": 1.0, "B": 0.0}))
    out = tmp_path / "o"
    assert main(["run", str(path), "--output-dir", str(out)]) == 3
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "BoundaryContactError" and err["exit_code"] == 3
    assert not (out / "manifest.json").exists()


def test_io_failure_exits_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    path = write_yaml(tmp_path, enc_run_cfg())
    assert main(["run", str(path), "--output-dir", str(blocker / "sub"), "--emit", "json"]) == 4


def test_nan_serialises_as_null(tmp_path):
    from flyby.io import write_json

    write_json(tmp_path / "x.json", {"a": math.nan, "b": 1 + 2j})
    assert json.loads((tmp_path / "x.json").read_text()) == {"a": None, "b": [1.0, 2.0]}


def test_decoupled_flyby_never_flips(tmp_path):
    cfg = parse_config(enc_run_cfg(coupling={"g": 0.0, "b": 2.0, "gamma": 1.0, "B": 0.5}))
    outcome = run_config(cfg, output_dir=tmp_path, emit=("csv",))
    assert outcome.exit_code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["metrics"]["P_flip"] == 0.0


def test_free_smatrix_is_identity(tmp_path):
    data = yaml.safe_load((CONFIG_DIR / "nash_smatrix.yaml").read_text())
    data["nash"]["potential"]["V0"] = 0.0
    outcome = run_config(parse_config(data), output_dir=tmp_path)
    assert outcome.exit_code == 0
    assert outcome.manifest["metrics"]["unitarity_defect"] < 1e-12
    summary = json.loads((tmp_path / "summary.json").read_text())
    for S in summary["smatrices"]:
        T = np.array([[complex(*z) for z in row] for row in S["T"]])
        np.testing.assert_allclose(T, np.eye(len(T)), atol=1e-12)

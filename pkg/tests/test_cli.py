import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from floqsens import cli

CONFIGS = Path(__file__).resolve().parents[1] / "docs" / "configs"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_config(name, out, *extra):
    return cli.main(["run", "--config", str(CONFIGS / f"{name}.json"), "--out", str(out), *extra])


def write_config(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return p


def test_zeeman_bands_have_zero_derivatives(tmp_path):
    assert run_config("bands_zeeman", tmp_path) == 0
    rows = read_csv(tmp_path / "bands.csv")
    assert rows
    # flat bands: derivative columns vanish up to round-off of the band tracking
    assert max(abs(float(r[c])) for r in rows for c in ("deps_dphi1", "deps_dphi2")) < 1e-12


def test_qfi_tail_inside_bound_window(tmp_path):
    assert run_config("qfi_polarization", tmp_path) == 0
    rows = read_csv(tmp_path / "qfi.csv")
    tail = [r for r in rows if float(r["T"]) >= 25]
    assert tail
    for r in tail:
        q, lo, hi = float(r["qfi"]), float(r["bound_lo"]), float(r["bound_hi"])
        assert 0.75 * lo <= q <= 1.25 * hi


def test_validate_table_columns(tmp_path):
    assert run_config("validate_polarization", tmp_path) == 0
    rows = read_csv(tmp_path / "validate.csv")
    assert "max_rel_dev" in rows[0]
    devs = [float(r["rel_dev"]) for r in rows]
    assert float(rows[0]["max_rel_dev"]) == pytest.approx(max(devs))


def test_manifest_fields(tmp_path):
    assert run_config("bands_zeeman", tmp_path) == 0
    man = json.loads((tmp_path / "manifest.json").read_text())
    for key in ("config_sha256", "version", "wall_time_s", "experiment", "seed", "outputs"):
        assert key in man
    assert len(man["config_sha256"]) == 64
    assert man["outputs"] == ["bands.csv"]


def test_reruns_and_thread_counts_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_config("noise_dephasing", a, "--threads", "1") == 0
    assert run_config("noise_dephasing", b, "--threads", "4") == 0
    for name in ("noise.csv", "noise_stop.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_csv_contract(tmp_path):
    assert run_config("bands_zeeman", tmp_path) == 0
    body = (tmp_path / "bands.csv").read_bytes()
    assert b"\r" not in body
    assert body.splitlines()[0] == b"phi1,phi2,band,eps_folded,deps_dphi1,deps_dphi2"


def test_unknown_key_is_a_config_error(tmp_path):
    p = write_config(tmp_path, {"experiment": "bands", "model": {"name": "zeeman"}, "colour": "red"})
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_mismatched_subcommand_is_a_config_error(tmp_path):
    assert cli.main(["qfi", "--config", str(CONFIGS / "bands_zeeman.json"), "--out", str(tmp_path)]) == 2


def test_unknown_model_is_a_config_error(tmp_path):
    p = write_config(tmp_path, {"experiment": "bands", "model": {"name": "circulr"}})
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_truncation_breach_exits_three(tmp_path):
    cfg = {
        "experiment": "validate",
        "model": {"name": "polarization"},
        "input": {"kind": "fock", "n_c": 10},
        "grid": 32,
        "truncation": 13,
        "times": [20],
    }
    p = write_config(tmp_path, cfg)
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_invalid_parameter_is_a_config_error(tmp_path):
    cfg = {"experiment": "validate", "model": {"name": "polarization"}, "input": {"kind": "fock", "n_c": 10}, "truncation": 11}
    p = write_config(tmp_path, cfg)
    assert cli.main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_list_models_table():
    buf = io.StringIO()
    assert cli.list_models(stream=buf) == 0
    text = buf.getvalue()
    for name in ("circular", "polarization", "zeeman", "specific", "qutrit"):
        assert name in text
    lines = text.strip().splitlines()[1:]
    assert all(len(line.split()) >= 2 for line in lines)


def test_list_models_unknown_name_suggests(capsys):
    assert cli.main(["list-models", "polarisation"]) == 2
    assert "polarization" in capsys.readouterr().err


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "floqsens.cli", "list-models"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "qutrit" in res.stdout

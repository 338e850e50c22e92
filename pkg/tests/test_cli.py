import json
import math
import subprocess
import sys

import pytest

from giantsim import cli
from giantsim import io


def run(tmp_path, *args):
    return cli.run([*args, "--out", str(tmp_path), "--jobs", "1"])


def test_rates_output_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run(d, "rates", "--set", "samples=41") == 0
    assert (a / "rates.csv").read_bytes() == (b / "rates.csv").read_bytes()
    first = (a / "rates.csv").read_text().splitlines()[0]
    assert first.startswith(f"# generated {io.EPOCH_STAMP} by giantsim")
    header, body = io.read_csv(a / "rates.csv")
    assert header[:2] == ["omega_over_omega0", "omega_GHz"]
    assert body.shape == (41, len(header))


def test_manifest_contents(tmp_path):
    assert run(tmp_path, "rates", "--set", "samples=5", "--set", "layout=chain") == 0
    man = io.RunManifest.load(tmp_path)
    assert man.subcommand == "rates"
    assert man.config["layout"] == "chain"
    assert man.files == ["rates.csv"]
    assert man.layout_hash


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"layout": "grid", "atoms": [5], "band": [1.0, 1.5]}))
    assert cli.run(["df", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "df.json").read_text())
    ws = [f["omega_over_omega0"] for f in doc["frequencies"]]
    assert ws == pytest.approx([1 + m / 20 for m in range(1, 10)], abs=1e-9)


@pytest.mark.parametrize("args, code", [
    (("rates", "--set", "samples=0"), cli.EXIT_CONFIG),
    (("xxz", "--set", "N=3"), cli.EXIT_CONFIG),
    (("xxz", "--set", "N=8", "--set", "t_list=[1.0]"), cli.EXIT_CAPACITY),
    (("gate-fidelity", "--set", "gamma_ex_over_g=[-0.1]"), cli.EXIT_CONFIG),
])
def test_error_exit_codes(tmp_path, args, code):
    assert run(tmp_path, *args) == code


def test_missing_config_file(tmp_path):
    assert cli.run(["rates", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_markov_check_values(tmp_path):
    assert run(tmp_path, "markov-check") == 0
    doc = json.loads((tmp_path / "markov.json").read_text())
    assert doc["ratio_angular"] == pytest.approx(4 * math.pi)
    assert doc["ratio_ordinary"] == pytest.approx(2.0)
    assert doc["markovian"] is False


def test_xxz_resume_reuses_points(tmp_path):
    args = ("xxz", "--set", "ideal_gates=true", "--set", "t_list=[0.0, 0.5, 1.0]", "--set", "l_list=[5]",
            "--set", "Gamma_MHz=1.0")
    assert run(tmp_path, *args) == 0
    before = (tmp_path / "xxz_traces.csv").read_bytes()
    assert len(io.RunManifest.load(tmp_path).completed_points) == 3
    assert run(tmp_path, *args, "--resume") == 0
    assert (tmp_path / "xxz_traces.csv").read_bytes() == before
    header, body = io.read_csv(tmp_path / "xxz_traces.csv")
    assert header[-1] == "trace"
    assert body[0, 2] == pytest.approx(1.0)


def test_trotter_error_summary(tmp_path):
    args = ("trotter-error", "--set", "ideal_gates=true", "--set", "t_list=[0.5, 1.0]", "--set", "l_list=[5, 10]")
    assert run(tmp_path, *args) == 0
    doc = json.loads((tmp_path / "trotter_summary.json").read_text())
    assert doc["ideal_gates"] is True
    assert doc["max_abs_dn"]["10"] < doc["max_abs_dn"]["5"]


def test_module_entry_point_version():
    out = subprocess.run([sys.executable, "-m", "giantsim", "--version"], capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.startswith("giantsim ")


def test_czphi_scan_accepts_rate_grid(tmp_path):
    assert run(tmp_path, "czphi-scan", "--set", "gamma_ex_MHz=[0, 0.1]", "--set", "phi=[0.5, 3.0]") == 0
    header, body = io.read_csv(tmp_path / "czphi_scan.csv")
    assert body.shape == (4, len(header))
    process = dict(((phi, ex), f) for phi, ex, f in body[:, [0, 1, 3]])
    assert process[(3.0, 0.1)] < process[(3.0, 0.0)]

import json
import os
import subprocess
import sys

import pytest

from scenariocert.cli import main
from scenariocert.evstudy import EVFeasibilityConfig
from scenariocert.geometry import Polytope


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def feas_config(tmp_path):
    return write_json(tmp_path / "feas.json", EVFeasibilityConfig.default(N=1, n=2, seed=3).to_dict())


@pytest.fixture
def cost_config(tmp_path):
    return write_json(tmp_path / "cost.json", {"kind": "ev_cost", "N": 2, "n": 3, "seed": 1})


def outputs(d):
    names = sorted(os.listdir(d))
    return {n: (d / n).read_bytes() for n in names if n != "manifest.json"}


def test_epsilon_prints_certificate(capsys):
    assert main(["epsilon", "--mode", "posteriori", "--M", "1000", "--k", "5", "--beta", "1e-6"]) == 0
    cert = json.loads(capsys.readouterr().out)
    assert cert["kind"] == "APosterioriSet" and 0 < cert["epsilon"] < 1


@pytest.mark.parametrize("argv", [
    ["epsilon", "--mode", "posteriori", "--M", "10", "--beta", "1e-6"],
    ["epsilon", "--mode", "apriori", "--M", "10", "--beta", "2"],
    ["epsilon", "--mode", "nonsense", "--M", "10", "--beta", "0.1"],
    ["sample-size", "--eps", "1", "--n", "3"],
    ["sample-size", "--eps", "0.1"],
    ["no-such-command"],
])
def test_usage_errors_exit_2(argv):
    assert main(argv) == 2


def test_config_errors_write_nothing(tmp_path):
    out = tmp_path / "out"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["certify-set", "--config", str(bad), "--M", "10", "--out", str(out)]) == 2
    assert main(["certify-set", "--config", str(tmp_path / "missing.json"), "--M", "10", "--out", str(out)]) == 2
    unknown = write_json(tmp_path / "u.json", {"kind": "mystery"})
    assert main(["certify-set", "--config", unknown, "--M", "10", "--out", str(out)]) == 2
    assert not out.exists()


def test_infeasible_config_exits_3(tmp_path):
    cfg = write_json(tmp_path / "c.json", {"kind": "ev_feasibility", "N": 1, "n": 2, "seed": 0,
                                           "x_upper": [[3.0, 3.0]]})
    out = tmp_path / "out"
    assert main(["certify-set", "--config", cfg, "--M", "10", "--out", str(out)]) == 3
    assert not out.exists()


def test_certify_set_outputs(tmp_path, feas_config):
    out = tmp_path / "run"
    code = main(["certify-set", "--config", feas_config, "--M", "50", "100", "--M-test", "300", "--out", str(out)])
    assert code == 0
    assert set(os.listdir(out)) == {"certify_set.csv", "certificate_M50.json", "certificate_M100.json",
                                    "manifest.json"}
    lines = (out / "certify_set.csv").read_text().splitlines()
    assert lines[0].split(",")[:4] == ["M", "k_used", "k_computed", "epsilon_theory"]
    assert len(lines) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["command"] == "certify-set"
    assert sorted(manifest["outputs"]) == ["certificate_M100.json", "certificate_M50.json", "certify_set.csv"]


def test_offset_noise_config(tmp_path):
    cfg = write_json(tmp_path / "o.json", {
        "kind": "offset_noise", "seed": 2,
        "base": Polytope.box([-5, -5], [5, 5]).to_dict(),
        "A": [[1, 0], [-1, 0], [0, 1], [0, -1]], "b": [3, 3, 3, 3], "sigma": 0.3,
    })
    assert main(["certify-set", "--config", cfg, "--M", "40", "--M-test", "200", "--out", str(tmp_path / "o")]) == 0


def test_runs_are_deterministic_and_replayable(tmp_path, feas_config):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    argv = ["certify-set", "--config", feas_config, "--M", "60", "--M-test", "400", "--seed", "11"]
    assert main(argv + ["--out", str(a)]) == 0
    assert main(argv + ["--out", str(b)]) == 0
    assert outputs(a) == outputs(b)
    assert main(["replay", "--manifest", str(a / "manifest.json"), "--out", str(c)]) == 0
    assert outputs(a) == outputs(c)
    (a / "certify_set.csv").unlink()
    assert main(["replay", "--manifest", str(a / "manifest.json")]) == 0
    assert outputs(a) == outputs(b)


def test_certify_solution(tmp_path, cost_config):
    out = tmp_path / "s"
    argv = ["certify-solution", "--config", cost_config, "--M", "30", "--M-test", "300",
            "--N-list", "2", "3", "--repeats", "2", "--out", str(out)]
    assert main(argv) == 0
    rows = (out / "certify_solution.csv").read_text().splitlines()
    assert len(rows) == 5
    assert all(r.split(",")[11] == "ok" for r in rows[1:])


def test_sample_size_stdout(capsys):
    assert main(["sample-size", "--eps", "0.1", "--beta", "1e-6", "--n", "12", "--N-list", "1", "10"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "N,M_rank_bound,M_naive"
    n1 = lines[1].split(",")
    assert n1[1] == n1[2]
    n10 = lines[2].split(",")
    assert int(n10[2]) > int(n10[1])


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "scenariocert.cli", "epsilon", "--mode", "explicit",
                        "--M", "100", "--dim", "3", "--beta", "0.01"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["kind"] == "APrioriPoint"

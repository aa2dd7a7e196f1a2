import json
import shutil
import subprocess

import numpy as np
import pytest

import hdrelay.gaussian as gaussian
from hdrelay.cli import main
from hdrelay.gaussian import LineNetworkGains, dump_network, line_network, random_network


def write_net(path, net):
    path.write_text(dump_network(net))
    return str(path)


def cross_gain(tmp_path, switching="independent"):
    g = LineNetworkGains((np.sqrt(3), 0), (0, np.sqrt(3)))
    return write_net(tmp_path / "ex1.json", line_network(g, switching))


def run_json(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


class TestSolve:
    def test_cross_gain(self, tmp_path, capsys):
        code, out = run_json(["solve", cross_gain(tmp_path)], capsys)
        assert code == 0
        assert out["rate_bits"] == pytest.approx(2.0, abs=1e-9)
        assert [s["state_bits"] for s in out["schedule"]] == ["01"]
        assert out["certificate"]["passed"] and out["simple"]
        assert out["n_states"] == 4

    def test_lockstep(self, tmp_path, capsys):
        code, out = run_json(["solve", cross_gain(tmp_path, "lockstep")], capsys)
        assert code == 0 and out["n_states"] == 2
        assert out["rate_bits"] == pytest.approx(1.0, abs=1e-9)

    def test_out_file(self, tmp_path, capsys):
        dest = tmp_path / "res.json"
        assert main(["solve", cross_gain(tmp_path), "--out", str(dest)]) == 0
        assert capsys.readouterr().out == ""
        assert json.loads(dest.read_text())["rate_bits"] == pytest.approx(2.0, abs=1e-9)

    def test_malformed(self, tmp_path, capsys):
        obj = json.loads(open(cross_gain(tmp_path)).read())
        obj["H"] = obj["H"][:2]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(obj))
        assert main(["solve", str(bad)]) == 1
        assert "H" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert main(["solve", str(tmp_path / "nope.json")]) == 1


class TestOracle:
    def test_matches(self, tmp_path, capsys, rng):
        path = write_net(tmp_path / "n.json", random_network(rng, 4, 1))
        code, out = run_json(["oracle", path], capsys)
        assert code == 0 and out["matches_solver"]
        assert out["c_prime_exact"] == pytest.approx(out["solver_rate"], abs=1e-6)

    def test_refuses_large(self, tmp_path, capsys, rng):
        path = write_net(tmp_path / "n.json", random_network(rng, 12, 1))
        assert main(["oracle", path]) == 3
        assert "refuses" in capsys.readouterr().err

    def test_zero_network(self, tmp_path, capsys):
        obj = {"n_relays": 2, "m_source": 1, "m_relay": [1, 1], "m_dest": 1,
               "switching": "lockstep", "H": [[[0, 0]] * 3] * 3}
        path = tmp_path / "z.json"
        path.write_text(json.dumps(obj))
        code, out = run_json(["oracle", str(path)], capsys)
        assert code == 0 and out["c_prime_exact"] == 0 and out["solver_rate"] == 0


class TestSweep:
    def rows(self, capsys):
        return capsys.readouterr().out.strip().split("\n")

    def test_default(self, capsys):
        assert main(["sweep-line"]) == 0
        lines = self.rows(capsys)
        assert len(lines) == 51
        assert float(lines[1].split(",")[0]) == pytest.approx(0.1)
        assert float(lines[-1].split(",")[0]) == pytest.approx(10.0)

    def test_single_point(self, capsys):
        assert main(["sweep-line", "--gamma-min", "1", "--gamma-max", "1", "--points", "1"]) == 0
        assert len(self.rows(capsys)) == 2

    def test_two_points(self, capsys):
        assert main(["sweep-line", "--gamma-min", "1", "--gamma-max", "4", "--points", "2"]) == 0
        assert [r.split(",")[0] for r in self.rows(capsys)[1:]] == ["1", "4"]

    @pytest.mark.parametrize("argv", [
        ["--gamma-min", "2", "--gamma-max", "1"],
        ["--gamma-min", "0", "--gamma-max", "1"],
        ["--gamma-min", "1", "--gamma-max", "2", "--points", "1"],
        ["--points", "0"],
    ])
    def test_bad_range(self, argv, capsys):
        assert main(["sweep-line", *argv]) == 1


class TestVerify:
    @pytest.mark.parametrize("suite", ["submodularity", "gap", "sparsity"])
    def test_suites_pass(self, suite, capsys):
        code, out = run_json(["verify", "--suite", suite, "--n", "3", "--trials", "4"], capsys)
        assert code == 0 and out["passed"]

    def test_gap_margin_reported(self, capsys):
        _, out = run_json(["verify", "--suite", "gap", "--n", "2", "--trials", "3"], capsys)
        assert out["min_margin_bits"] > 0

    def test_violation_writes_witness(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setattr(gaussian, "GAP_PER_ANTENNA", -1.0)
        wpath = tmp_path / "w.json"
        code = main(["verify", "--suite", "gap", "--n", "2", "--trials", "3",
                     "--witness-out", str(wpath)])
        assert code == 2
        w = json.loads(wpath.read_text())
        assert w["suite"] == "gap" and w["trial"] == 0
        assert w["network"]["n_relays"] == 2

    def test_sparsity_limit(self, capsys):
        assert main(["verify", "--suite", "sparsity", "--n", "9", "--trials", "1"]) == 1


class TestGenRandom:
    def test_deterministic(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for p in (a, b):
            assert main(["gen-random", "--n", "3", "--seed", "7", "--out", str(p)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_dims(self, tmp_path, capsys):
        code, out = run_json(["gen-random", "--n", "2", "--antennas", "2,1", "--m-source", "2",
                              "--m-dest", "3", "--switching", "independent"], capsys)
        assert code == 0
        assert out["m_relay"] == [2, 1]
        assert len(out["H"]) == 3 + 3 and len(out["H"][0]) == 3 + 2

    def test_round_trip_into_solve(self, tmp_path, capsys):
        p = tmp_path / "r.json"
        main(["gen-random", "--n", "2", "--antennas", "2,1", "--switching", "independent",
              "--out", str(p)])
        code, out = run_json(["solve", str(p)], capsys)
        assert code == 0 and out["n_states"] == 8
        assert len(out["schedule"]) <= 3

    def test_bad_antennas(self, capsys):
        assert main(["gen-random", "--n", "2", "--antennas", "1,2,3"]) == 1


@pytest.mark.skipif(shutil.which("hdrelay") is None, reason="console script not installed")
def test_console_script(tmp_path):
    path = cross_gain(tmp_path)
    proc = subprocess.run(["hdrelay", "solve", path], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["rate_bits"] == pytest.approx(2.0, abs=1e-9)

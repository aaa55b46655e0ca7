from __future__ import annotations

import copy
import json
import subprocess
import sys

import pytest

from qformation.cli import main
from qformation.config import ConfigError, example_config, parse_config


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def small(**run):
    cfg = example_config()
    cfg["run"].update({"n_runs": 20, **run})
    return cfg


def mutate(path, value):
    cfg = example_config()
    node = cfg
    for k in path[:-1]:
        node = node[k]
    if value is KeyError:
        del node[path[-1]]
    else:
        node[path[-1]] = value
    return cfg


class TestConfig:
    def test_example_parses(self):
        rc = parse_config(example_config())
        assert rc.n_agents == 4 and rc.graph.is_chain and rc.cfg.a == 2.0

    @pytest.mark.parametrize("path, value, needle", [
        (("schema_version",), 2, "schema_version"),
        (("quantizer", "omega"), 0.8, "omega"),
        (("quantizer", "M"), 1, "sector count"),
        (("quantizer", "bogus"), 1, "unknown keys"),
        (("formation", "targets"), [[4.1, 0.0]] * 4, "targets on grid"),
        (("formation", "n_agents"), 5, "n_agents"),
        (("formation", "d_max"), 4.0, "inside the safe distance"),
        (("formation", "d_min"), KeyError, "missing"),
        (("graph", "topology"), "star", "topology"),
        (("perception", "kind"), "telepathy", "perception"),
        (("run", "seed"), -1, "seed"),
        (("run", "init"), "chaos", "run.init"),
        (("run", "init"), [[4.0, 0.0]], "wrong number"),
        (("run", "n_runs"), 0, "positive"),
    ])
    def test_rejections(self, path, value, needle):
        with pytest.raises(ConfigError, match=needle):
            parse_config(mutate(path, value))

    def test_infeasible_quantizer(self):
        cfg = mutate(("quantizer", "a"), 4.0)
        cfg["formation"].update(d_min=2.0, d_max=8.0)
        with pytest.raises(ConfigError, match="quantizer feasibility"):
            parse_config(cfg)

    def test_snap_targets(self):
        cfg = mutate(("formation", "targets"), [[4.1, 0.0]] * 4)
        cfg["formation"]["snap_targets"] = True
        with pytest.warns(UserWarning, match="snapped"):
            rc = parse_config(cfg)
        assert all(t.r == 4.0 for t in rc.targets)

    def test_custom_edges_are_one_based(self):
        cfg = mutate(("graph",), {"topology": "custom", "edges": [[1, 2], [2, 3], [3, 4], [1, 4]]})
        rc = parse_config(cfg)
        assert not rc.graph.is_chain and (0, 3) in rc.graph.edges
        with pytest.raises(ConfigError, match="graph"):
            parse_config(mutate(("graph",), {"topology": "custom", "edges": [[1, 1]]}))


class TestCommands:
    def test_simulate(self, tmp_path, capsys):
        code = main(["simulate", "--config", write_cfg(tmp_path, small()), "--out", str(tmp_path)])
        assert code == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["bound"] == 275.625 and summary["mean_t"] < 275.625
        assert summary["runs"] == 20 and summary["violations"] == 0
        trace = (tmp_path / "trace.csv").read_text().splitlines()
        assert trace[0].startswith("step,i,j,r_1,theta_1") and trace[0].endswith(",safe")
        assert json.loads(capsys.readouterr().out)["bound"] == 275.625

    def test_simulate_deterministic(self, tmp_path):
        outs = []
        for k in range(2):
            d = tmp_path / f"o{k}"
            assert main(["simulate", "--config", write_cfg(tmp_path, small()), "--out", str(d),
                         "--quiet", "--seed", "77"]) == 0
            outs.append(((d / "trace.csv").read_bytes(), (d / "summary.json").read_bytes()))
        assert outs[0] == outs[1]

    def test_simulate_fails_when_budget_too_small(self, tmp_path):
        cfg = small(max_steps=1)
        assert main(["simulate", "--config", write_cfg(tmp_path, cfg), "--out", str(tmp_path),
                     "--quiet"]) == 1

    def test_bound(self, tmp_path, capsys):
        assert main(["bound"]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["bound"] == 275.625 and rep["delta_range"] == 7
        cfg = mutate(("graph",), {"topology": "custom", "edges": [[1, 2], [2, 3], [3, 4], [1, 4]]})
        assert main(["bound", "--config", write_cfg(tmp_path, cfg)]) == 1
        assert "not a chain" in capsys.readouterr().err

    def test_check_init(self, tmp_path, capsys):
        y0 = json.dumps([[4.0, 0.0]] * 4)
        assert main(["check-init", "--y0", y0]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["in_Y0"] and rep["in_S0"] and rep["is_safe"]
        assert main(["check-init", "--y0", json.dumps([[20.0, 0.0]] + [[4.0, 0.0]] * 3)]) == 1
        f = tmp_path / "y0.json"
        f.write_text(y0)
        assert main(["check-init", "--y0", str(f), "--quiet"]) == 0
        assert main(["check-init", "--y0", "[[4, 0]]"]) == 2
        assert main(["check-init", "--y0", "{nope"]) == 2

    def test_sample_then_fit(self, tmp_path, capsys):
        cfg = example_config()
        cfg["sampling"] = {"n": 200, "levels": [0, 2]}
        path = write_cfg(tmp_path, cfg)
        assert main(["sample-perception", "--config", path, "--out", str(tmp_path), "--quiet"]) == 0
        rows = (tmp_path / "samples.csv").read_text().splitlines()
        assert len(rows) == 401 and rows[0] == "true_r,true_theta,est_r,est_theta,env"
        assert main(["fit", "--out", str(tmp_path), "--p", "0.9,0.99"]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["skipped"] == 0 and len(rep["fits"]) == 4
        text = (tmp_path / "fits.csv").read_text()
        assert text.startswith("env,p,a,M,coverage_r,coverage_theta,n_used,degenerate\n")

    def test_fit_exact_samples_is_degenerate(self, tmp_path, capsys):
        s = tmp_path / "exact.csv"
        s.write_text("true_r,true_theta,est_r,est_theta,env\n4.0,1.0,4.0,1.0,clear\n"
                     "8.0,2.0,8.0,2.0,clear\n")
        assert main(["fit", "--samples", str(s), "--out", str(tmp_path), "--p", "0.99"]) == 0
        (fit,) = json.loads(capsys.readouterr().out)["fits"]
        assert fit["degenerate"] and fit["a"] == 1.0 + 1e-6

    def test_fit_bad_input(self, tmp_path):
        assert main(["fit", "--samples", str(tmp_path / "missing.csv")]) == 2
        bad = tmp_path / "bad.csv"
        bad.write_text("true_r,true_theta,est_r,est_theta\nx,y,z,w\n")
        assert main(["fit", "--samples", str(bad)]) == 2
        assert main(["fit", "--samples", str(bad), "--p", "1.5"]) == 2

    def test_verify(self, capsys):
        assert main(["verify", "--runs", "3", "--steps", "300"]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["lockstep"] == {"pass": 3, "fail": 0} and rep["ok"]

    def test_bad_config_file(self, tmp_path, capsys):
        p = tmp_path / "x.json"
        p.write_text("{")
        assert main(["simulate", "--config", str(p)]) == 2
        assert "not valid JSON" in capsys.readouterr().err
        assert main(["simulate", "--config", str(tmp_path / "none.json")]) == 2
        assert main(["simulate", "--seed", str(2 ** 64)]) == 2

    def test_module_entry_point(self, tmp_path):
        out = subprocess.run([sys.executable, "-m", "qformation", "bound", "--quiet"],
                             capture_output=True, text=True, cwd=tmp_path)
        assert out.returncode == 0 and out.stdout == ""
        bad = subprocess.run([sys.executable, "-m", "qformation", "nonsense"],
                             capture_output=True, text=True, cwd=tmp_path)
        assert bad.returncode == 2

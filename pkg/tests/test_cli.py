import json
import math
from pathlib import Path

import pytest

from hybridopt import cli


@pytest.fixture
def demo_files(tmp_path):
    model = tmp_path / "model.json"
    control = tmp_path / "control.json"
    cli.write_demo_config(model, control)
    return model, control


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return path


@pytest.fixture
def mean_reverting_model(tmp_path):
    return write_json(
        tmp_path / "ou.json",
        {
            "state_dim": 1,
            "regime_count": 1,
            "horizon": 1.0,
            "action_set": {"lower": [0.0], "upper": [1.0]},
            "truncation": {"lower": [-6.0], "upper": [6.0]},
            "drift": [["-x1"]],
            "diffusion": [[["1"]]],
            "rates": [[None]],
            "rate_bound": 0.0,
            "running_cost": "0",
            "terminal_cost": "0",
            "constants": {"lipschitz_drift_diffusion": 1.5, "lipschitz_rates": 1.0, "growth": 1.0},
            "starts": [{"x": [1.0], "i": 1}],
        },
    )


class TestValidate:
    def test_mean_reverting_passes(self, mean_reverting_model, capsys):
        code = cli.main(["validate", "--model", str(mean_reverting_model), "--samples", "300"])
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["pass"] is True

    def test_quadratic_drift_fails(self, tmp_path):
        model = write_json(
            tmp_path / "bad.json",
            {
                "state_dim": 1,
                "regime_count": 1,
                "horizon": 1.0,
                "action_set": {"lower": [0.0], "upper": [1.0]},
                "truncation": {"lower": [-10.0], "upper": [10.0]},
                "drift": [["x1*x1"]],
                "diffusion": [[["0"]]],
                "rates": [[None]],
                "rate_bound": 0.0,
                "running_cost": "0",
                "terminal_cost": "0",
                "constants": {"lipschitz_drift_diffusion": 1.0},
            },
        )
        assert cli.main(["validate", "--model", str(model), "--samples", "500"]) == 3

    def test_malformed_json_exits_2(self, tmp_path):
        broken = tmp_path / "broken.json"
        broken.write_text("{not json")
        assert cli.main(["validate", "--model", str(broken)]) == 2

    def test_bad_expression_exits_2(self, tmp_path):
        model = write_json(
            tmp_path / "expr.json",
            {
                "state_dim": 1,
                "regime_count": 1,
                "horizon": 1.0,
                "action_set": {"lower": [0.0], "upper": [1.0]},
                "truncation": {"lower": [-1.0], "upper": [1.0]},
                "drift": [["x1 +"]],
                "diffusion": [[["0"]]],
                "rates": [[None]],
                "rate_bound": 0.0,
                "running_cost": "0",
                "terminal_cost": "0",
            },
        )
        assert cli.main(["validate", "--model", str(model)]) == 2

    def test_missing_file_exits_2(self, tmp_path):
        assert cli.main(["validate", "--model", str(tmp_path / "nope.json")]) == 2


class TestSimulate:
    def test_constant_model_constant_columns(self, demo_files, tmp_path):
        model, control = demo_files
        out = tmp_path / "paths.csv"
        code = cli.main(
            ["simulate", "--model", str(model), "--control", str(control),
             "--out", str(out), "--paths", "3", "--dt", "0.25", "--seed", "1"]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# config_hash=")
        header = lines[1].split(",")
        assert header[:4] == ["path", "t", "x1", "regime"]
        # frozen dynamics under the zero-rate control: x stays 0, regime stays 1
        for row in lines[2:]:
            cells = row.split(",")
            assert cells[2] == "0.0"
            assert cells[3] == "1"

    def test_seed_repeat_byte_identical(self, demo_files, tmp_path):
        model, control = demo_files
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert cli.main(
                ["simulate", "--model", str(model), "--control", str(control),
                 "--out", str(out), "--paths", "8", "--dt", "0.05", "--seed", "7"]
            ) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_switching_visible_in_regime_column(self, tmp_path):
        model = write_json(
            tmp_path / "switchy.json",
            {
                "state_dim": 1,
                "regime_count": 2,
                "horizon": 1.0,
                "action_set": {"lower": [0.0], "upper": [1.0]},
                "truncation": {"lower": [-1.0], "upper": [1.0]},
                "drift": [["0"], ["0"]],
                "diffusion": [[["0"]], [["0"]]],
                "rates": [[None, "1"], ["0", None]],
                "rate_bound": 1.0,
                "running_cost": "i",
                "terminal_cost": "0",
                "starts": [{"x": [0.0], "i": 1}],
            },
        )
        control = write_json(
            tmp_path / "ctl.json",
            {"kind": "constant", "mu": {"atoms": [[0.5]], "weights": [1.0]},
             "nu": {"atoms": [[0.5]], "weights": [1.0]}},
        )
        out = tmp_path / "sw.csv"
        assert cli.main(
            ["simulate", "--model", str(model), "--control", str(control),
             "--out", str(out), "--paths", "200", "--dt", "0.01", "--seed", "3"]
        ) == 0
        regimes = [int(r.split(",")[3]) for r in out.read_text().splitlines()[2:]]
        switched = sum(r == 2 for r in regimes[100::101])  # terminal rows
        p = 1 - math.exp(-1)
        se = math.sqrt(p * (1 - p) / 200)
        assert abs(switched / 200 - p) <= 3 * se

    def test_json_output(self, demo_files, tmp_path):
        model, control = demo_files
        out = tmp_path / "paths.json"
        assert cli.main(
            ["simulate", "--model", str(model), "--control", str(control),
             "--out", str(out), "--paths", "2", "--dt", "0.25", "--seed", "1"]
        ) == 0
        doc = json.loads(out.read_text())
        assert len(doc["paths"]) == 2
        assert "config_hash" in doc


class TestEstimate:
    def test_regime_cost_estimate(self, demo_files, tmp_path, capsys):
        model, control = demo_files
        code = cli.main(
            ["estimate", "--model", str(model), "--control", str(control),
             "--paths", "64", "--dt", "0.05", "--seed", "2"]
        )
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        # the demo control suppresses switching: cost is exactly 1
        assert doc["mean"] == pytest.approx(1.0, abs=1e-12)
        assert doc["paths"] == 64


class TestSolve:
    def solve_args(self, model, out):
        return [
            "solve", "--model", str(model), "--out", str(out),
            "--grid-nt", "4", "--grid-nx", "9", "--quad-order", "3",
            "--mu-atoms", "1", "--mu-levels", "1", "--nu-atoms", "2", "--nu-levels", "1",
        ]

    def test_constant_terminal_value(self, tmp_path, capsys):
        model = write_json(
            tmp_path / "const.json",
            {
                "state_dim": 1,
                "regime_count": 1,
                "horizon": 1.0,
                "action_set": {"lower": [0.0], "upper": [1.0]},
                "truncation": {"lower": [-1.0], "upper": [1.0]},
                "drift": [["0"]],
                "diffusion": [[["1"]]],
                "rates": [[None]],
                "rate_bound": 0.0,
                "running_cost": "0",
                "terminal_cost": "2.5",
                "starts": [{"x": [0.0], "i": 1}],
            },
        )
        out = tmp_path / "vg.json"
        assert cli.main(self.solve_args(model, out)) == 0
        doc = json.loads(out.read_text())
        assert doc["start_values"][0]["value"] == pytest.approx(2.5, abs=1e-12)

    def test_regime_cost_value_and_hash_stability(self, demo_files, tmp_path):
        model, _ = demo_files
        a, b = tmp_path / "vg_a.json", tmp_path / "vg_b.json"
        for out in (a, b):
            assert cli.main(self.solve_args(model, out)) == 0
        assert a.read_bytes() == b.read_bytes()
        doc = json.loads(a.read_text())
        assert doc["start_values"][0]["value"] == pytest.approx(1.0, abs=1e-9)
        assert doc["schema_version"] == 1

    def test_capacity_exit(self, demo_files, tmp_path):
        model, _ = demo_files
        code = cli.main(
            ["solve", "--model", str(model), "--out", str(tmp_path / "x.json"),
             "--grid-nt", "4", "--grid-nx", "9",
             "--mu-atoms", "100", "--mu-levels", "100"]
        )
        assert code == 5

    def test_table_control_usable_for_simulation(self, demo_files, tmp_path):
        model, _ = demo_files
        artifact = tmp_path / "vg.json"
        assert cli.main(self.solve_args(model, artifact)) == 0
        table_control = write_json(
            tmp_path / "table.json", {"kind": "table", "artifact": str(artifact)}
        )
        out = tmp_path / "table_paths.csv"
        assert cli.main(
            ["simulate", "--model", str(model), "--control", str(table_control),
             "--out", str(out), "--paths", "4", "--dt", "0.25", "--seed", "5"]
        ) == 0
        regimes = [int(r.split(",")[3]) for r in out.read_text().splitlines()[2:]]
        assert set(regimes) == {1}  # optimal policy suppresses switching


class TestVerify:
    def test_subset_passes(self, tmp_path):
        out = tmp_path / "report.json"
        code = cli.main(["verify", "--check", "solver_oracle", "intervals", "--out", str(out)])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["pass"] is True
        assert {c["name"] for c in doc["checks"]} == {"solver_oracle", "intervals"}
        for c in doc["checks"]:
            assert set(c) >= {"name", "pass", "margin", "tolerance"}

    def test_tampered_tolerance_fails(self):
        code = cli.main(["verify", "--check", "solver_oracle", "--tolerance-scale", "0"])
        assert code == 6

    def test_empty_check_list_warns(self, capsys):
        assert cli.main(["verify", "--check"]) == 0
        assert "warning" in capsys.readouterr().err

    def test_unknown_check_exits_2(self):
        assert cli.main(["verify", "--check", "bogus"]) == 2

    def test_list(self, capsys):
        assert cli.main(["verify", "--list"]) == 0
        names = capsys.readouterr().out.split()
        assert "w1_metric" in names and "determinism" in names


class TestWorkersEnv:
    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("HYBRIDOPT_WORKERS", "3")
        assert cli._default_workers() == 3
        monkeypatch.setenv("HYBRIDOPT_WORKERS", "junk")
        assert cli._default_workers() >= 1


class TestPathDependentControlConfig:
    def test_load_and_simulate(self, tmp_path):
        model_path = write_json(
            tmp_path / "m.json",
            {
                "state_dim": 1,
                "regime_count": 1,
                "horizon": 1.0,
                "action_set": {"lower": [0.0], "upper": [1.0]},
                "truncation": {"lower": [-8.0], "upper": [8.0]},
                "drift": [["2*mu_m(1,0) - 1"]],
                "diffusion": [[["0"]]],
                "rates": [[None]],
                "rate_bound": 0.0,
                "running_cost": "0",
                "terminal_cost": "0",
                "starts": [{"x": [0.0], "i": 1}],
            },
        )
        control_path = write_json(
            tmp_path / "c.json",
            {
                "kind": "path_dependent",
                "window": 4,
                "statistic": "max",
                "coordinate": 0,
                "buckets": [0.45],
                "mu": {"candidates": [{"atoms": [[1.0]], "weights": [1.0]},
                                      {"atoms": [[0.0]], "weights": [1.0]}],
                       "map": [0, 1]},
                "nu": {"candidates": [{"atoms": [[0.5]], "weights": [1.0]}],
                       "map": [0, 0]},
            },
        )
        out = tmp_path / "pd.csv"
        code = cli.main(
            ["simulate", "--model", str(model_path), "--control", str(control_path),
             "--out", str(out), "--paths", "1", "--dt", "0.05", "--seed", "0"]
        )
        assert code == 0
        xs = [float(r.split(",")[2]) for r in out.read_text().splitlines()[2:]]
        # drift +1 until the running max crosses 0.45, then -1: x oscillates
        # around the threshold instead of growing
        assert max(xs) <= 0.55
        assert xs[1] > xs[0]


class TestEstimateAntithetic:
    def test_flag_round_trip(self, demo_files, capsys):
        model, control = demo_files
        code = cli.main(
            ["estimate", "--model", str(model), "--control", str(control),
             "--paths", "64", "--dt", "0.05", "--seed", "4", "--antithetic"]
        )
        assert code == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["mean"] == pytest.approx(1.0, abs=1e-12)


class TestSimulateHorizonFlag:
    def test_partial_horizon(self, demo_files, tmp_path):
        model, control = demo_files
        out = tmp_path / "short.csv"
        assert cli.main(
            ["simulate", "--model", str(model), "--control", str(control),
             "--out", str(out), "--paths", "1", "--dt", "0.05", "--horizon", "0.25"]
        ) == 0
        rows = out.read_text().splitlines()
        assert len(rows) == 2 + 6  # comment + header + six grid times

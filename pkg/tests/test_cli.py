import json
import math
import os

import pytest

from suspflow import ConfigInvalid, RateFit, parse_config
from suspflow.cli import ResultRow, main, write_csv
from suspflow.config import base_observable, build_box, suspension_observable
from suspflow.svgplot import emit_plot


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


BASE_CFG = {
    "experiment": "base-check",
    "seed": 3,
    "model": {"kind": "lorenz_quotient"},
    "n_points": 50,
    "n_iterates": 200,
    "average": {"n_orbits": 4, "orbit_length": 20000, "burn_in": 200},
}

ESCAPE_CFG = {
    "experiment": "escape",
    "seed": 7,
    "region": {"xhi": 5.0},
    "t_grid": [2, 4, 6],
    "n_samples": 800,
    "h": 0.002,
    "occupation_time": 500,
}


class TestParseConfig:
    def test_minimal_configs_accepted(self):
        assert parse_config(BASE_CFG).experiment == "base-check"
        assert parse_config(ESCAPE_CFG).seed == 7

    def test_experiment_required(self):
        with pytest.raises(ConfigInvalid):
            parse_config({"seed": 1})

    def test_unknown_top_level_key_named(self):
        cfg = dict(BASE_CFG, typo_key=1)
        with pytest.raises(ConfigInvalid, match="typo_key"):
            parse_config(cfg)

    def test_unknown_nested_key_named(self):
        cfg = dict(BASE_CFG, model={"kind": "lorenz_quotient", "alfa": 0.8})
        with pytest.raises(ConfigInvalid, match="model.alfa"):
            parse_config(cfg)

    def test_wrong_types_rejected(self):
        with pytest.raises(ConfigInvalid, match="seed"):
            parse_config(dict(BASE_CFG, seed="three"))
        with pytest.raises(ConfigInvalid, match="t_grid"):
            parse_config(dict(ESCAPE_CFG, t_grid="soon"))

    def test_bad_parameter_values_rejected(self):
        cfg = dict(BASE_CFG, model={"kind": "lorenz_quotient", "alpha": 2.0})
        with pytest.raises(ConfigInvalid):
            parse_config(cfg)

    def test_deviation_grid_must_increase(self):
        cfg = {"experiment": "deviation", "seed": 1, "system": "suspension",
               "model": {"kind": "lorenz_quotient"}, "psi": "x",
               "epsilon": 0.1, "t_grid": [100, 50], "n_samples": 2000}
        with pytest.raises(ConfigInvalid):
            parse_config(cfg)

    def test_system_specific_keys_enforced(self):
        cfg = {"experiment": "deviation", "seed": 1, "system": "suspension",
               "model": {"kind": "lorenz_quotient"}, "psi": "x",
               "epsilon": 0.1, "t_grid": [50, 100], "n_samples": 2000,
               "h": 0.001}
        with pytest.raises(ConfigInvalid, match="suspension"):
            parse_config(cfg)
        cfg2 = {"experiment": "deviation", "seed": 1, "system": "flow",
                "psi": "z", "epsilon": 3.0, "t_grid": [20, 40],
                "n_samples": 2000, "model": {"kind": "doubling"}}
        with pytest.raises(ConfigInvalid, match="flow"):
            parse_config(cfg2)

    def test_flow_psi_restricted_to_coordinates(self):
        cfg = {"experiment": "deviation", "seed": 1, "system": "flow",
               "psi": "cos_s", "epsilon": 3.0, "t_grid": [20, 40],
               "n_samples": 2000}
        with pytest.raises(ConfigInvalid, match="psi"):
            parse_config(cfg)

    def test_simulate_initial_length_checked(self):
        cfg = {"experiment": "simulate", "seed": 1, "system": "flow",
               "initial": [1.0, 2.0], "T": 1.0}
        with pytest.raises(ConfigInvalid, match="initial"):
            parse_config(cfg)

    def test_observable_codes(self):
        assert suspension_observable("x").fiber_integral is not None
        assert suspension_observable("cos_s").bound == 1.0
        with pytest.raises(ConfigInvalid):
            suspension_observable("tan_s")
        assert base_observable("x")(2.0) == 2.0
        with pytest.raises(ConfigInvalid):
            base_observable("sin")

    def test_box_overrides_partial(self):
        box = build_box({"xhi": 5.0})
        assert box.xhi == 5.0
        assert box.xlo == -30.0
        assert box.zhi == 60.0


class TestCsv:
    def test_seventeen_digit_round_trip(self, tmp_path):
        vals = [math.pi, 1.0 / 3.0, 2.0**-52, 23.550430571826297]
        rows = [ResultRow("t", "s", float(i), v) for i, v in enumerate(vals)]
        path = str(tmp_path / "r.csv")
        write_csv(rows, path)
        lines = open(path).read().splitlines()
        assert lines[0].startswith("experiment,series,param")
        for line, v in zip(lines[1:], vals):
            assert float(line.split(",")[3]) == v

    def test_empty_fields_for_missing_counts(self, tmp_path):
        path = str(tmp_path / "r.csv")
        write_csv([ResultRow("t", "s", 1.0, 2.0)], path)
        assert open(path).read().splitlines()[1].endswith(",,,")


class TestPlot:
    def _series(self):
        return [(10.0, 0.5, 0.05), (20.0, 0.25, 0.02), (40.0, 0.06, 0.01)]

    def test_svg_written_with_fit_line(self, tmp_path):
        fit = RateFit(slope=-0.05, intercept=0.0, r_squared=0.99,
                      slope_stderr=0.01, points_used=3)
        path = str(tmp_path / "p.svg")
        emit_plot(self._series(), fit, path, "demo")
        body = open(path).read()
        assert body.startswith("<svg")
        assert "polyline" in body
        assert "slope" in body

    def test_zero_values_skipped_on_log_axis(self, tmp_path):
        series = self._series() + [(80.0, 0.0, 0.0)]
        path = str(tmp_path / "p.svg")
        emit_plot(series, None, path, "demo")
        assert "<circle" in open(path).read()

    def test_too_few_points_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_plot([(10.0, 0.5, 0.1)], None, str(tmp_path / "p.svg"), "demo")

    def test_output_is_deterministic(self, tmp_path):
        p1, p2 = str(tmp_path / "a.svg"), str(tmp_path / "b.svg")
        emit_plot(self._series(), None, p1, "demo")
        emit_plot(self._series(), None, p2, "demo")
        assert open(p1).read() == open(p2).read()


class TestMain:
    def test_base_check_end_to_end(self, tmp_path):
        cfg = _write(tmp_path, "c.json", BASE_CFG)
        out = str(tmp_path / "out")
        assert main(["--config", cfg, "--out", out]) == 0
        rows = open(os.path.join(out, "results.csv")).read().splitlines()
        assert len(rows) >= 2
        summary = json.loads(open(os.path.join(out, "summary.json")).read())
        assert summary["experiment"] == "base-check"
        assert summary["effective_seed"] == 3
        assert "expansion" in summary["results"]

    def test_escape_with_plot(self, tmp_path):
        cfg = _write(tmp_path, "c.json", ESCAPE_CFG)
        out = str(tmp_path / "out")
        assert main(["--config", cfg, "--out", out, "--plot"]) == 0
        assert os.path.exists(os.path.join(out, "plot.svg"))
        summary = json.loads(open(os.path.join(out, "summary.json")).read())
        assert summary["results"]["fit"]["slope"] < 0.0

    def test_seed_override_recorded(self, tmp_path):
        cfg = _write(tmp_path, "c.json", BASE_CFG)
        out = str(tmp_path / "out")
        assert main(["--config", cfg, "--out", out, "--seed", "99"]) == 0
        summary = json.loads(open(os.path.join(out, "summary.json")).read())
        assert summary["effective_seed"] == 99

    def test_identical_output_across_thread_counts(self, tmp_path):
        cfg = _write(tmp_path, "c.json", ESCAPE_CFG)
        out1, out2 = str(tmp_path / "o1"), str(tmp_path / "o2")
        assert main(["--config", cfg, "--out", out1, "--threads", "1"]) == 0
        assert main(["--config", cfg, "--out", out2, "--threads", "4"]) == 0
        csv1 = open(os.path.join(out1, "results.csv"), "rb").read()
        csv2 = open(os.path.join(out2, "results.csv"), "rb").read()
        assert csv1 == csv2
        s1 = open(os.path.join(out1, "summary.json"), "rb").read()
        s2 = open(os.path.join(out2, "summary.json"), "rb").read()
        assert s1 == s2

    def test_invalid_config_exits_2(self, tmp_path, capsys):
        cfg = _write(tmp_path, "c.json", dict(BASE_CFG, oops=1))
        assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 2
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "ConfigInvalid"
        assert "oops" in err["message"]

    def test_malformed_json_exits_2(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{nope")
        assert main(["--config", str(p), "--out", str(tmp_path / "o")]) == 2

    def test_missing_file_exits_4(self, tmp_path):
        missing = str(tmp_path / "absent.json")
        assert main(["--config", missing, "--out", str(tmp_path / "o")]) == 4

    def test_two_point_grid_exits_3(self, tmp_path, capsys):
        cfg = _write(tmp_path, "c.json",
                     dict(ESCAPE_CFG, t_grid=[2, 4], check_occupation=False))
        assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 3
        err = json.loads(capsys.readouterr().err)
        assert err["error"] == "InsufficientData"

    def test_occupation_guard_refuses_invariant_region(self, tmp_path, capsys):
        cfg = _write(tmp_path, "c.json",
                     {"experiment": "escape", "seed": 7, "t_grid": [2, 4, 6],
                      "n_samples": 100, "h": 0.002, "occupation_time": 300})
        assert main(["--config", cfg, "--out", str(tmp_path / "o")]) == 2
        err = json.loads(capsys.readouterr().err)
        assert "occupation" in err["message"]

    def test_simulate_flow_rows(self, tmp_path):
        cfg = _write(tmp_path, "c.json",
                     {"experiment": "simulate", "seed": 1, "system": "flow",
                      "initial": [1.0, 1.0, 20.0], "T": 2.0,
                      "n_snapshots": 5, "h": 0.002})
        out = str(tmp_path / "out")
        assert main(["--config", cfg, "--out", out]) == 0
        rows = open(os.path.join(out, "results.csv")).read().splitlines()
        assert len(rows) == 1 + 3 * 5

    def test_simulate_suspension_rows(self, tmp_path):
        cfg = _write(tmp_path, "c.json",
                     {"experiment": "simulate", "seed": 1,
                      "system": "suspension",
                      "model": {"kind": "lorenz_quotient"},
                      "initial": [0.3, 0.0], "T": 10.0, "n_snapshots": 4})
        out = str(tmp_path / "out")
        assert main(["--config", cfg, "--out", out]) == 0
        rows = open(os.path.join(out, "results.csv")).read().splitlines()
        assert len(rows) == 1 + 2 * 4

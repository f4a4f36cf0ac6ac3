import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from riskplan.config import (
    ConfigError,
    apply_overrides,
    parameter_table,
    parse_config,
    parse_dict,
)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def minimal_scenario():
    return {
        "name": "minimal",
        "window": {"x_min": -10.0, "x_max": 10.0, "y_min": -10.0, "y_max": 10.0},
        "ego": {
            "start": {"x": 0.0, "y": 0.0, "theta": 0.0},
            "route": [[-5.0, 0.0], [5.0, 0.0]],
        },
        "map": {},
        "hidden_classes": [{"id": 0, "name": "vehicle", "v_max": 4.44, "element": "semicircle"}],
        "areas": [
            {"id": 0, "class": 0, "segments": [
                {"vertices": [[-5, 1], [5, 1], [5, 3], [-5, 3]], "heading": 0.0}]},
        ],
        "agents": [],
    }


class TestDefaults:
    def test_simulation_parameter_defaults_applied(self):
        cfg = parse_dict(minimal_scenario())
        d = cfg.data
        assert d["timing"]["t_s"] == 0.4
        assert d["planner"]["horizon"] == 10
        assert d["planner"]["input_weights"] == [0.5, 1000.0]
        assert d["planner"]["stage_weights"] == [0.0, 0.0, 0.0, 0.1, 0.1]
        assert d["planner"]["terminal_weights"] == [20.0, 20.0, 1.0, 0.1, 0.1]
        assert d["planner"]["bounds"]["a"] == [-5.0, 2.0]
        assert d["planner"]["bounds"]["v"] == [0.0, 5.0]
        assert d["planner"]["bounds"]["delta"] == [-1.5, 1.5]
        assert d["planner"]["bounds"]["omega"] == [-1.5, 1.5]
        assert d["risk"]["objects"]["amplitude"] == 1300.0
        assert d["risk"]["infrastructure"]["amplitude"] == 200.0
        assert d["risk"]["hidden"]["amplitude"] == 110.0
        assert d["risk"]["objects"]["sigma"] == 0.36
        assert d["risk"]["infrastructure"]["sigma"] == 0.25
        assert d["risk"]["hidden"]["sigma"] == 0.2
        assert all(d["risk"][k]["resolution"] == 0.2 for k in ("objects", "infrastructure", "hidden"))
        assert d["sensor"]["radius"] == 100.0

    def test_parameter_table_lists_all_values(self):
        cfg = parse_dict(minimal_scenario())
        table = parameter_table(cfg)
        for token in ("0.4", "10", "[0.5, 1000.0]", "[-5.0, 2.0]", "1300.0", "0.36", "100.0"):
            assert token in table

    def test_override_semantics(self):
        cfg = parse_dict(minimal_scenario())
        cfg2 = apply_overrides(cfg, {"v_bounds": "[0, 3.0]"})
        assert cfg2.data["planner"]["bounds"]["v"] == [0, 3.0]
        # the rest stays at defaults
        assert cfg2.data["planner"]["bounds"]["a"] == [-5.0, 2.0]

    def test_alias_and_dotted_overrides(self):
        cfg = parse_dict(minimal_scenario())
        cfg2 = apply_overrides(cfg, {"a_h": "55", "timing.duration": "3.2"})
        assert cfg2.data["risk"]["hidden"]["amplitude"] == 55
        assert cfg2.data["timing"]["duration"] == 3.2

    def test_unknown_override_rejected(self):
        cfg = parse_dict(minimal_scenario())
        with pytest.raises(ConfigError, match="unknown parameter"):
            apply_overrides(cfg, {"nonsense": "1"})


class TestValidation:
    def test_unknown_key_rejected_with_path(self):
        bad = minimal_scenario()
        bad["plannner"] = {}
        with pytest.raises(ConfigError) as e:
            parse_dict(bad)
        assert "plannner" in str(e.value)

    def test_nested_unknown_key_rejected(self):
        bad = minimal_scenario()
        bad["ego"]["wheel_base"] = 2.0
        with pytest.raises(ConfigError) as e:
            parse_dict(bad)
        assert "wheel_base" in str(e.value)

    def test_missing_required_field_names_it(self):
        bad = minimal_scenario()
        del bad["ego"]["route"]
        with pytest.raises(ConfigError, match="route"):
            parse_dict(bad)

    def test_direction_constrained_area_requires_heading(self):
        bad = minimal_scenario()
        bad["areas"][0]["segments"][0].pop("heading")
        with pytest.raises(ConfigError, match="heading"):
            parse_dict(bad)

    def test_unknown_area_class_rejected(self):
        bad = minimal_scenario()
        bad["areas"][0]["class"] = 7
        with pytest.raises(ConfigError, match="unknown hidden class"):
            parse_dict(bad)

    def test_inverted_bounds_rejected(self):
        bad = minimal_scenario()
        bad["planner"] = {"bounds": {"v": [5.0, 0.0]}}
        with pytest.raises(ConfigError):
            parse_dict(bad)

    def test_malformed_json_file_reports_path(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            parse_config(p)


class TestRoundTrip:
    def test_parse_serialize_parse_identical(self):
        cfg = parse_dict(minimal_scenario())
        again = parse_dict(json.loads(cfg.to_json()))
        assert cfg.data == again.data

    @pytest.mark.parametrize("name", ["s1", "s2", "s3"])
    def test_shipped_scenarios_round_trip(self, name):
        cfg = parse_config(SCENARIOS / f"{name}.json")
        again = parse_dict(json.loads(cfg.to_json()))
        assert cfg.data == again.data


class TestCli:
    def _run(self, *args):
        return subprocess.run(
            [sys.executable, "-m", "riskplan.cli", *args],
            capture_output=True,
            text=True,
            timeout=400,
        )

    def test_run_writes_outputs_and_prints_parameters(self, tmp_path):
        scen = tmp_path / "tiny.json"
        data = minimal_scenario()
        data["timing"] = {"duration": 1.2}
        scen.write_text(json.dumps(data))
        out = tmp_path / "out"
        proc = self._run("run", "--scenario", str(scen), "--occlusion", "on", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        assert (out / "steps.csv").exists()
        assert (out / "solves.csv").exists()
        assert (out / "summary.txt").exists()
        # run header carries the simulation parameter table
        assert "1300.0" in proc.stdout and "[0.5, 1000.0]" in proc.stdout
        header = (out / "steps.csv").read_text().splitlines()[0]
        assert header.startswith("step,time,ego_x")

    def test_set_override_changes_run(self, tmp_path):
        scen = tmp_path / "tiny.json"
        data = minimal_scenario()
        data["timing"] = {"duration": 0.8}
        scen.write_text(json.dumps(data))
        out = tmp_path / "out"
        proc = self._run(
            "run", "--scenario", str(scen), "--out", str(out), "--set", "N=4", "--set", "t_s=0.2"
        )
        assert proc.returncode == 0, proc.stderr
        cfg_out = json.loads((out / "config.json").read_text())
        assert cfg_out["planner"]["horizon"] == 4
        assert cfg_out["timing"]["t_s"] == 0.2

    def test_dump_grids_writes_pgm(self, tmp_path):
        scen = tmp_path / "tiny.json"
        data = minimal_scenario()
        data["timing"] = {"duration": 0.8}
        scen.write_text(json.dumps(data))
        out = tmp_path / "out"
        proc = self._run("run", "--scenario", str(scen), "--out", str(out), "--dump-grids")
        assert proc.returncode == 0, proc.stderr
        pgms = list((out / "grids").glob("*.pgm"))
        assert pgms
        assert pgms[0].read_text().startswith("P2\n")

    def test_missing_scenario_exits_3(self, tmp_path):
        proc = self._run("run", "--scenario", str(tmp_path / "nope.json"))
        assert proc.returncode == 3

    def test_bad_override_exits_3(self, tmp_path):
        scen = tmp_path / "tiny.json"
        scen.write_text(json.dumps(minimal_scenario()))
        proc = self._run("run", "--scenario", str(scen), "--set", "bogus=1")
        assert proc.returncode == 3
        assert "unknown parameter" in proc.stderr

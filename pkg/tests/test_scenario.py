import copy
import csv
import json

import pytest
import yaml

from c1lab import __version__
from c1lab.cli import main
from c1lab.errors import InvalidInputError
from c1lab.scenario import (BUILTIN_SCENARIOS, ScenarioConfig, build_metric, list_scenarios,
                            load_config, run_scenario, validate)

INLINE = {
    "id": "inline-flat",
    "metric": {"coords": ["t", "x", "y", "z"], "lower": [-4, -4, -4, -4], "upper": [4, 4, 4, 4],
               "regularity": "smooth", "params": {"a": 1.0},
               "components": {"g00": "-a", "g11": "1", "g22": "1", "g33": "1"}},
    "surface": {"kind": "sphere", "radius": 1.0},
    "checks": ["trapped", "focusing"],
    "b": 1.5,
    "b_grid": [0.5, 1.0, 1.5],
    "expect": {"trapped": True},
}


def _errors(data):
    return {d.field for d in validate(data) if d.level == "error"}


class TestConfig:
    def test_builtins_listed(self):
        names = [n for n, _ in list_scenarios()]
        assert len(names) >= 3
        assert {"minkowski-sphere", "pg-trapped", "c1-model"} <= set(names)

    @pytest.mark.parametrize("name", sorted(BUILTIN_SCENARIOS))
    def test_builtins_validate_cleanly(self, name):
        assert not [d for d in validate(BUILTIN_SCENARIOS[name]) if d.level == "error"]

    def test_increasing_eps_names_field(self):
        data = copy.deepcopy(BUILTIN_SCENARIOS["c1-model"])
        data["eps"] = [0.025, 0.05, 0.1]
        assert "eps" in _errors(data)
        with pytest.raises(InvalidInputError, match="eps"):
            ScenarioConfig.from_dict(data)

    @pytest.mark.parametrize("patch,field", [
        ({"bogus": 1}, "bogus"),
        ({"delta": 1.5}, "delta"),
        ({"seed": -1}, "seed"),
        ({"checks": ["trapped", "nope"]}, "checks"),
        ({"metric": {"name": "unknown"}}, "metric.name"),
        ({"surface": {"kind": "sphere", "radius": -1}}, "surface.radius"),
    ])
    def test_field_errors(self, patch, field):
        data = copy.deepcopy(BUILTIN_SCENARIOS["minkowski-sphere"])
        data.update(patch)
        assert field in _errors(data)

    def test_bad_expression(self):
        data = copy.deepcopy(INLINE)
        data["metric"]["components"]["g11"] = "1 + q"
        assert "metric.components.g11" in _errors(data)
        data["metric"]["components"]["g11"] = "__import__('os')"
        assert "metric.components.g11" in _errors(data)

    def test_small_b_warns(self):
        data = copy.deepcopy(BUILTIN_SCENARIOS["minkowski-sphere"])
        data["b"] = 1.5
        diags = validate(data)
        assert any(d.level == "warning" and d.field == "b" for d in diags)
        assert not [d for d in diags if d.level == "error"]

    def test_yaml_roundtrip(self, tmp_path):
        p = tmp_path / "s.yaml"
        p.write_text(yaml.safe_dump(INLINE))
        assert load_config(str(p)) == INLINE
        assert load_config("pg-trapped")["id"] == "pg-trapped"

    def test_inline_metric(self):
        g = build_metric(ScenarioConfig.from_dict(INLINE)).metric([[0.0, 0.5, 0.1, 0.2]])
        assert g[0, 0, 0] == -1.0 and g[0, 1, 1] == 1.0 and g[0, 0, 1] == 0.0


class TestRun:
    def test_inline_run(self, tmp_path):
        res = run_scenario(INLINE, out_dir=tmp_path, seed=3)
        assert res.exit_code == 0 and res.summary["passed"]
        s = json.loads((tmp_path / "summary.json").read_text())
        assert s["scenario"] == "inline-flat" and s["seed"] == 3
        assert s["version"] == __version__

    def test_deterministic(self, tmp_path):
        a = run_scenario(INLINE, out_dir=tmp_path / "a", seed=11)
        b = run_scenario(INLINE, out_dir=tmp_path / "b", seed=11)
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
        assert a.summary == b.summary

    def test_failed_expectation_exits_1(self, tmp_path):
        data = copy.deepcopy(INLINE)
        data["expect"] = {"trapped": False}
        assert run_scenario(data, out_dir=tmp_path).exit_code == 1

    def test_module_error_writes_error_json(self, tmp_path):
        data = copy.deepcopy(INLINE)
        data["metric"]["components"]["g00"] = "1"
        res = run_scenario(data, out_dir=tmp_path)
        assert res.exit_code == 2
        err = json.loads((tmp_path / "error.json").read_text())
        assert err["error"] and err["message"]

    def test_rows_carry_scenario_and_version(self, tmp_path):
        res = run_scenario("c1-model", out_dir=tmp_path)
        assert res.exit_code == 0
        csvs = list(tmp_path.glob("*.csv"))
        assert csvs
        for p in csvs:
            rows = list(csv.DictReader(p.open()))
            assert rows and all(r["scenario"] == "c1-model" and r["version"] == __version__
                                for r in rows)


class TestCli:
    def test_list(self, capsys):
        assert main(["list"]) == 0
        assert len(capsys.readouterr().out.strip().splitlines()) >= 3

    def test_validate(self, tmp_path, capsys):
        assert main(["validate", "c1-model"]) == 0
        bad = dict(BUILTIN_SCENARIOS["c1-model"], eps=[0.1, 0.2])
        p = tmp_path / "bad.yaml"
        p.write_text(yaml.safe_dump(bad))
        assert main(["validate", str(p)]) == 2
        assert "eps" in capsys.readouterr().out

    def test_run_and_exit_codes(self, tmp_path, capsys):
        p = tmp_path / "s.yaml"
        p.write_text(yaml.safe_dump(INLINE))
        assert main(["run", str(p), "--out", str(tmp_path / "o"), "--seed", "5"]) == 0
        out = capsys.readouterr().out
        assert "PASS trapped_verdict" in out and "verdict:" in out
        assert main(["run", str(tmp_path / "missing.yaml")]) == 2
        assert main(["run", str(p), "--seed", str(2**64)]) == 2
        assert main(["run", str(p), "--grid", "2"]) == 2

import csv
import json

import pytest

from tndp.cli import BUS_COST, main, parse_alphas, parse_seeds


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parse_seeds_and_alphas():
    assert parse_seeds("0-3") == [0, 1, 2, 3]
    assert parse_seeds("1,5,7") == [1, 5, 7]
    assert parse_seeds([2, 4]) == [2, 4]
    assert len(parse_alphas("0:1:0.1")) == 11
    assert parse_alphas("0.2,0.8") == [0.2, 0.8]
    with pytest.raises(ValueError):
        parse_alphas("1.5")


def test_construct_then_eval_round_trip(tmp_path, capsys):
    out = tmp_path / "lc"
    code = main(["construct", "--preset", "mandl", "--seeds", "0", "--lc-n", "100",
                 "--out-dir", str(out)])
    assert code == 0
    run = out / "alpha1.00_seed0"
    recorded = json.loads((run / "result.json").read_text())
    assert recorded["spec"]["lc_n"] == 100
    assert recorded["result"]["cc"] == 0.0
    assert {"d0", "d1", "d2", "dun"} <= set(recorded["result"])
    capsys.readouterr()
    assert main(["eval", "--preset", "mandl", "--network", str(run / "network.json")]) == 0
    evaluated = json.loads(capsys.readouterr().out)
    for key in ("cp_minutes", "co_minutes", "total", "d0", "d1", "d2", "dun", "cc"):
        assert evaluated[key] == recorded["result"][key]


def test_evolve_writes_history_and_table(tmp_path):
    out = tmp_path / "ea"
    code = main(["evolve", "--preset", "mandl", "--seeds", "0-1", "--iters", "3",
                 "--variant", "combine", "--out-dir", str(out)])
    assert code == 0
    hist = read_rows(out / "alpha1.00_seed1" / "history.csv")
    assert len(hist) == 4 and "best_cp_minutes" in hist[0]
    rows = read_rows(out / "runs.csv")
    assert [r["kind"] for r in rows] == ["run", "run", "aggregate"]
    assert json.loads((out / "spec.json").read_text())["variant"] == "combine"


def test_sweep_grid_and_aggregates(tmp_path):
    out = tmp_path / "sw"
    code = main(["sweep", "--preset", "mandl", "--alpha", "0,1", "--seeds", "0-1",
                 "--algorithm", "construct", "--lc-n", "5", "--out-dir", str(out)])
    assert code in (0, 2)
    rows = read_rows(out / "sweep.csv")
    runs = [r for r in rows if r["kind"] == "run"]
    aggs = [r for r in rows if r["kind"] == "aggregate"]
    assert len(runs) == 4 and len(aggs) == 2
    for agg in aggs:
        vals = [float(r["cp_minutes"]) for r in runs if r["alpha"] == agg["alpha"]]
        assert float(agg["cp_minutes_mean"]) == pytest.approx(sum(vals) / 2)


def test_spec_file_and_headway_report(tmp_path, capsys):
    out = tmp_path / "s"
    spec = {"preset": "mandl", "seeds": [3], "lc_n": 5, "out_dir": str(out),
            "headway_min": 15, "double_co": True}
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    code = main(["construct", "--spec", str(tmp_path / "spec.json")])
    assert code in (0, 2)
    rep = json.loads((out / "alpha1.00_seed3" / "result.json").read_text())["result"]
    assert rep["fleet_size"] == pytest.approx(rep["co_minutes"] / 15)
    assert rep["operating_cost"] == pytest.approx(BUS_COST * rep["co_minutes"] / 15)


def test_headway_formula_example():
    # 23954 minutes of route time at a 15 minute headway
    assert BUS_COST * 23954 / 15 == pytest.approx(319387, abs=1)


def test_eval_empty_network_is_infeasible(tmp_path, capsys):
    (tmp_path / "n.json").write_text(json.dumps({"routes": []}))
    assert main(["eval", "--preset", "mandl", "--network", str(tmp_path / "n.json")]) == 2
    rep = json.loads(capsys.readouterr().out)
    assert not rep["constraints"]["route_count_ok"]


def test_eval_bad_route_names_index(tmp_path, capsys):
    (tmp_path / "n.json").write_text(json.dumps({"routes": [[0, 1], [0, 5]]}))
    assert main(["eval", "--preset", "mandl", "--network", str(tmp_path / "n.json")]) == 1
    assert "route 1" in capsys.readouterr().err


def test_gen_city_and_custom_city(tmp_path):
    city = tmp_path / "c.json"
    assert main(["gen-city", "--n", "12", "--process", "4grid", "--out", str(city)]) == 0
    code = main(["construct", "--city", str(city), "--routes", "3", "--min-stops", "2",
                 "--max-stops", "6", "--lc-n", "3", "--out-dir", str(tmp_path / "o")])
    assert code in (0, 2)
    assert main(["construct", "--city", str(city), "--out-dir", str(tmp_path / "o")]) == 1


def test_errors_exit_one(tmp_path):
    assert main(["construct", "--preset", "mumford3", "--data-dir", str(tmp_path),
                 "--out-dir", str(tmp_path / "o")]) == 1
    assert main(["construct", "--out-dir", str(tmp_path)]) == 1

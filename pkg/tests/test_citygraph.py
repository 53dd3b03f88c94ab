import json

import numpy as np
import pytest

from conftest import chain_city
from tndp import (
    PRESETS,
    CityGraph,
    ProblemParams,
    SyntheticCityConfig,
    enforce_symmetry,
    generate_city,
    load_city,
    load_preset,
)
from tndp.citygraph import preset_available
from tndp.validation import CityFormatError, CityValidationError, GenerationError


def write_matrix(path, rows):
    path.write_text("\n".join(" ".join(str(x) for x in r) for r in rows))


# -- Mandl data
def test_mandl_matches_published_statistics(mandl):
    city, params = mandl
    assert city.n == 15
    assert city.n_edges == 20
    assert city.total_demand == 15570
    assert city.shortest_paths.max_time == 33 * 60
    assert (params.n_routes, params.min_stops, params.max_stops) == (6, 2, 8)


def test_mandl_edge_times_in_seconds(mandl):
    city, _ = mandl
    # nodes 1 and 2 (1-based) are 8 minutes apart
    assert city.edge_times[0, 1] == 480.0
    assert city.neighbors(0) == (1,)


def test_preset_table_matches_benchmark_sizes():
    assert {k: (p.n, p.n_routes, p.min_stops, p.max_stops) for k, p in PRESETS.items()} == {
        "mandl": (15, 6, 2, 8),
        "mumford0": (30, 12, 2, 15),
        "mumford1": (70, 15, 10, 30),
        "mumford2": (110, 56, 10, 22),
        "mumford3": (127, 60, 12, 25),
    }


def test_missing_preset_data_raises(tmp_path):
    assert not preset_available("mumford0", tmp_path)
    with pytest.raises(FileNotFoundError, match="Mumford0TravelTimes.txt"):
        load_preset("mumford0", tmp_path)
    with pytest.raises(KeyError):
        load_preset("atlantis")


def test_preset_overrides(mandl):
    _, params = load_preset("mandl", alpha=0.3)
    assert params.alpha == 0.3 and params.n_routes == 6


# -- file loading
def test_load_city_scales_minutes_and_reads_inf(tmp_path):
    write_matrix(tmp_path / "t.txt", [[0, 2, "Inf"], [2, 0, 3], ["Inf", 3, 0]])
    write_matrix(tmp_path / "d.txt", [[0, 5, 1], [5, 0, 0], [1, 0, 0]])
    city = load_city(tmp_path / "t.txt", tmp_path / "d.txt")
    assert city.edge_times[0, 1] == 120.0
    assert not city.has_edge(0, 2)
    assert city.shortest_paths.times[0, 2] == 300.0


def test_load_city_symmetrises_with_max(tmp_path):
    write_matrix(tmp_path / "t.txt", [[0, 2], [4, 0]])
    write_matrix(tmp_path / "d.txt", [[0, 1], [1, 0]])
    city = load_city(tmp_path / "t.txt", tmp_path / "d.txt", time_scale=1.0)
    assert city.edge_times[0, 1] == city.edge_times[1, 0] == 4.0


def test_enforce_symmetry_takes_slower_direction():
    m = np.array([[0.0, 3.0], [5.0, 0.0]])
    assert np.array_equal(enforce_symmetry(m), [[0, 5], [5, 0]])


def test_load_city_rejects_ragged_and_mismatched(tmp_path):
    write_matrix(tmp_path / "t.txt", [[0, 2], [2, 0, 1]])
    write_matrix(tmp_path / "d.txt", [[0, 1], [1, 0]])
    with pytest.raises(CityFormatError):
        load_city(tmp_path / "t.txt", tmp_path / "d.txt")
    write_matrix(tmp_path / "t.txt", [[0, 2, 1], [2, 0, 1], [1, 1, 0]])
    with pytest.raises(CityFormatError):
        load_city(tmp_path / "t.txt", tmp_path / "d.txt")
    write_matrix(tmp_path / "t.txt", [[0, "x"], [2, 0]])
    with pytest.raises(CityFormatError):
        load_city(tmp_path / "t.txt", tmp_path / "d.txt")


# -- CityGraph invariants
def test_disconnected_city_rejected():
    times = np.full((3, 3), np.inf)
    np.fill_diagonal(times, 0)
    times[0, 1] = times[1, 0] = 1.0
    with pytest.raises(CityValidationError, match="not connected"):
        CityGraph(times, np.zeros((3, 3)))


@pytest.mark.parametrize("bad", ["asym_demand", "neg_time", "diag_demand"])
def test_invalid_arrays_rejected(bad):
    city = chain_city(3)
    times, demand = city.edge_times.copy(), city.demand.copy()
    if bad == "asym_demand":
        demand[0, 1] = 7
    elif bad == "neg_time":
        times[0, 1] = times[1, 0] = -1
    else:
        demand[1, 1] = 3
    with pytest.raises(CityValidationError):
        CityGraph(times, demand)


def test_city_arrays_are_read_only(chain4):
    with pytest.raises(ValueError):
        chain4.edge_times[0, 1] = 5


def test_city_json_round_trip(tmp_path, mandl):
    city, _ = mandl
    city.to_json(tmp_path / "c.json")
    again = CityGraph.from_json(tmp_path / "c.json")
    assert np.array_equal(again.edge_times, city.edge_times)
    assert np.array_equal(again.demand, city.demand)
    data = json.loads((tmp_path / "c.json").read_text())
    assert data["n"] == 15 and len(data["edges"]) == 20


# -- shortest paths
def test_shortest_path_table_basic(chain4):
    sp = chain4.shortest_paths
    assert sp.path(0, 3) == (0, 1, 2, 3)
    assert sp.path(3, 0) == (3, 2, 1, 0)
    assert sp.lengths[0, 3] == 4
    assert sp.times[0, 3] == 180.0
    assert sp.member[0 * 4 + 2].tolist() == [True, True, True, False]


def test_shortest_paths_reverse_and_are_tight(mandl):
    city, _ = mandl
    sp = city.shortest_paths
    for i in range(city.n):
        for j in range(city.n):
            p = sp.path(i, j)
            assert sp.path(j, i) == p[::-1]
            assert p[0] == i and p[-1] == j
            t = sum(city.edge_times[a, b] for a, b in zip(p, p[1:]))
            assert t == pytest.approx(sp.times[i, j])


def test_tie_break_prefers_lower_index():
    # square 0-1-3, 0-2-3 with equal times: both routes to 3 tie
    times = np.full((4, 4), np.inf)
    np.fill_diagonal(times, 0)
    for a, b in [(0, 1), (1, 3), (0, 2), (2, 3)]:
        times[a, b] = times[b, a] = 10.0
    city = CityGraph(times, np.zeros((4, 4)))
    assert city.shortest_paths.path(0, 3) == (0, 1, 3)


def test_unordered_pairs(chain4):
    pairs = chain4.shortest_paths.unordered_pairs(3)
    assert sorted(map(tuple, pairs.tolist())) == [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]


# -- params
def test_problem_params_validation(chain4):
    with pytest.raises(ValueError):
        ProblemParams(n_routes=0, min_stops=2, max_stops=3)
    with pytest.raises(ValueError):
        ProblemParams(n_routes=1, min_stops=4, max_stops=3)
    with pytest.raises(ValueError):
        ProblemParams(n_routes=1, min_stops=2, max_stops=3, alpha=1.5)
    with pytest.raises(ValueError):
        ProblemParams(n_routes=1, min_stops=2, max_stops=9).check_city(chain4)


# -- synthetic cities
@pytest.mark.parametrize("process", ["4nn", "4grid", "8grid", "voronoi"])
def test_generate_city_processes(process):
    city = generate_city(SyntheticCityConfig(n=20, process=process), seed=1)
    assert abs(city.n - 20) <= (3 if process == "voronoi" else 0)
    d = city.demand[~np.eye(city.n, dtype=bool)]
    assert d.min() >= 60 and d.max() <= 800
    assert np.array_equal(city.demand, city.demand.T)


def test_generate_city_is_seeded():
    a = generate_city(SyntheticCityConfig(n=20), seed=7)
    b = generate_city(SyntheticCityConfig(n=20), seed=7)
    assert np.array_equal(a.edge_times, b.edge_times)
    assert np.array_equal(a.demand, b.demand)


def test_grid_drive_times_from_speed():
    city = generate_city(SyntheticCityConfig(n=4, process="4grid", rho=0.0, area_side=300.0,
                                             speed=15.0), seed=0)
    # 2x2 grid with 300 m spacing at 15 m/s
    assert sorted(t for _, _, t in city.street_edges) == pytest.approx([20.0] * 4)


def test_generation_gives_up():
    with pytest.raises(GenerationError):
        generate_city(SyntheticCityConfig(n=30, process="4grid", rho=0.95), seed=0)


def test_config_validation():
    with pytest.raises(ValueError):
        SyntheticCityConfig(process="hex")
    with pytest.raises(ValueError):
        SyntheticCityConfig(rho=1.0)

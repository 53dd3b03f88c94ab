"""City instances: street graph, demand, shortest paths, and synthetic generation."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial import Voronoi, cKDTree

from .validation import (
    CityFormatError,
    CityValidationError,
    GenerationError,
    check_random_state,
)

PathLike = Union[str, Path]

# relative tolerance used when deciding whether an edge lies on a shortest path
_TIGHT_RTOL = 1e-9

SYNTHETIC_PROCESSES = ("4nn", "4grid", "8grid", "voronoi")
MAX_REGENERATIONS = 1000


@dataclass(frozen=True)
class ProblemParams:
    """Per-problem constants of the cost function and the route constraints.

    Times are in seconds.  ``n_routes``, ``min_stops`` and ``max_stops`` are the
    route count and per-route stop bounds; ``alpha`` trades passenger cost
    (``alpha=1``) against operator cost (``alpha=0``) and ``beta`` weights the
    constraint-violation term.
    """

    n_routes: int
    min_stops: int
    max_stops: int
    transfer_penalty: float = 300.0
    alpha: float = 1.0
    beta: float = 5.0

    def __post_init__(self):
        if self.n_routes < 1:
            raise ValueError(f"n_routes must be >= 1, got {self.n_routes}")
        if not 2 <= self.min_stops <= self.max_stops:
            raise ValueError(
                f"need 2 <= min_stops <= max_stops, got {self.min_stops}, {self.max_stops}"
            )
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.transfer_penalty < 0:
            raise ValueError("transfer_penalty must be non-negative")

    def replace(self, **changes) -> "ProblemParams":
        return dataclasses.replace(self, **changes)

    def check_city(self, city: "CityGraph") -> None:
        if self.max_stops > city.n:
            raise ValueError(f"max_stops={self.max_stops} exceeds node count {city.n}")


@dataclass(frozen=True, eq=False)
class CityGraph:
    """An immutable city instance.

    ``edge_times`` is an n x n matrix holding the street drive time (seconds)
    for each street edge, ``inf`` where no edge exists and 0 on the diagonal.
    ``demand`` is the symmetric origin-destination trip matrix.  ``coords`` are
    node positions in meters, or None when unknown.
    """

    edge_times: np.ndarray
    demand: np.ndarray
    coords: Optional[np.ndarray] = None
    name: str = ""
    _neighbors: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        et = np.array(self.edge_times, dtype=float)
        dem = np.array(self.demand, dtype=float)
        np.fill_diagonal(et, 0.0)
        et.setflags(write=False)
        dem.setflags(write=False)
        object.__setattr__(self, "edge_times", et)
        object.__setattr__(self, "demand", dem)
        if self.coords is not None:
            xy = np.array(self.coords, dtype=float).reshape(-1, 2)
            xy.setflags(write=False)
            object.__setattr__(self, "coords", xy)
        _validate_city_arrays(et, dem, self.coords)
        adj = np.isfinite(et)
        np.fill_diagonal(adj, False)
        nbrs = tuple(tuple(int(j) for j in np.flatnonzero(adj[i])) for i in range(len(et)))
        object.__setattr__(self, "_neighbors", nbrs)

    @property
    def n(self) -> int:
        return self.edge_times.shape[0]

    @property
    def street_edges(self) -> list[tuple[int, int, float]]:
        """Each undirected street edge once, as ``(i, j, tau)`` with ``i < j``."""
        ii, jj = np.nonzero(np.triu(self.adjacency, k=1))
        return [(int(i), int(j), float(self.edge_times[i, j])) for i, j in zip(ii, jj)]

    @property
    def n_edges(self) -> int:
        return len(self.street_edges)

    @cached_property
    def adjacency(self) -> np.ndarray:
        adj = np.isfinite(self.edge_times)
        np.fill_diagonal(adj, False)
        adj.setflags(write=False)
        return adj

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._neighbors[i]

    def has_edge(self, i: int, j: int) -> bool:
        return i != j and math.isfinite(self.edge_times[i, j])

    @cached_property
    def shortest_paths(self) -> "ShortestPathTable":
        return build_shortest_paths(self)

    @cached_property
    def total_demand(self) -> float:
        return float(self.demand.sum())

    # ------------------------------------------------------------------ io
    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "coords": None if self.coords is None else self.coords.tolist(),
            "edges": [[i, j, tau] for i, j, tau in self.street_edges],
            "demand": self.demand.tolist(),
        }

    def to_json(self, path: PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))

    @classmethod
    def from_json_dict(cls, data: dict, name: str = "") -> "CityGraph":
        try:
            n = int(data["n"])
            edges = data["edges"]
            demand = np.asarray(data["demand"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise CityFormatError(f"malformed city JSON: {exc}") from exc
        times = np.full((n, n), np.inf)
        for edge in edges:
            if len(edge) != 3:
                raise CityFormatError(f"edge entries must be [i, j, tau], got {edge!r}")
            i, j, tau = int(edge[0]), int(edge[1]), float(edge[2])
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise CityFormatError(f"bad edge endpoints {edge!r}")
            times[i, j] = times[j, i] = tau
        if demand.shape != (n, n):
            raise CityFormatError(f"demand must be {n}x{n}, got {demand.shape}")
        coords = data.get("coords")
        if coords is not None and len(coords) == 0:
            coords = None
        return cls(times, demand, coords, name=name)

    @classmethod
    def from_json(cls, path: PathLike) -> "CityGraph":
        path = Path(path)
        return cls.from_json_dict(json.loads(path.read_text()), name=path.stem)


def _validate_city_arrays(times, demand, coords) -> None:
    if times.ndim != 2 or times.shape[0] != times.shape[1]:
        raise CityFormatError(f"travel-time matrix must be square, got {times.shape}")
    n = times.shape[0]
    if n < 2:
        raise CityValidationError("a city needs at least two nodes")
    if demand.shape != (n, n):
        raise CityFormatError(f"demand matrix must be {n}x{n}, got {demand.shape}")
    if coords is not None and coords.shape != (n, 2):
        raise CityFormatError(f"coords must be {n}x2, got {coords.shape}")
    off = ~np.eye(n, dtype=bool)
    if np.isnan(times).any() or (times[off] <= 0).any():
        raise CityValidationError("street drive times must be positive (inf for no edge)")
    if not np.array_equal(times, times.T):
        raise CityValidationError("street edges must be symmetric with equal times")
    if not np.isfinite(demand).all() or (demand < 0).any():
        raise CityValidationError("demand must be finite and non-negative")
    if not np.array_equal(demand, demand.T):
        raise CityValidationError("demand matrix must be symmetric")
    if (np.diag(demand) != 0).any():
        raise CityValidationError("demand diagonal must be zero")
    adj = np.isfinite(times) & off
    n_comp, _ = connected_components(csr_matrix(adj), directed=False)
    if n_comp != 1:
        raise CityValidationError(f"street graph is not connected ({n_comp} components)")


def enforce_symmetry(directed_times) -> np.ndarray:
    """Symmetrize drive times by taking the slower of the two directions."""
    m = np.asarray(directed_times, dtype=float)
    return np.maximum(m, m.T)


# ---------------------------------------------------------------- loading
def _read_matrix(path: PathLike) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            rows.append([float(tok) for tok in tokens])
        except ValueError as exc:
            raise CityFormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows or any(len(r) != len(rows) for r in rows):
        raise CityFormatError(f"{path}: matrix is not square")
    return np.array(rows)


def load_city(
    times_path: PathLike,
    demand_path: PathLike,
    coords_path: Optional[PathLike] = None,
    time_scale: float = 60.0,
    name: str = "",
) -> CityGraph:
    """Load a city from whitespace-delimited benchmark matrices.

    ``Inf`` entries in the travel-time matrix mean "no street edge".  The
    published benchmark files give times in minutes, so they are multiplied by
    ``time_scale`` (60 by default) to get seconds.
    """
    times = _read_matrix(times_path)
    demand = _read_matrix(demand_path)
    if demand.shape != times.shape:
        raise CityFormatError(
            f"demand is {demand.shape} but travel times are {times.shape}"
        )
    times = enforce_symmetry(times * time_scale)
    np.fill_diagonal(times, 0.0)
    coords = None
    if coords_path is not None and Path(coords_path).exists():
        coords = _read_coords(coords_path, times.shape[0])
    np.fill_diagonal(demand, 0.0)
    return CityGraph(times, demand, coords, name=name)


def _read_coords(path: PathLike, n: int) -> np.ndarray:
    rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
    # the benchmark release prefixes the coordinate list with its length
    if len(rows) == n + 1 and len(rows[0]) == 1:
        rows = rows[1:]
    try:
        xy = np.array([[float(r[0]), float(r[1])] for r in rows])
    except (ValueError, IndexError) as exc:
        raise CityFormatError(f"{path}: bad coordinate file: {exc}") from exc
    if xy.shape != (n, 2):
        raise CityFormatError(f"{path}: expected {n} coordinate rows, got {len(xy)}")
    return xy


@dataclass(frozen=True)
class Preset:
    name: str
    file_prefix: str
    n: int
    n_edges: int
    n_routes: int
    min_stops: int
    max_stops: int


PRESETS = {
    "mandl": Preset("mandl", "Mandl", 15, 20, 6, 2, 8),
    "mumford0": Preset("mumford0", "Mumford0", 30, 90, 12, 2, 15),
    "mumford1": Preset("mumford1", "Mumford1", 70, 210, 15, 10, 30),
    "mumford2": Preset("mumford2", "Mumford2", 110, 385, 56, 10, 22),
    "mumford3": Preset("mumford3", "Mumford3", 127, 425, 60, 12, 25),
}


def bundled_data_dir() -> Path:
    return Path(str(resources.files("tndp") / "data"))


def preset_files(name: str, data_dir: Optional[PathLike] = None) -> dict[str, Path]:
    preset = PRESETS[name.lower()]
    base = Path(data_dir) if data_dir is not None else bundled_data_dir()
    return {
        "times": base / f"{preset.file_prefix}TravelTimes.txt",
        "demand": base / f"{preset.file_prefix}Demand.txt",
        "coords": base / f"{preset.file_prefix}Coords.txt",
    }


def preset_available(name: str, data_dir: Optional[PathLike] = None) -> bool:
    files = preset_files(name, data_dir)
    return files["times"].exists() and files["demand"].exists()


def load_preset(
    name: str,
    data_dir: Optional[PathLike] = None,
    **param_overrides,
) -> tuple[CityGraph, ProblemParams]:
    """Load a named benchmark city with its standard S/MIN/MAX.

    Only the Mandl matrices ship with the package; the Mumford matrices must be
    supplied through ``data_dir`` (the files keep their published names, e.g.
    ``Mumford0TravelTimes.txt``).
    """
    key = name.lower()
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    preset = PRESETS[key]
    files = preset_files(key, data_dir)
    if not preset_available(key, data_dir):
        raise FileNotFoundError(
            f"benchmark files for {name!r} not found in {files['times'].parent}; "
            f"expected {files['times'].name} and {files['demand'].name}"
        )
    city = load_city(files["times"], files["demand"], files["coords"], name=key)
    kwargs = dict(
        n_routes=preset.n_routes, min_stops=preset.min_stops, max_stops=preset.max_stops
    )
    kwargs.update(param_overrides)
    return city, ProblemParams(**kwargs)


# ---------------------------------------------------------- shortest paths
@dataclass(frozen=True, eq=False)
class ShortestPathTable:
    """All-pairs shortest drive times and one canonical street path per pair.

    ``paths[i][j]`` is a tuple of nodes from i to j, and ``paths[j][i]`` is
    always its reverse.  ``lengths[i, j]`` is the stop count of that path and
    ``member`` is an ``(n*n, n)`` boolean matrix whose row ``i*n + j`` marks
    the nodes on ``paths[i][j]``.
    """

    times: np.ndarray
    paths: tuple
    lengths: np.ndarray
    member: np.ndarray

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def max_time(self) -> float:
        return float(self.times.max())

    def path(self, i: int, j: int) -> tuple[int, ...]:
        return self.paths[i][j]

    def pair_index(self, i, j):
        return np.asarray(i) * self.n + np.asarray(j)

    def unordered_pairs(self, max_len: int) -> np.ndarray:
        """Pairs ``(i, j)``, ``i < j``, whose path has at most ``max_len`` stops."""
        cache = self.__dict__.setdefault("_pairs_cache", {})
        if max_len not in cache:
            ii, jj = np.nonzero(np.triu(self.lengths <= max_len, k=1))
            pairs = np.stack([ii, jj], axis=1)
            pairs.setflags(write=False)
            cache[max_len] = pairs
        return cache[max_len]


def build_shortest_paths(city: CityGraph) -> ShortestPathTable:
    """Compute drive times between all node pairs and canonical paths.

    Ties between equal-time paths are broken by always stepping to the
    lowest-indexed neighbour that stays on a shortest path; this gives the
    lexicographically smallest node sequence from the lower-indexed endpoint,
    and the path from the higher-indexed endpoint is its reverse.
    """
    n = city.n
    weights = np.where(city.adjacency, city.edge_times, 0.0)
    times = shortest_path(csr_matrix(weights), method="D", directed=False)
    if not np.isfinite(times).all():
        raise RuntimeError("street graph is not connected; shortest paths undefined")
    times = np.minimum(times, times.T)
    np.fill_diagonal(times, 0.0)

    # next_hop[u, j]: smallest neighbour v of u with tau_uv + T_vj == T_uj
    next_hop = np.full((n, n), -1, dtype=np.int64)
    tol = _TIGHT_RTOL * max(1.0, float(times.max()))
    for u in range(n):
        for v in city.neighbors(u):  # ascending order
            tight = np.abs(city.edge_times[u, v] + times[v] - times[u]) <= tol
            next_hop[u, tight & (next_hop[u] < 0)] = v
    paths = [[None] * n for _ in range(n)]
    lengths = np.ones((n, n), dtype=np.int64)
    member = np.zeros((n * n, n), dtype=bool)
    for i in range(n):
        paths[i][i] = (i,)
        member[i * n + i, i] = True
        for j in range(i + 1, n):
            seq = [i]
            u = i
            while u != j:
                u = int(next_hop[u, j])
                if u < 0 or len(seq) > n:
                    raise RuntimeError(f"failed to trace shortest path {i}->{j}")
                seq.append(u)
            fwd = tuple(seq)
            paths[i][j] = fwd
            paths[j][i] = fwd[::-1]
            lengths[i, j] = lengths[j, i] = len(fwd)
            member[i * n + j, seq] = True
            member[j * n + i, seq] = True
    lengths.setflags(write=False)
    member.setflags(write=False)
    times.setflags(write=False)
    return ShortestPathTable(
        times=times,
        paths=tuple(tuple(row) for row in paths),
        lengths=lengths,
        member=member,
    )


# ------------------------------------------------------------- synthesis
@dataclass(frozen=True)
class SyntheticCityConfig:
    """Parameters of the random city generator (meters, m/s, trips)."""

    n: int = 20
    process: str = "4nn"
    rho: float = 0.3
    area_side: float = 30_000.0
    speed: float = 15.0
    demand_range: tuple[float, float] = (60.0, 800.0)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.process not in SYNTHETIC_PROCESSES:
            raise ValueError(f"process must be one of {SYNTHETIC_PROCESSES}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.speed <= 0 or self.area_side <= 0:
            raise ValueError("speed and area_side must be positive")
        lo, hi = self.demand_range
        if not 0 <= lo <= hi:
            raise ValueError("demand_range must satisfy 0 <= low <= high")


def _grid_shape(n: int) -> tuple[int, int]:
    rows = int(math.isqrt(n))
    while n % rows:
        rows -= 1
    return rows, n // rows


def _grid_layout(n: int, side: float, diagonal: bool):
    rows, cols = _grid_shape(n)
    spacing = side / max(rows - 1, cols - 1, 1)
    rr, cc = np.divmod(np.arange(n), cols)
    xy = np.stack([cc * spacing, rr * spacing], axis=1).astype(float)
    edges = set()
    steps = [(0, 1), (1, 0)] + ([(1, 1), (1, -1)] if diagonal else [])
    for idx in range(n):
        r, c = divmod(idx, cols)
        for dr, dc in steps:
            r2, c2 = r + dr, c + dc
            if 0 <= r2 < rows and 0 <= c2 < cols:
                edges.add((idx, r2 * cols + c2))
    return xy, edges


def _knn_layout(n: int, side: float, rng, k: int = 4):
    xy = rng.uniform(0.0, side, size=(n, 2))
    k = min(k, n - 1)
    _, nn = cKDTree(xy).query(xy, k=k + 1)
    edges = set()
    for i in range(n):
        for j in nn[i, 1:]:
            edges.add((min(i, int(j)), max(i, int(j))))
    return xy, edges


def _voronoi_layout(m: int, side: float, rng):
    seeds = rng.uniform(0.0, side, size=(m, 2))
    vor = Voronoi(seeds)
    verts = vor.vertices
    inside = np.all((verts >= 0.0) & (verts <= side), axis=1)
    keep = {}
    edges = set()
    for a, b in vor.ridge_vertices:
        if a < 0 or b < 0 or not (inside[a] and inside[b]):
            continue
        for v in (a, b):
            keep.setdefault(v, len(keep))
        ia, ib = keep[a], keep[b]
        if ia != ib:
            edges.add((min(ia, ib), max(ia, ib)))
    xy = np.zeros((len(keep), 2))
    for v, idx in keep.items():
        xy[idx] = verts[v]
    return xy, edges


def _voronoi_for_count(n: int, side: float, rng, max_iter: int = 50):
    """Binary-search the seed count so the diagram has ``n`` vertices."""
    lo, hi = 3, max(8, 2 * n)
    best = None
    for _ in range(max_iter):
        m = (lo + hi) // 2
        xy, edges = _voronoi_layout(m, side, rng)
        count = len(xy)
        if best is None or abs(count - n) < abs(len(best[0]) - n):
            best = (xy, edges)
        if count == n:
            return xy, edges
        if count < n:
            lo = m + 1
        else:
            hi = m - 1
        if lo > hi:
            lo, hi = max(3, m - 2), m + 2
    return best


def _is_connected(n: int, edges) -> bool:
    if n == 0 or not edges:
        return n == 1
    ii, jj = zip(*edges)
    adj = csr_matrix((np.ones(len(ii)), (ii, jj)), shape=(n, n))
    return connected_components(adj, directed=False)[0] == 1


def generate_city(config: SyntheticCityConfig, seed=None) -> CityGraph:
    """Sample a random city according to ``config``.

    Non-Voronoi street graphs lose each edge with probability ``rho``; graphs
    that end up disconnected are discarded and regenerated.
    """
    rng = check_random_state(seed)
    side = config.area_side
    for _ in range(MAX_REGENERATIONS):
        if config.process == "4nn":
            xy, edges = _knn_layout(config.n, side, rng)
        elif config.process in ("4grid", "8grid"):
            xy, edges = _grid_layout(config.n, side, config.process == "8grid")
        else:
            xy, edges = _voronoi_for_count(config.n, side, rng)
        n = len(xy)
        edges = sorted(edges)
        if config.process != "voronoi" and config.rho > 0:
            kept = rng.random(len(edges)) >= config.rho
            edges = [e for e, k in zip(edges, kept) if k]
        if n < 2 or not _is_connected(n, edges):
            continue
        times = np.full((n, n), np.inf)
        for i, j in edges:
            dist = float(np.hypot(*(xy[i] - xy[j])))
            times[i, j] = times[j, i] = max(dist, 1e-6) / config.speed
        demand = sample_demand(n, config.demand_range, rng)
        return CityGraph(times, demand, xy, name=f"synthetic-{config.process}-{n}")
    raise GenerationError(
        f"no connected street graph after {MAX_REGENERATIONS} attempts ({config})"
    )


def sample_demand(n: int, demand_range: Sequence[float], seed=None) -> np.ndarray:
    rng = check_random_state(seed)
    lo, hi = demand_range
    upper = np.triu(rng.uniform(lo, hi, size=(n, n)), k=1)
    return upper + upper.T

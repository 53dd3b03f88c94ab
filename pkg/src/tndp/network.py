"""Transit networks and the cost model used to score them."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._kernels import cost_terms_kernel, flatten_routes, trip_times_kernel
from .citygraph import CityGraph, ProblemParams, ShortestPathTable
from .validation import NetworkValidationError, check_network, check_route

Route = tuple[int, ...]

SECONDS_PER_MINUTE = 60.0
# constraint term floor applied whenever any constraint is violated
VIOLATION_FLOOR = 0.1


@dataclass(frozen=True)
class TransitNetwork:
    """An ordered collection of routes; each route is a tuple of node indices.

    Route count and stop bounds are not enforced here so that partial and
    infeasible networks can be represented and scored.
    """

    routes: tuple[Route, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "routes", tuple(tuple(int(s) for s in r) for r in self.routes)
        )

    def __len__(self) -> int:
        return len(self.routes)

    def __iter__(self):
        return iter(self.routes)

    def __getitem__(self, k) -> Route:
        return self.routes[k]

    def validate(self, city: CityGraph) -> "TransitNetwork":
        check_network(city, self.routes)
        return self

    def to_json_dict(self) -> dict:
        return {"routes": [list(r) for r in self.routes]}

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))

    @classmethod
    def from_json(cls, path, city: CityGraph | None = None) -> "TransitNetwork":
        data = json.loads(Path(path).read_text())
        if not isinstance(data, dict) or "routes" not in data:
            raise NetworkValidationError(f"{path}: expected an object with a 'routes' key")
        net = cls(tuple(tuple(r) for r in data["routes"]))
        if city is not None:
            net.validate(city)
        return net


def _as_routes(network) -> tuple[Route, ...]:
    if isinstance(network, TransitNetwork):
        return network.routes
    return tuple(tuple(r) for r in network)


@dataclass(frozen=True)
class TransitTripTable:
    """Generalized transit trip times (s), transfer counts and reachability."""

    time: np.ndarray
    transfers: np.ndarray
    reachable: np.ndarray


@dataclass(frozen=True)
class EvalResult:
    cp: float
    co: float
    cc: float
    total: float
    d0: float
    d1: float
    d2: float
    dun: float
    feasible: bool
    f_un: float
    f_s: float

    @property
    def cp_minutes(self) -> float:
        return self.cp / SECONDS_PER_MINUTE

    @property
    def co_minutes(self) -> float:
        return self.co / SECONDS_PER_MINUTE

    def to_dict(self, double_co: bool = False) -> dict:
        """The JSON report; ``double_co`` counts both directions of every route."""
        return {
            "cp_minutes": self.cp_minutes,
            "co_minutes": self.co_minutes * (2 if double_co else 1),
            "cc": self.cc,
            "total": self.total,
            "d0": self.d0,
            "d1": self.d1,
            "d2": self.d2,
            "dun": self.dun,
            "feasible": self.feasible,
        }


@dataclass(frozen=True)
class ConstraintReport:
    unserved_pairs: int
    n_routes: int
    required_routes: int
    short_routes: tuple[int, ...]
    long_routes: tuple[int, ...]
    cyclic_routes: tuple[int, ...]

    @property
    def demand_satisfied(self) -> bool:
        return self.unserved_pairs == 0

    @property
    def route_count_ok(self) -> bool:
        return self.n_routes == self.required_routes

    @property
    def route_lengths_ok(self) -> bool:
        return not self.short_routes and not self.long_routes

    @property
    def acyclic(self) -> bool:
        return not self.cyclic_routes

    @property
    def ok(self) -> bool:
        return (
            self.demand_satisfied
            and self.route_count_ok
            and self.route_lengths_ok
            and self.acyclic
        )

    def as_dict(self) -> dict:
        out = asdict(self)
        out.update(
            demand_satisfied=self.demand_satisfied,
            route_count_ok=self.route_count_ok,
            route_lengths_ok=self.route_lengths_ok,
            acyclic=self.acyclic,
        )
        return out


# ------------------------------------------------------------- primitives
def route_time(city: CityGraph, route: Sequence[int]) -> float:
    """Drive time (s) to traverse ``route`` end to end in one direction."""
    stops = check_route(city, route)
    idx = np.asarray(stops)
    return float(city.edge_times[idx[:-1], idx[1:]].sum())


def _unchecked_route_time(edge_times, route) -> float:
    idx = np.asarray(route)
    return float(edge_times[idx[:-1], idx[1:]].sum())


def direct_ride_times(edge_times: np.ndarray, routes: Iterable[Route]) -> np.ndarray:
    """Fastest single-route ride between every node pair (inf if none)."""
    n = edge_times.shape[0]
    legs = np.full((n, n), np.inf)
    for r in routes:
        if len(r) < 2:
            continue
        idx = np.asarray(r)
        cum = np.zeros(len(idx))
        np.cumsum(edge_times[idx[:-1], idx[1:]], out=cum[1:])
        ride = np.abs(cum[:, None] - cum[None, :])
        block = np.ix_(idx, idx)
        legs[block] = np.minimum(legs[block], ride)
    np.fill_diagonal(legs, 0.0)
    return legs


def _closure_with_transfers(legs: np.ndarray, transfer_penalty: float):
    """Min-plus closure over legs, ordered by (time, leg count).

    Each leg is charged one transfer penalty and the first boarding is then
    refunded, giving ride time plus one penalty per transfer.
    """
    n = legs.shape[0]
    dist = legs + transfer_penalty
    nlegs = np.where(np.isfinite(legs), 1, 0).astype(np.int64)
    np.fill_diagonal(dist, 0.0)
    np.fill_diagonal(nlegs, 0)
    for k in range(n):
        cand = dist[:, k, None] + dist[None, k, :]
        cand_legs = nlegs[:, k, None] + nlegs[None, k, :]
        better = (cand < dist) | ((cand == dist) & (cand_legs < nlegs))
        if better.any():
            dist = np.where(better, cand, dist)
            nlegs = np.where(better, cand_legs, nlegs)
    reach = np.isfinite(dist)
    time = np.where(reach, dist - transfer_penalty, np.inf)
    transfers = np.where(reach, nlegs - 1, 0)
    np.fill_diagonal(time, 0.0)
    np.fill_diagonal(transfers, 0)
    return time, transfers, reach


def transit_trip_times(
    city: CityGraph, network, transfer_penalty: float = 300.0
) -> TransitTripTable:
    """Shortest transit trips between all node pairs.

    ``time[i, j]`` minimises in-vehicle time plus ``transfer_penalty`` per
    transfer, with no cap on the number of transfers; ``transfers[i, j]`` is
    the fewest transfers among itineraries achieving that time.
    """
    routes = _as_routes(network)
    legs = direct_ride_times(city.edge_times, routes)
    time, transfers, reach = _closure_with_transfers(legs, transfer_penalty)
    for arr in (time, transfers, reach):
        arr.setflags(write=False)
    return TransitTripTable(time=time, transfers=transfers, reachable=reach)


def _unreachable_time(city: CityGraph) -> float:
    return 2.0 * city.shortest_paths.max_time


def passenger_cost(city: CityGraph, trip_table: TransitTripTable) -> float:
    """Demand-weighted mean trip time (s); unserved trips count as twice the
    longest street drive time."""
    total = city.total_demand
    if total <= 0:
        raise ValueError("passenger cost is undefined for a city with zero demand")
    times = np.where(trip_table.reachable, trip_table.time, _unreachable_time(city))
    return float((city.demand * times).sum() / total)


def operator_cost(network, city: CityGraph) -> float:
    """Sum of one-direction route drive times (s)."""
    return float(sum(_unchecked_route_time(city.edge_times, r) for r in _as_routes(network)))


def _size_violation(routes, params: ProblemParams) -> float:
    over = sum(
        max(0, params.min_stops - len(r), len(r) - params.max_stops) for r in routes
    )
    return over / (params.n_routes * params.max_stops)


def _unserved_fraction(demand_pos: np.ndarray, reachable: np.ndarray) -> float:
    n_pos = int(demand_pos.sum())
    if n_pos == 0:
        return 0.0
    return float((demand_pos & ~reachable).sum()) / n_pos


def constraint_cost(
    city: CityGraph, network, params: ProblemParams, trip_table: TransitTripTable | None = None
) -> tuple[float, float, float]:
    """Return ``(C_c, F_un, F_s)``."""
    routes = _as_routes(network)
    if trip_table is None:
        trip_table = transit_trip_times(city, routes, params.transfer_penalty)
    f_un = _unserved_fraction(city.demand > 0, trip_table.reachable)
    f_s = _size_violation(routes, params)
    violated = f_un > 0 or f_s > 0
    return f_un + f_s + (VIOLATION_FLOOR if violated else 0.0), f_un, f_s


def transfer_metrics(city: CityGraph, trip_table: TransitTripTable) -> tuple[float, float, float, float]:
    """Percent of demand served with 0, 1, 2 transfers, and the remainder.

    Unreachable demand falls into the remainder.
    """
    total = city.total_demand
    if total <= 0:
        raise ValueError("transfer metrics are undefined for a city with zero demand")
    d = []
    for k in range(3):
        mask = trip_table.reachable & (trip_table.transfers == k)
        d.append(100.0 * float(city.demand[mask].sum()) / total)
    return d[0], d[1], d[2], 100.0 - sum(d)


def cost_weights(city: CityGraph, params: ProblemParams) -> tuple[float, float]:
    """``(w_p, w_o)`` rescaling constants from the street-graph drive times."""
    max_t = city.shortest_paths.max_time
    return 1.0 / max_t, 1.0 / (params.n_routes * max_t)


def total_cost(city: CityGraph, network, params: ProblemParams) -> EvalResult:
    routes = _as_routes(network)
    table = transit_trip_times(city, routes, params.transfer_penalty)
    cp = passenger_cost(city, table)
    co = operator_cost(routes, city)
    cc, f_un, f_s = constraint_cost(city, routes, params, table)
    w_p, w_o = cost_weights(city, params)
    total = params.alpha * w_p * cp + (1 - params.alpha) * w_o * co + params.beta * cc
    d0, d1, d2, dun = transfer_metrics(city, table)
    return EvalResult(
        cp=cp, co=co, cc=cc, total=total, d0=d0, d1=d1, d2=d2, dun=dun,
        feasible=cc == 0, f_un=f_un, f_s=f_s,
    )


def check_constraints(city: CityGraph, network, params: ProblemParams) -> ConstraintReport:
    routes = _as_routes(network)
    valid = [r for r in routes if all(0 <= s < city.n for s in r)]
    table = transit_trip_times(city, valid, params.transfer_penalty)
    dpos = city.demand > 0
    return ConstraintReport(
        unserved_pairs=int(np.triu(dpos & ~table.reachable, k=1).sum()),
        n_routes=len(routes),
        required_routes=params.n_routes,
        short_routes=tuple(k for k, r in enumerate(routes) if len(r) < params.min_stops),
        long_routes=tuple(k for k, r in enumerate(routes) if len(r) > params.max_stops),
        cyclic_routes=tuple(k for k, r in enumerate(routes) if len(set(r)) != len(r)),
    )


class CostModel:
    """Cached evaluator for one (city, params) pair.

    ``cost`` is the fast path used inside search loops: it skips transfer
    counting, which the total cost does not need.  ``evaluate`` returns the
    full report.
    """

    def __init__(self, city: CityGraph, params: ProblemParams, sp: ShortestPathTable | None = None):
        self.city = city
        self.params = params
        self.sp = sp if sp is not None else city.shortest_paths
        self.max_time = self.sp.max_time
        self.w_p = 1.0 / self.max_time
        self.w_o = 1.0 / (params.n_routes * self.max_time)
        self._edge_times = city.edge_times
        self._demand = city.demand
        self._dsum = city.total_demand
        self._dpos = city.demand > 0
        self._npos = int(self._dpos.sum())
        self._unreach = 2.0 * self.max_time

    def with_alpha(self, alpha: float) -> "CostModel":
        return CostModel(self.city, self.params.replace(alpha=alpha), self.sp)

    def trip_times(self, routes) -> np.ndarray:
        stops, offsets = flatten_routes(routes)
        return trip_times_kernel(self._edge_times, stops, offsets, float(self.params.transfer_penalty))

    def components(self, routes) -> tuple[float, float, float, float]:
        """``(C_p, C_o, F_un, F_s)`` for ``routes``."""
        if self._dsum <= 0:
            raise ValueError("passenger cost is undefined for a city with zero demand")
        stops, offsets = flatten_routes(routes)
        weighted, co, unserved = cost_terms_kernel(
            self._edge_times, stops, offsets, float(self.params.transfer_penalty),
            self._demand, self._unreach,
        )
        f_un = unserved / self._npos if self._npos else 0.0
        return weighted / self._dsum, co, f_un, _size_violation(routes, self.params)

    def cost(self, routes, size_penalty: bool = True) -> float:
        """Total cost C; with ``size_penalty=False`` the stop-bound term is
        dropped from C_c (the construction reward's cost)."""
        cp, co, f_un, f_s = self.components(routes)
        p = self.params
        cc = f_un + f_s + (VIOLATION_FLOOR if (f_un > 0 or f_s > 0) else 0.0)
        if not size_penalty:
            cc -= f_s
        return p.alpha * self.w_p * cp + (1 - p.alpha) * self.w_o * co + p.beta * cc

    def evaluate(self, routes) -> EvalResult:
        return total_cost(self.city, routes, self.params)

"""Independent reference implementations used as test oracles."""

import numpy as np

from tndp import CityGraph


def enumerate_itineraries(city: CityGraph, routes, transfer_penalty: float, max_transfers: int = 4):
    """Best (time, transfers) per node pair by exhaustive itinerary search.

    An itinerary is a chain of rides; each ride boards one route at the
    current node and alights at a later stop in either direction.  Every
    sequence of up to ``max_transfers + 1`` rides is enumerated, and pairs
    are compared lexicographically on (generalised time, transfers).
    Returns ``(time, transfers)`` with ``inf`` / -1 for unreachable pairs.
    """
    n = city.n
    # ride options from each node: (destination, ride time)
    rides = [[] for _ in range(n)]
    for r in routes:
        pos_time = [0.0]
        for a, b in zip(r, r[1:]):
            pos_time.append(pos_time[-1] + city.edge_times[a, b])
        for x in range(len(r)):
            for y in range(len(r)):
                if x != y:
                    rides[r[x]].append((r[y], abs(pos_time[y] - pos_time[x])))
    best_t = np.full((n, n), np.inf)
    best_k = np.full((n, n), np.iinfo(np.int64).max)
    for o in range(n):
        best_t[o, o], best_k[o, o] = 0.0, 0

        def visit(node, elapsed, legs):
            for dest, ride in rides[node]:
                t = elapsed + ride
                # ``legs`` rides were taken before this one, so legs transfers
                if (t, legs) < (best_t[o, dest], best_k[o, dest]):
                    best_t[o, dest], best_k[o, dest] = t, legs
                if legs < max_transfers:
                    visit(dest, t + transfer_penalty, legs + 1)

        visit(o, 0.0, 0)
    best_k[~np.isfinite(best_t)] = -1
    return best_t, best_k


def random_instance(rng, n_max=10, s_max=3, min_stops=2, max_stops=5):
    """Random connected street graph with integer edge times and random routes."""
    n = int(rng.integers(4, n_max + 1))
    times = np.full((n, n), np.inf)
    np.fill_diagonal(times, 0.0)
    order = rng.permutation(n)
    for k in range(1, n):
        a, b = order[k], order[int(rng.integers(k))]
        times[a, b] = times[b, a] = float(rng.integers(1, 11) * 30)
    for _ in range(int(rng.integers(0, n))):
        a, b = rng.choice(n, 2, replace=False)
        times[a, b] = times[b, a] = float(rng.integers(1, 11) * 30)
    demand = rng.integers(0, 5, size=(n, n)).astype(float)
    demand = np.triu(demand, 1)
    demand = demand + demand.T
    city = CityGraph(times, demand)
    routes = []
    for _ in range(int(rng.integers(1, s_max + 1))):
        length = int(rng.integers(min_stops, max_stops + 1))
        route = [int(rng.integers(n))]
        while len(route) < length:
            nxt = [v for v in city.neighbors(route[-1]) if v not in route]
            if not nxt:
                break
            route.append(int(rng.choice(nxt)))
        if len(route) >= 2:
            routes.append(tuple(route))
    if not routes:
        a = int(rng.integers(n))
        routes.append((a, city.neighbors(a)[0]))
    return city, routes

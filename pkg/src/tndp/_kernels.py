"""Compiled inner loops for cost evaluation.

These mirror ``network.direct_ride_times`` and ``network.transit_trip_times`` and
are checked against them in the test suite.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def flatten_routes(routes) -> tuple[np.ndarray, np.ndarray]:
    offsets = np.zeros(len(routes) + 1, dtype=np.int64)
    for k, r in enumerate(routes):
        offsets[k + 1] = offsets[k] + len(r)
    stops = np.empty(offsets[-1], dtype=np.int64)
    for k, r in enumerate(routes):
        stops[offsets[k]:offsets[k + 1]] = r
    return stops, offsets


@njit(cache=True)
def trip_times_kernel(edge_times, stops, offsets, transfer_penalty):
    n = edge_times.shape[0]
    dist = np.full((n, n), np.inf)
    for k in range(offsets.shape[0] - 1):
        lo = offsets[k]
        hi = offsets[k + 1]
        for a in range(lo, hi):
            t = 0.0
            u = stops[a]
            for b in range(a + 1, hi):
                t += edge_times[stops[b - 1], stops[b]]
                v = stops[b]
                leg = t + transfer_penalty
                if leg < dist[u, v]:
                    dist[u, v] = leg
                    dist[v, u] = leg
    for i in range(n):
        dist[i, i] = 0.0
    for k in range(n):
        for i in range(n):
            dik = dist[i, k]
            if dik == np.inf:
                continue
            for j in range(n):
                c = dik + dist[k, j]
                if c < dist[i, j]:
                    dist[i, j] = c
    for i in range(n):
        for j in range(n):
            if i != j:
                dist[i, j] -= transfer_penalty
    return dist


@njit(cache=True)
def cost_terms_kernel(edge_times, stops, offsets, transfer_penalty, demand, unreach_time):
    """Return (demand-weighted time sum, route time sum, unserved positive pairs)."""
    dist = trip_times_kernel(edge_times, stops, offsets, transfer_penalty)
    n = edge_times.shape[0]
    weighted = 0.0
    unserved = 0
    for i in range(n):
        for j in range(n):
            d = demand[i, j]
            if dist[i, j] == np.inf:
                weighted += d * unreach_time
                if d > 0:
                    unserved += 1
            else:
                weighted += d * dist[i, j]
    route_time = 0.0
    for k in range(offsets.shape[0] - 1):
        for a in range(offsets[k] + 1, offsets[k + 1]):
            route_time += edge_times[stops[a - 1], stops[a]]
    return weighted, route_time, unserved

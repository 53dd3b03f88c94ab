"""Input validation helpers and the package's exception types."""

from __future__ import annotations

import numbers
from typing import Sequence

import numpy as np


class CityFormatError(ValueError):
    """A city file or JSON document could not be parsed."""


class CityValidationError(ValueError):
    """A city violates a structural invariant (connectivity, symmetry, ...)."""


class NetworkValidationError(ValueError):
    """A route is malformed for the city it is evaluated on."""

    def __init__(self, message: str, route_index: int | None = None):
        super().__init__(message)
        self.route_index = route_index


class GenerationError(RuntimeError):
    """Synthetic city generation gave up."""


class IllegalActionError(ValueError):
    """An action outside the current action space was applied to the MDP."""


def check_random_state(seed) -> np.random.Generator:
    """Turn ``seed`` into a ``numpy.random.Generator``.

    Accepts None, an int, a ``SeedSequence``, or an existing Generator (which
    is returned as-is so that callers share the stream).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValueError(f"{seed!r} cannot be used to seed a numpy Generator")


def check_route(city, route: Sequence[int], index: int | None = None) -> tuple[int, ...]:
    """Validate one route against ``city`` and return it as a tuple of ints."""
    where = "" if index is None else f"route {index}: "
    try:
        stops = tuple(int(s) for s in route)
    except (TypeError, ValueError) as exc:
        raise NetworkValidationError(f"{where}stops must be integers", index) from exc
    if len(stops) < 2:
        raise NetworkValidationError(f"{where}needs at least two stops", index)
    if len(set(stops)) != len(stops):
        raise NetworkValidationError(f"{where}visits a node more than once", index)
    for s in stops:
        if not 0 <= s < city.n:
            raise NetworkValidationError(f"{where}node {s} out of range", index)
    for a, b in zip(stops, stops[1:]):
        if not city.has_edge(a, b):
            raise NetworkValidationError(
                f"{where}consecutive stops {a} and {b} are not street-adjacent", index
            )
    return stops


def check_network(city, routes) -> tuple[tuple[int, ...], ...]:
    return tuple(check_route(city, r, k) for k, r in enumerate(routes))


def check_alphas(alphas) -> list[float]:
    out = [float(a) for a in alphas]
    bad = [a for a in out if not 0.0 <= a <= 1.0]
    if bad:
        raise ValueError(f"alpha values must lie in [0, 1], got {bad}")
    if not out:
        raise ValueError("at least one alpha is required")
    return out

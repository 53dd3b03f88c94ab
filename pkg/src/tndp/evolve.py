"""Mutators and the mutation/selection evolutionary search over networks."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .citygraph import CityGraph, ProblemParams, ShortestPathTable
from .mdp import ConstructionMDP, Policy, UniformPolicy, lc_sample, rollout
from .network import (
    SECONDS_PER_MINUTE,
    CostModel,
    EvalResult,
    TransitNetwork,
    _as_routes,
)
from .validation import check_random_state

log = logging.getLogger(__name__)

VARIANTS = ("ea", "combine")


@dataclass(frozen=True)
class EaParams:
    """Search settings.

    ``variant="ea"`` pairs the type-1 and type-2 mutators.  ``"combine"``
    replaces type-1 with route re-planning by ``policy``; with the uniform
    policy this is RC-EA.
    """

    population: int = 10
    iterations: int = 400
    mutations_per_stage: int = 10
    p_delete: float = 0.2
    variant: str = "ea"
    lc_samples: int = 100
    policy: Optional[Policy] = None

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.mutations_per_stage < 1:
            raise ValueError("mutations_per_stage must be at least 1")
        if not 0.0 <= self.p_delete <= 1.0:
            raise ValueError("p_delete must lie in [0, 1]")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.lc_samples < 1:
            raise ValueError("lc_samples must be at least 1")

    def resolved_policy(self) -> Policy:
        return self.policy if self.policy is not None else UniformPolicy()


# ------------------------------------------------------------- mutators
def direct_demand_weights(city: CityGraph, sp: ShortestPathTable) -> np.ndarray:
    """``W[i, j]``: total demand between ordered node pairs on the path i->j."""
    m = sp.member.astype(float)
    w = ((m @ city.demand) * m).sum(axis=1).reshape(city.n, city.n)
    np.fill_diagonal(w, 0.0)
    return w


def mutate_type1(network, city: CityGraph, sp: ShortestPathTable, rng,
                 weights: np.ndarray | None = None) -> TransitNetwork:
    """Replace a random route by the shortest path from one of its terminals
    to a node drawn in proportion to the demand that path serves directly."""
    routes = list(_as_routes(network))
    if not routes:
        raise ValueError("cannot mutate an empty network")
    rng = check_random_state(rng)
    w = weights if weights is not None else direct_demand_weights(city, sp)
    k = int(rng.integers(len(routes)))
    route = routes[k]
    i = route[0] if rng.random() < 0.5 else route[-1]
    row = w[i].copy()
    row[i] = 0.0
    total = row.sum()
    if total > 0:
        j = int(rng.choice(city.n, p=row / total))
    else:
        j = int(rng.choice(np.delete(np.arange(city.n), i)))
    routes[k] = sp.paths[i][j]
    return TransitNetwork(tuple(routes))


def mutate_type2(network, city: CityGraph, params: ProblemParams, rng,
                 p_delete: float = 0.2) -> TransitNetwork:
    """Shrink or grow a random route by one stop at a random terminal.

    When the drawn move is not possible (stop bounds, or no neighbour outside
    the route) the input is returned unchanged.
    """
    routes = list(_as_routes(network))
    if not routes:
        raise ValueError("cannot mutate an empty network")
    rng = check_random_state(rng)
    k = int(rng.integers(len(routes)))
    route = routes[k]
    at_start = rng.random() < 0.5
    if rng.random() < p_delete:
        if len(route) <= params.min_stops:
            return TransitNetwork(tuple(routes))
        routes[k] = route[1:] if at_start else route[:-1]
        return TransitNetwork(tuple(routes))
    if len(route) >= params.max_stops:
        return TransitNetwork(tuple(routes))
    end = route[0] if at_start else route[-1]
    eligible = [v for v in city.neighbors(end) if v not in route]
    if not eligible:
        return TransitNetwork(tuple(routes))
    j = eligible[int(rng.integers(len(eligible)))]
    routes[k] = (j,) + route if at_start else route + (j,)
    return TransitNetwork(tuple(routes))


def mutate_combine(network, mdp: ConstructionMDP, policy: Policy, rng) -> TransitNetwork:
    """Drop a random route and let ``policy`` plan its replacement."""
    routes = list(_as_routes(network))
    if len(routes) != mdp.params.n_routes:
        raise ValueError(f"expected {mdp.params.n_routes} routes, got {len(routes)}")
    rng = check_random_state(rng)
    k = int(rng.integers(len(routes)))
    rest = routes[:k] + routes[k + 1:]
    planned = rollout(policy, mdp, rest, rng)
    routes[k] = planned.routes[-1]
    return TransitNetwork(tuple(routes))


# ------------------------------------------------------------- population
@dataclass
class Population:
    members: list
    costs: np.ndarray
    best: TransitNetwork
    best_cost: float

    @classmethod
    def from_copies(cls, network: TransitNetwork, cost: float, size: int) -> "Population":
        return cls([network] * size, np.full(size, cost), network, cost)

    def __len__(self) -> int:
        return len(self.members)

    def update_best(self) -> bool:
        b = int(np.argmin(self.costs))
        if self.costs[b] < self.best_cost:
            self.best, self.best_cost = self.members[b], float(self.costs[b])
            return True
        return False


@dataclass
class SearchContext:
    """Per-run objects shared by the mutation stage."""

    city: CityGraph
    problem: ProblemParams
    params: EaParams
    sp: ShortestPathTable
    cost_model: CostModel
    mdp: ConstructionMDP
    policy: Policy
    weights: np.ndarray = field(default=None)

    @classmethod
    def build(cls, city, problem, params, sp=None, cost_model=None) -> "SearchContext":
        sp = sp if sp is not None else city.shortest_paths
        cm = cost_model if cost_model is not None else CostModel(city, problem, sp)
        mdp = ConstructionMDP(city, problem, sp, cost_model=cm)
        weights = direct_demand_weights(city, sp) if params.variant == "ea" else None
        return cls(city, problem, params, sp, cm, mdp, params.resolved_policy(), weights)

    def mutate_a(self, network, rng) -> TransitNetwork:
        if self.params.variant == "combine":
            return mutate_combine(network, self.mdp, self.policy, rng)
        return mutate_type1(network, self.city, self.sp, rng, self.weights)

    def mutate_b(self, network, rng) -> TransitNetwork:
        return mutate_type2(network, self.city, self.problem, rng, self.params.p_delete)


def mutation_stage(population: Population, ctx: SearchContext, rng,
                   stream_key: tuple = ()) -> Population:
    """Run E passes of mutate-and-accept over the population, in place.

    In each pass the first half of the (shuffled) member order gets the
    route-replacing mutator and the rest get the type-2 mutator.  A child
    replaces its parent only if strictly cheaper.  Each proposal draws from its
    own stream keyed by ``stream_key``, the pass and the member index.
    """
    rng = check_random_state(rng)
    if not stream_key:
        stream_key = (int(rng.integers(2**63)),)
    size = len(population)
    n_first = math.ceil(size / 2)
    order = rng.permutation(size)
    for e in range(ctx.params.mutations_per_stage):
        for pos, b in enumerate(order):
            sub = np.random.default_rng([*stream_key, e, int(b)])
            parent = population.members[b]
            if pos < n_first:
                child = ctx.mutate_a(parent, sub)
            else:
                child = ctx.mutate_b(parent, sub)
            c = ctx.cost_model.cost(child.routes)
            if c < population.costs[b]:
                population.members[b] = child
                population.costs[b] = c
        order = rng.permutation(size)
    return population


def survival_scores(costs: np.ndarray) -> np.ndarray:
    """O_b = (C_max - C_b) / (C_max - C_min), or all ones when costs tie."""
    c_max, c_min = float(np.max(costs)), float(np.min(costs))
    if c_max == c_min:
        return np.ones(len(costs))
    return (c_max - costs) / (c_max - c_min)


def draw_survivors(costs: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(O_b, survives)``; member b survives with probability 1 - exp(-O_b)."""
    scores = survival_scores(costs)
    return scores, rng.random(len(costs)) < 1.0 - np.exp(-scores)


def selection_stage(population: Population, rng) -> Population:
    """Update the best network, then let members die or reproduce, in place.

    Member b survives with probability 1 - exp(-O_b); every non-survivor is
    replaced by a copy of a survivor drawn with probability proportional to
    O_b.  If nobody survives the population is left as it is.
    """
    rng = check_random_state(rng)
    population.update_best()
    scores, survives = draw_survivors(population.costs, rng)
    if not survives.any():
        return population
    weights = scores * survives
    probs = weights / weights.sum()
    dead = np.flatnonzero(~survives)
    parents = rng.choice(len(population), size=len(dead), p=probs)
    members = list(population.members)
    costs = population.costs.copy()
    for d, p in zip(dead, parents):
        members[d] = population.members[p]
        costs[d] = population.costs[p]
    population.members = members
    population.costs = costs
    return population


# ------------------------------------------------------------- driver
HISTORY_COLUMNS = ("iteration", "best_total", "best_cp_minutes", "best_co_minutes", "cc")


@dataclass(frozen=True)
class HistoryRow:
    iteration: int
    best_total: float
    best_cp_minutes: float
    best_co_minutes: float
    cc: float


def _history_row(it: int, ev: EvalResult) -> HistoryRow:
    return HistoryRow(it, ev.total, ev.cp / SECONDS_PER_MINUTE, ev.co / SECONDS_PER_MINUTE, ev.cc)


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([row.iteration, repr(row.best_total), repr(row.best_cp_minutes),
                             repr(row.best_co_minutes), repr(row.cc)])


def run_ea(city: CityGraph, params: EaParams, problem: ProblemParams, rng=None,
           sp: ShortestPathTable | None = None,
           progress: Callable[[int, float], None] | None = None):
    """Evolve a network starting from B copies of the best of an LC sample.

    Returns ``(best network, its EvalResult, history)`` where ``history`` holds
    one row for the initial network (iteration 0) and one per iteration.
    """
    rng = check_random_state(rng)
    ctx = SearchContext.build(city, problem, params, sp)
    init, init_cost = lc_sample(ctx.policy, ctx.mdp, params.lc_samples, rng,
                                cost_model=ctx.cost_model, return_cost=True)
    pop = Population.from_copies(init, init_cost, params.population)
    root = int(rng.integers(2**63))
    best_eval = ctx.cost_model.evaluate(pop.best.routes)
    evaluated_cost = pop.best_cost
    history = [_history_row(0, best_eval)]
    for it in range(1, params.iterations + 1):
        mutation_stage(pop, ctx, rng, stream_key=(root, it))
        selection_stage(pop, rng)
        if pop.best_cost < evaluated_cost:
            best_eval = ctx.cost_model.evaluate(pop.best.routes)
            evaluated_cost = pop.best_cost
        history.append(_history_row(it, best_eval))
        if progress is not None:
            progress(it, pop.best_cost)
    return pop.best, best_eval, history

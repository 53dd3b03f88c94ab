"""The route-construction MDP, its policies, and rollout/sampling drivers.

Construction alternates between two kinds of step.  On odd timesteps the
agent extends the in-progress route with a shortest path; on even timesteps it
decides whether to halt that route (moving it into the finished set) or keep
extending it.  The episode ends once the S-th route is finished.
"""

from __future__ import annotations

import json
import logging
from abc import ABC, abstractmethod
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .citygraph import CityGraph, ProblemParams, ShortestPathTable
from .network import CostModel, Route, TransitNetwork
from .validation import IllegalActionError, check_random_state

log = logging.getLogger(__name__)

HALT = "halt"
CONTINUE = "continue"


@dataclass(frozen=True)
class MdpState:
    finished: tuple[Route, ...] = ()
    current: Route = ()
    t: int = 1

    @property
    def is_extension_step(self) -> bool:
        return self.t % 2 == 1

    @property
    def routes(self) -> tuple[Route, ...]:
        """Finished routes plus the in-progress one, if any."""
        if self.current:
            return self.finished + (self.current,)
        return self.finished


@dataclass(frozen=True)
class Extend:
    """Attach ``path`` to the end of the current route, or to its start when
    ``prepend`` is set.  On an empty route the path becomes the route."""

    path: Route
    prepend: bool = False


Action = Union[Extend, str]


class ExtensionCandidates(Sequence):
    """Lazily materialised extension actions.

    Each candidate is identified by its ordered shortest-path pair id
    (``i * n + j``) and an attach-end flag, so large first-step action sets are
    never expanded into path tuples unless an action is actually taken.
    """

    def __init__(self, sp: ShortestPathTable, pair_ids, prepend, current: Route = ()):
        self.sp = sp
        self.pair_ids = np.asarray(pair_ids, dtype=np.int64)
        self.prepend = np.asarray(prepend, dtype=bool)
        self.current = current

    def __len__(self) -> int:
        return len(self.pair_ids)

    def __getitem__(self, k) -> Extend:
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(len(self)))]
        i, j = divmod(int(self.pair_ids[k]), self.sp.n)
        return Extend(self.sp.paths[i][j], bool(self.prepend[k]))

    def subset(self, keep) -> "ExtensionCandidates":
        return ExtensionCandidates(self.sp, self.pair_ids[keep], self.prepend[keep], self.current)

    def membership(self) -> np.ndarray:
        """(k, n) boolean matrix of the nodes on each candidate path."""
        return self.sp.member[self.pair_ids]

    def index_of(self, action: Extend) -> int:
        path = tuple(action.path)
        pid = path[0] * self.sp.n + path[-1]
        hits = np.flatnonzero((self.pair_ids == pid) & (self.prepend == bool(action.prepend)))
        if len(hits) == 0 or self.sp.paths[path[0]][path[-1]] != path:
            return -1
        return int(hits[0])


@dataclass(frozen=True)
class HaltChoice:
    can_halt: bool
    can_continue: bool

    @property
    def options(self) -> tuple[str, ...]:
        return tuple(
            a for a, ok in ((HALT, self.can_halt), (CONTINUE, self.can_continue)) if ok
        )


# ------------------------------------------------------------- scorers
class NodePairScorer(ABC):
    """Scores the benefit of directly linking node pairs.

    ``score`` is vectorised over numpy arrays of ``i``, ``j`` and the ride time
    between them; pairs with ``i == j`` must score 0.
    """

    @abstractmethod
    def score(self, i, j, pair_time) -> np.ndarray:
        ...


class DemandScorer(NodePairScorer):
    """o_ij = D_ij / max(D)."""

    def __init__(self, city: CityGraph):
        peak = float(city.demand.max())
        self.table = city.demand / peak if peak > 0 else np.zeros_like(city.demand)

    def score(self, i, j, pair_time):
        return np.where(np.asarray(i) == np.asarray(j), 0.0, self.table[i, j])


class TableScorer(NodePairScorer):
    """Fixed node-pair scores, e.g. exported from an externally trained model."""

    def __init__(self, scores):
        table = np.array(scores, dtype=float)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise ValueError(f"score table must be square, got {table.shape}")
        np.fill_diagonal(table, 0.0)
        self.table = table

    @classmethod
    def from_json(cls, path) -> "TableScorer":
        data = json.loads(Path(path).read_text())
        table = cls(data["scores"])
        if int(data.get("n", len(table.table))) != len(table.table):
            raise ValueError(f"{path}: 'n' does not match the score table size")
        return table

    def score(self, i, j, pair_time):
        return np.where(np.asarray(i) == np.asarray(j), 0.0, self.table[i, j])


def aggregate_extension_scores(
    scorer: NodePairScorer, state: MdpState, candidates: ExtensionCandidates, edge_times: np.ndarray
) -> np.ndarray:
    """Score each candidate by summing node-pair scores over the pairs it links.

    A path's own pairs are scored at their shortest-path time.  When extending
    a non-empty route, pairs linking an existing stop to a new stop are scored
    at the ride time along the joined route.
    """
    sp = candidates.sp
    n = sp.n
    if len(candidates) == 0:
        return np.zeros(0)
    ii, jj = np.divmod(np.arange(n * n), n)
    pair_scores = scorer.score(ii, jj, sp.times.ravel()).reshape(n, n)
    np.fill_diagonal(pair_scores, 0.0)
    member = candidates.membership().astype(float)
    out = ((member @ pair_scores) * member).sum(axis=1)
    route = state.current
    if not route:
        return out
    r = np.asarray(route)
    for k in range(len(candidates)):
        ext = candidates[k]
        a = np.asarray(ext.path)
        joined = np.concatenate([a, r]) if ext.prepend else np.concatenate([r, a])
        cum = np.zeros(len(joined))
        np.cumsum(edge_times[joined[:-1], joined[1:]], out=cum[1:])
        pos = {int(v): p for p, v in enumerate(joined)}
        ri = np.array([pos[int(v)] for v in r])
        ai = np.array([pos[int(v)] for v in a])
        times = np.abs(cum[ri][:, None] - cum[ai][None, :])
        I, J = np.meshgrid(r, a, indexing="ij")
        cross = scorer.score(I, J, times)
        out[k] += float(np.where(I != J, cross, 0.0).sum())
    return out


# ------------------------------------------------------------- policies
class Policy(ABC):
    @abstractmethod
    def choose_extension(self, state: MdpState, candidates: ExtensionCandidates, rng) -> int:
        ...

    @abstractmethod
    def choose_halt(self, state: MdpState, rng) -> bool:
        """Return True to halt; only called when both halting and continuing
        are legal."""


class UniformPolicy(Policy):
    """Uniformly random over the legal actions."""

    def choose_extension(self, state, candidates, rng) -> int:
        return int(rng.integers(len(candidates)))

    def choose_halt(self, state, rng) -> bool:
        return bool(rng.random() < 0.5)

    def __repr__(self):
        return "UniformPolicy()"


class ScorePolicy(Policy):
    """Softmax over aggregated node-pair scores; halts with fixed probability."""

    def __init__(self, scorer: NodePairScorer, edge_times: np.ndarray,
                 temperature: float = 1.0, halt_probability: float = 0.5):
        if temperature <= 0:
            raise ValueError("temperature must be positive")
        self.scorer = scorer
        self.edge_times = edge_times
        self.temperature = temperature
        self.halt_probability = halt_probability

    def probabilities(self, state, candidates) -> np.ndarray:
        scores = aggregate_extension_scores(self.scorer, state, candidates, self.edge_times)
        z = scores / self.temperature
        z = np.exp(z - z.max())
        return z / z.sum()

    def choose_extension(self, state, candidates, rng) -> int:
        probs = self.probabilities(state, candidates)
        return int(rng.choice(len(probs), p=probs))

    def choose_halt(self, state, rng) -> bool:
        return bool(rng.random() < self.halt_probability)


def make_policy(spec: str, city: CityGraph) -> Policy:
    """Build a policy from ``uniform``, ``demand`` or ``table:<path>``."""
    if spec == "uniform":
        return UniformPolicy()
    if spec == "demand":
        return ScorePolicy(DemandScorer(city), city.edge_times)
    if spec.startswith("table:"):
        scorer = TableScorer.from_json(spec.split(":", 1)[1])
        if scorer.table.shape[0] != city.n:
            raise ValueError(f"score table is for {scorer.table.shape[0]} nodes, city has {city.n}")
        return ScorePolicy(scorer, city.edge_times)
    raise ValueError(f"unknown policy {spec!r}; use uniform, demand or table:<path>")


# ------------------------------------------------------------- environment
class ConstructionMDP:
    """Transition rules of route construction for one city and parameter set.

    With ``enforce_connectivity`` the action space is pruned whenever some
    demand is still unserved: halting is removed if continuing is possible,
    and extensions that would not serve any new demand are removed if some
    extension would.
    """

    def __init__(self, city: CityGraph, params: ProblemParams, sp: ShortestPathTable | None = None,
                 enforce_connectivity: bool = False, cost_model: CostModel | None = None):
        params.check_city(city)
        self.city = city
        self.params = params
        self.sp = sp if sp is not None else city.shortest_paths
        self.enforce_connectivity = enforce_connectivity
        self.cost_model = cost_model if cost_model is not None else CostModel(city, params, self.sp)
        n = city.n
        self._n = n
        self._dpos = city.demand > 0
        self._others = [np.delete(np.arange(n), i) for i in range(n)]
        self._ext_cache: tuple = (None, None)

    # -- states
    def initial_state(self, start_from=()) -> MdpState:
        finished = tuple(tuple(int(s) for s in r) for r in start_from)
        if len(finished) >= self.params.n_routes:
            raise ValueError(
                f"start network already has {len(finished)} routes (S={self.params.n_routes})"
            )
        return MdpState(finished, (), 1)

    def is_done(self, state: MdpState) -> bool:
        return len(state.finished) >= self.params.n_routes

    # -- action spaces
    def extension_actions(self, state: MdpState) -> ExtensionCandidates:
        """All legal extensions of the current route, before any pruning."""
        route = state.current
        cached_route, cached = self._ext_cache
        if cached_route == route and cached is not None:
            return cached
        sp, n, max_stops = self.sp, self._n, self.params.max_stops
        if not route:
            pairs = sp.unordered_pairs(max_stops)
            ids = pairs[:, 0] * n + pairs[:, 1]
            cands = ExtensionCandidates(sp, ids, np.zeros(len(ids), dtype=bool), route)
        else:
            room = max_stops - len(route)
            if room < 2:
                cands = ExtensionCandidates(sp, [], [], route)
            else:
                in_route = np.zeros(n, dtype=bool)
                in_route[list(route)] = True
                chunks, flags = [], []
                # paths starting next to the last stop are appended
                for i in self.city.neighbors(route[-1]):
                    if not in_route[i]:
                        chunks.append(i * n + self._others[i])
                        flags.append(np.zeros(n - 1, dtype=bool))
                # paths ending next to the first stop are prepended
                for j in self.city.neighbors(route[0]):
                    if not in_route[j]:
                        chunks.append(self._others[j] * n + j)
                        flags.append(np.ones(n - 1, dtype=bool))
                if chunks:
                    ids = np.concatenate(chunks)
                    pre = np.concatenate(flags)
                    ii, jj = np.divmod(ids, n)
                    ok = sp.lengths[ii, jj] <= room
                    ids, pre = ids[ok], pre[ok]
                    ok = ~(sp.member[ids] @ in_route)
                    cands = ExtensionCandidates(sp, ids[ok], pre[ok], route)
                else:
                    cands = ExtensionCandidates(sp, [], [], route)
        self._ext_cache = (route, cands)
        return cands

    def halt_actions(self, state: MdpState, extension_nonempty: bool) -> HaltChoice:
        size = len(state.current)
        p = self.params
        if size >= p.max_stops or not extension_nonempty:
            if size < p.min_stops:
                log.warning("route %s is below MIN=%d but cannot be extended; halting",
                            state.current, p.min_stops)
            return HaltChoice(can_halt=True, can_continue=False)
        if size < p.min_stops:
            return HaltChoice(can_halt=False, can_continue=True)
        return HaltChoice(can_halt=True, can_continue=True)

    def unserved_pairs(self, routes) -> int:
        """Number of ordered demand-positive node pairs with no transit path."""
        labels = _route_components(self._n, routes)
        return int((self._dpos & (labels[:, None] != labels[None, :])).sum())

    def connectivity_filter(self, state: MdpState, actions):
        """Prune ``actions`` so that construction keeps serving new demand."""
        routes = state.routes
        labels = _route_components(self._n, routes)
        split = labels[:, None] != labels[None, :]
        if not (self._dpos & split).any():
            return actions
        if isinstance(actions, HaltChoice):
            if actions.can_halt and actions.can_continue:
                return HaltChoice(can_halt=False, can_continue=True)
            return actions
        if len(actions) == 0:
            return actions
        n_comp = int(labels.max()) + 1
        onehot = np.zeros((self._n, n_comp))
        onehot[np.arange(self._n), labels] = 1.0
        comp_demand = onehot.T @ (self._dpos & split).astype(float) @ onehot
        touched = (actions.membership().astype(float) @ onehot) > 0
        if state.current:
            touched[:, labels[state.current[0]]] = True
        t = touched.astype(float)
        reduces = ((t @ comp_demand) * t).sum(axis=1) > 0
        if reduces.any():
            return actions.subset(reduces)
        return actions

    def legal_actions(self, state: MdpState):
        if self.is_done(state):
            raise IllegalActionError("episode is over")
        ext = self.extension_actions(state)
        if state.is_extension_step:
            actions = ext
        else:
            actions = self.halt_actions(state, len(ext) > 0)
        if self.enforce_connectivity:
            actions = self.connectivity_filter(state, actions)
        return actions

    # -- transitions
    def partial_cost(self, routes) -> float:
        """Cost without the stop-bound violation term."""
        return self.cost_model.cost(routes, size_penalty=False)

    def apply_action(self, state: MdpState, action: Action, compute_reward: bool = True,
                     check: bool = True) -> tuple[MdpState, float]:
        if check:
            self._check_action(state, action)
        if isinstance(action, Extend):
            path = tuple(action.path)
            if not state.current:
                current = path
            elif action.prepend:
                current = path + state.current
            else:
                current = state.current + path
            nxt = MdpState(state.finished, current, state.t + 1)
            reward = 0.0
            if compute_reward:
                reward = self.partial_cost(state.routes) - self.partial_cost(nxt.routes)
            return nxt, reward
        if action == HALT:
            return MdpState(state.finished + (state.current,), (), state.t + 1), 0.0
        if action == CONTINUE:
            return MdpState(state.finished, state.current, state.t + 1), 0.0
        raise IllegalActionError(f"unknown action {action!r}")

    def _check_action(self, state: MdpState, action: Action) -> None:
        legal = self.legal_actions(state)
        if isinstance(action, Extend):
            if not isinstance(legal, ExtensionCandidates) or legal.index_of(action) < 0:
                raise IllegalActionError(f"{action} is not a legal action at t={state.t}")
        elif not isinstance(legal, HaltChoice) or action not in legal.options:
            raise IllegalActionError(f"{action!r} is not a legal action at t={state.t}")


def _route_components(n: int, routes) -> np.ndarray:
    """Label nodes by connected component of the graph of route edges."""
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for r in routes:
        root = find(r[0])
        for s in r[1:]:
            other = find(s)
            if other != root:
                parent[other] = root
    roots = np.array([find(i) for i in range(n)])
    _, labels = np.unique(roots, return_inverse=True)
    return labels


# ------------------------------------------------------------- drivers
def initial_state() -> MdpState:
    return MdpState()


def rollout(policy: Policy, mdp: ConstructionMDP, start_from=(), rng=None,
            return_rewards: bool = False):
    """Run construction from ``start_from`` until S routes are finished.

    Returns the network, or ``(network, rewards)`` when ``return_rewards``.
    """
    rng = check_random_state(rng)
    state = mdp.initial_state(start_from)
    rewards = []
    while not mdp.is_done(state):
        actions = mdp.legal_actions(state)
        if isinstance(actions, ExtensionCandidates):
            if len(actions) == 0:
                raise RuntimeError(f"no extension available at t={state.t}")
            action = actions[policy.choose_extension(state, actions, rng)]
        else:
            options = actions.options
            if len(options) == 2:
                action = HALT if policy.choose_halt(state, rng) else CONTINUE
            else:
                action = options[0]
        state, reward = mdp.apply_action(state, action, compute_reward=return_rewards, check=False)
        if return_rewards:
            rewards.append(reward)
    net = TransitNetwork(state.finished)
    return (net, rewards) if return_rewards else net


def lc_sample(policy: Policy, mdp: ConstructionMDP, n_samples: int = 100, rng=None,
              cost_model: Optional[CostModel] = None, return_cost: bool = False):
    """Sample ``n_samples`` networks and keep the cheapest (first on ties).

    Each rollout draws from its own child stream of ``rng``, so the result
    depends only on the seed and the rollout index.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = check_random_state(rng)
    cm = cost_model if cost_model is not None else mdp.cost_model
    best, best_cost = None, np.inf
    for child in rng.spawn(n_samples):
        net = rollout(policy, mdp, (), child)
        c = cm.cost(net.routes)
        if c < best_cost:
            best, best_cost = net, c
    return (best, best_cost) if return_cost else best

"""Estimator-style wrappers: configure in the constructor, run with ``fit(city)``."""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .citygraph import CityGraph, ProblemParams
from .evolve import EaParams, run_ea
from .mdp import ConstructionMDP, make_policy
from .mdp import lc_sample as _lc_sample
from .network import CostModel


def _problem(est) -> ProblemParams:
    return ProblemParams(
        n_routes=est.n_routes, min_stops=est.min_stops, max_stops=est.max_stops,
        transfer_penalty=est.transfer_penalty, alpha=est.alpha, beta=est.beta,
    )


class ConstructionSampler(BaseEstimator):
    """Best of ``n_samples`` construction rollouts (LC-N).

    Fitted attributes: ``network_``, ``result_`` (an EvalResult) and
    ``problem_``.
    """

    def __init__(self, n_routes=6, min_stops=2, max_stops=8, alpha=1.0, beta=5.0,
                 transfer_penalty=300.0, n_samples=100, policy="uniform",
                 enforce_connectivity=False, random_state=None):
        self.n_routes = n_routes
        self.min_stops = min_stops
        self.max_stops = max_stops
        self.alpha = alpha
        self.beta = beta
        self.transfer_penalty = transfer_penalty
        self.n_samples = n_samples
        self.policy = policy
        self.enforce_connectivity = enforce_connectivity
        self.random_state = random_state

    def fit(self, city: CityGraph, y=None):
        self.problem_ = _problem(self)
        cm = CostModel(city, self.problem_)
        mdp = ConstructionMDP(city, self.problem_, cost_model=cm,
                              enforce_connectivity=self.enforce_connectivity)
        policy = make_policy(self.policy, city) if isinstance(self.policy, str) else self.policy
        self.network_ = _lc_sample(policy, mdp, self.n_samples, self.random_state, cost_model=cm)
        self.result_ = cm.evaluate(self.network_.routes)
        return self


class EvolutionaryDesigner(BaseEstimator):
    """Evolutionary network search; ``variant="combine"`` with the uniform
    policy is RC-EA.

    Fitted attributes: ``network_``, ``result_``, ``history_`` and
    ``problem_``.
    """

    def __init__(self, n_routes=6, min_stops=2, max_stops=8, alpha=1.0, beta=5.0,
                 transfer_penalty=300.0, population=10, iterations=400,
                 mutations_per_stage=10, p_delete=0.2, variant="ea", lc_samples=100,
                 policy="uniform", random_state=None):
        self.n_routes = n_routes
        self.min_stops = min_stops
        self.max_stops = max_stops
        self.alpha = alpha
        self.beta = beta
        self.transfer_penalty = transfer_penalty
        self.population = population
        self.iterations = iterations
        self.mutations_per_stage = mutations_per_stage
        self.p_delete = p_delete
        self.variant = variant
        self.lc_samples = lc_samples
        self.policy = policy
        self.random_state = random_state

    def fit(self, city: CityGraph, y=None):
        self.problem_ = _problem(self)
        policy = make_policy(self.policy, city) if isinstance(self.policy, str) else self.policy
        params = EaParams(
            population=self.population, iterations=self.iterations,
            mutations_per_stage=self.mutations_per_stage, p_delete=self.p_delete,
            variant=self.variant, lc_samples=self.lc_samples, policy=policy,
        )
        self.network_, self.result_, self.history_ = run_ea(
            city, params, self.problem_, self.random_state
        )
        return self

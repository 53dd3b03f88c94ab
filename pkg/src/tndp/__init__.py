"""Transit network design: cost model, construction MDP and evolutionary search."""

from .citygraph import (
    PRESETS,
    CityGraph,
    ProblemParams,
    ShortestPathTable,
    SyntheticCityConfig,
    build_shortest_paths,
    enforce_symmetry,
    generate_city,
    load_city,
    load_preset,
)
from .network import (
    CostModel,
    EvalResult,
    TransitNetwork,
    TransitTripTable,
    check_constraints,
    constraint_cost,
    cost_weights,
    operator_cost,
    passenger_cost,
    route_time,
    total_cost,
    transfer_metrics,
    transit_trip_times,
)
from .mdp import ConstructionMDP, ScorePolicy, UniformPolicy, lc_sample, make_policy, rollout
from .evolve import EaParams, run_ea

__version__ = "0.1.0"

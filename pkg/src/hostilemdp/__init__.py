"""Route synthesis for a vehicle crossing regions patrolled by adversaries."""

from .belief import (
    AdversaryBelief,
    BeliefSet,
    UpdateNotAllowed,
    enumerate_reachable,
    expectation,
    update_entered,
    update_left,
)
from .envmodel import (
    Environment,
    EnvironmentFormatError,
    Facet,
    MotionPrimitive,
    Region,
    adversary_loss_marginal,
    build_lost_table,
    combine_lost_marginals,
    load_environment,
    parse_environment,
    scale_rates,
)
from .mdpbuild import (
    LOST_SINK,
    Mdp,
    MdpBuilder,
    VehicleState,
    build_mdp,
    dump_mdp,
    export_prism,
    load_mdp,
    validate_mdp,
)
from .simrun import (
    Estimate,
    Trace,
    classify_step,
    estimate_success,
    prefix_frequency,
    simulate_run,
)
from .synth import (
    ConvergenceError,
    MissionStrategy,
    ValueResult,
    extract_policy,
    max_reach_lp,
    max_reach_vi,
    qualitative_reach,
    solve_reachability,
    synthesize_mission,
)

__version__ = "0.1.0"

__all__ = [
    "AdversaryBelief",
    "BeliefSet",
    "ConvergenceError",
    "Environment",
    "EnvironmentFormatError",
    "Estimate",
    "Facet",
    "LOST_SINK",
    "Mdp",
    "MdpBuilder",
    "MissionStrategy",
    "MotionPrimitive",
    "Region",
    "Trace",
    "UpdateNotAllowed",
    "ValueResult",
    "VehicleState",
    "adversary_loss_marginal",
    "build_lost_table",
    "build_mdp",
    "classify_step",
    "combine_lost_marginals",
    "dump_mdp",
    "enumerate_reachable",
    "estimate_success",
    "expectation",
    "export_prism",
    "extract_policy",
    "load_environment",
    "load_mdp",
    "max_reach_lp",
    "max_reach_vi",
    "parse_environment",
    "prefix_frequency",
    "qualitative_reach",
    "scale_rates",
    "simulate_run",
    "solve_reachability",
    "synthesize_mission",
    "update_entered",
    "update_left",
    "validate_mdp",
]

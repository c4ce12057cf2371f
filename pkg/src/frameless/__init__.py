"""Frameless ALOHA over cooperating base stations.

Library for analyzing, simulating, bounding, and optimizing frameless
ALOHA random access when user groups overlap the coverage areas of
multiple base stations that share retrieved packets over a backhaul.
"""

from .topology import (
    GroupSpec,
    NetworkTopology,
    TargetDegreeVector,
    TopologyError,
    full_topology,
    load_topology,
    serialize_topology,
)
from .degrees import (
    DegreePolynomial,
    edge_perspective,
    observation_node_dist,
    variable_node_dist,
)
from .walkgraph import (
    GuardError,
    RetrievabilityTable,
    build_retrievability_table,
    compute_w_coop,
    load_or_build_tables,
)
from .closedform import closed_form_w_m3, closed_form_for_topology
from .evolution import (
    EvolutionResult,
    PlrCurve,
    PeakResult,
    default_t_grid,
    diversity_gain,
    evolve_coop,
    evolve_noncoop,
    peak_search,
    plr_curve,
)
from .bounds import evolve_lower_bound, lower_bound_plr, upper_bound_throughput
from .simulator import (
    FrameResult,
    MonteCarloResult,
    SimulationSpec,
    monte_carlo,
    run_fixed_frame,
    run_frame,
    run_spatio_temporal,
)
from .optimizer import (
    FitnessResult,
    OptimizationResult,
    OptimizationSpec,
    fitness,
    optimize,
)

__version__ = "0.1.0"

SINGLE_BS_PEAK = 0.87
"""Asymptotic peak throughput of single-BS frameless ALOHA."""

"""Measure-style traffic flow on directed networks with switching-light optimization."""

from .adjoint import (
    AdjointField,
    CostBreakdown,
    duration_gradient,
    evaluate_cost,
    finite_difference_gradient,
    nonlocal_adjoint_terms,
    solve_adjoint,
)
from .avfleet import FleetRuntime, FleetState, simulate_coupled
from .control import (
    StepSignal,
    SwitchSchedule,
    junction_signal_complement,
    project_durations,
    reconstruct_control,
)
from .errors import (
    CFLError,
    ConstraintError,
    ScenarioFormatError,
    SolverError,
    TrafficFlowError,
    UnsupportedTopologyError,
    ValidationError,
)
from .fields import (
    DensityField,
    EdgeGrid,
    SpaceTimeField,
    discretize_density,
    edge_cdf_distance,
    integrate_space_time,
    make_grids,
)
from .forward import (
    ForwardProblem,
    SolverConfig,
    advance_step,
    limited_flux,
    simulate_forward,
)
from .network import (
    Edge,
    EdgePoint,
    Network,
    build_network,
    path_distance,
    visual_field,
)
from .optimizer import (
    DescentReport,
    MultiStartResult,
    SweepResult,
    descend,
    multi_start,
    sweep_single_switch,
)
from .scenario import (
    DistributionSchedule,
    InflowSchedule,
    KernelParams,
    Scenario,
    distribution_row,
    parse_scenario,
    parse_scenario_text,
    serialize_scenario,
)
from .velocity import (
    KernelTables,
    VelocityField,
    effective_velocity,
    interaction_velocity,
    light_interaction_velocity,
)

__version__ = "0.1.0"

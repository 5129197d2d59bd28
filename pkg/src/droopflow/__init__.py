"""Constrained network flow: problems, oracle, projected dynamics.

The package models a network of droop-controlled injection sources with
box power limits. It provides the optimization problem the limiting
controller solves implicitly, an independent QP oracle for it, the
projected primal-dual dynamics in nodal and edge coordinates, the
closed-form synchronous-frequency prediction, and a scenario-driven
simulation CLI.
"""

from .analysis import (
    EdgeSplit,
    FrequencyPrediction,
    edge_split,
    predict,
    reduced_quadratic,
    verify_cross_coordinates,
)
from .dynamics import (
    DROOP,
    EDGE_PD,
    NETWORKED,
    NODE_PD,
    SYSTEMS,
    IntegrationError,
    PrimalDualState,
    SyncMetrics,
    System,
    Trajectory,
    droop_rhs,
    edge_pd_rhs,
    integrate,
    networked_rhs,
    node_pd_rhs,
    node_pd_system,
    sync_metrics,
    tangent_project,
    zero_state,
)
from .graph import (
    EdgeTransform,
    NetworkGraph,
    build_transform,
    is_tree,
    project_off_consensus,
    to_edge_coords,
)
from .oracle import OracleSolution, recover_theta, solve
from .problem import (
    DEFAULT_ACTIVE_TOL,
    DEFAULT_KKT_TOL,
    ActiveSets,
    FlowProblem,
    KKTPoint,
    ValidationReport,
    active_sets,
    injections,
    kkt_residual_edge,
    kkt_residual_nodal,
    objective_nodal,
    validate,
    violation,
)
from .scenario import Scenario, ScenarioError, load_scenario
from .verify import SuiteReport, run_suite

__version__ = "0.1.0"

__all__ = [
    "ActiveSets",
    "DEFAULT_ACTIVE_TOL",
    "DEFAULT_KKT_TOL",
    "DROOP",
    "EDGE_PD",
    "EdgeSplit",
    "EdgeTransform",
    "FlowProblem",
    "FrequencyPrediction",
    "IntegrationError",
    "KKTPoint",
    "NETWORKED",
    "NODE_PD",
    "NetworkGraph",
    "OracleSolution",
    "PrimalDualState",
    "SYSTEMS",
    "Scenario",
    "ScenarioError",
    "SuiteReport",
    "SyncMetrics",
    "System",
    "Trajectory",
    "ValidationReport",
    "active_sets",
    "build_transform",
    "droop_rhs",
    "edge_pd_rhs",
    "edge_split",
    "injections",
    "integrate",
    "is_tree",
    "kkt_residual_edge",
    "kkt_residual_nodal",
    "load_scenario",
    "networked_rhs",
    "node_pd_rhs",
    "node_pd_system",
    "objective_nodal",
    "predict",
    "project_off_consensus",
    "recover_theta",
    "reduced_quadratic",
    "run_suite",
    "solve",
    "sync_metrics",
    "tangent_project",
    "to_edge_coords",
    "validate",
    "verify_cross_coordinates",
    "violation",
    "zero_state",
]

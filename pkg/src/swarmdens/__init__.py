"""Decentralized density control for planar agent swarms.

Agents estimate the swarm density around themselves with a smoothing
kernel and move against the gradient of the error between that estimate
and a commanded density. The package bundles the estimator, the
feedback law, a particle simulator with reflecting walls, grid solvers
that verify the closed loop behaves like a heat equation, and a
scenario-driven command line (`swarmdens`).
"""

from .control import ControlLaw, density_error
from .fields import (
    Domain,
    ScalarField,
    gaussian_mixture_field,
    grid_gradient,
    ingest_image,
    read_field_pgm,
    read_pgm,
    uniform_field,
    write_field_pgm,
)
from .kde import (
    DensityEstimate,
    NeighborGrid,
    SwarmState,
    build_neighbor_grid,
    density_on_grid,
    estimate_all_agents,
    estimate_density,
    neighbors_within,
    query_candidates,
)
from .kernels import (
    KERNELS,
    BandwidthPolicy,
    EpanechnikovKernel,
    GaussianKernel,
    Kernel,
    moment,
    roughness,
    select_bandwidth,
)
from .pde import (
    GridSolverConfig,
    cfl_limit,
    continuity_step,
    control_velocity_on_grid,
    heat_stability_limit,
    heat_step,
    l1_distance,
    lyapunov,
)
from .scenario import Scenario, ScenarioError, parse_scenario, write_manifest
from .simulate import (
    MetricsRecord,
    SimConfig,
    init_swarm,
    reflect_boundary,
    run,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BandwidthPolicy",
    "ControlLaw",
    "DensityEstimate",
    "Domain",
    "EpanechnikovKernel",
    "GaussianKernel",
    "GridSolverConfig",
    "KERNELS",
    "Kernel",
    "MetricsRecord",
    "NeighborGrid",
    "ScalarField",
    "Scenario",
    "ScenarioError",
    "SimConfig",
    "SwarmState",
    "build_neighbor_grid",
    "cfl_limit",
    "continuity_step",
    "control_velocity_on_grid",
    "density_error",
    "density_on_grid",
    "estimate_all_agents",
    "estimate_density",
    "gaussian_mixture_field",
    "grid_gradient",
    "heat_stability_limit",
    "heat_step",
    "ingest_image",
    "init_swarm",
    "l1_distance",
    "lyapunov",
    "moment",
    "neighbors_within",
    "parse_scenario",
    "query_candidates",
    "read_field_pgm",
    "read_pgm",
    "reflect_boundary",
    "roughness",
    "run",
    "select_bandwidth",
    "step",
    "uniform_field",
    "write_field_pgm",
    "write_manifest",
]

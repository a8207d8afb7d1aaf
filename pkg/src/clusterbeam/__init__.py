"""Weighted sum-rate beamforming with per-cluster power constraints.

The package solves the cell-free downlink precoding problem by working on the
low-dimensional combination-coefficient space reachable through each cluster's
channel rows, with a Riemannian conjugate gradient over a product of ellipsoids
(one per cluster power constraint). Baselines: the same solver on the product
of spheres in antenna space, eigen zero-forcing, and a sum-power WMMSE.
"""

from .errors import (
    BisectionFailed,
    ConfigError,
    DegenerateDirection,
    DegenerateNormal,
    DimensionMismatch,
    NonPositiveDistance,
    NotPositiveDefinite,
    RankDeficient,
)
from .linalg import HermitianFactor, Tolerances, cholesky, crandn, frob_inner, herm, logdet_hpd, solve_hpd
from .channel import (
    ChannelSet,
    SystemConfig,
    Topology,
    draw_channels,
    draw_unit_channels,
    in_hexagon,
    large_scale_gains,
    load_channels,
    load_point,
    make_topology,
    pathloss_db,
    save_channels,
    save_point,
)
from .reduction import (
    Dims,
    GradV,
    GradX,
    PointV,
    PointX,
    ReducedProblem,
    TangentV,
    TangentX,
    build_reduced,
    cluster_powers,
    lift,
    project_to_subspace,
    reduced_powers,
)
from .objective import RateReport, egrad_V, egrad_X, rates_stack, wsr_stack, wsr_V, wsr_X
from .geometry import (
    EllipsoidFactor,
    ProductManifold,
    feasibility_residual,
    metric,
    norm,
    on_manifold,
    project_tangent,
    random_point,
    retract,
    retract_many,
    tangency_residual,
    transport,
)
from .solver import RunReport, SolverParams, TraceRow, minimize, solve, write_trace
from .baselines import PrecoderOutput, ezf, sphere_rcg, wmmse_sum_power
from .bench import (
    BenchResult,
    CdfTable,
    ExperimentSpec,
    load_spec,
    run,
    run_trial,
    spec_hash,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "BenchResult",
    "BisectionFailed",
    "CdfTable",
    "ChannelSet",
    "ConfigError",
    "DegenerateDirection",
    "DegenerateNormal",
    "DimensionMismatch",
    "Dims",
    "EllipsoidFactor",
    "ExperimentSpec",
    "GradV",
    "GradX",
    "HermitianFactor",
    "NonPositiveDistance",
    "NotPositiveDefinite",
    "PointV",
    "PointX",
    "PrecoderOutput",
    "ProductManifold",
    "RankDeficient",
    "RateReport",
    "ReducedProblem",
    "RunReport",
    "SolverParams",
    "SystemConfig",
    "TangentV",
    "TangentX",
    "Tolerances",
    "Topology",
    "TraceRow",
    "build_reduced",
    "cholesky",
    "cluster_powers",
    "crandn",
    "draw_channels",
    "draw_unit_channels",
    "egrad_V",
    "egrad_X",
    "ezf",
    "feasibility_residual",
    "frob_inner",
    "herm",
    "in_hexagon",
    "large_scale_gains",
    "lift",
    "load_channels",
    "load_point",
    "load_spec",
    "logdet_hpd",
    "make_topology",
    "metric",
    "minimize",
    "norm",
    "on_manifold",
    "pathloss_db",
    "project_tangent",
    "project_to_subspace",
    "random_point",
    "rates_stack",
    "reduced_powers",
    "retract",
    "retract_many",
    "run",
    "run_trial",
    "save_channels",
    "save_point",
    "solve",
    "solve_hpd",
    "spec_hash",
    "sphere_rcg",
    "tangency_residual",
    "transport",
    "verify",
    "wmmse_sum_power",
    "write_trace",
    "wsr_V",
    "wsr_X",
    "wsr_stack",
    "__version__",
]

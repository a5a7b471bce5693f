"""Defocusing nonlinear Schroedinger equation on noncompact metric graphs.

Spectra of self-adjoint graph operators, mass-constrained energy ground
states, existence thresholds, exact star-graph stationary states, and
families of stationary branches at fixed frequency or fixed mass.
"""

__version__ = "0.1.0"

from . import errors
from .discretize import (
    AdaptiveTruncation,
    DiscreteSystem,
    FixedTruncation,
    GraphFunction,
    TruncatedGraph,
    assemble,
    functionals,
    truncate,
)
from .graphs import (
    DeltaCondition,
    Edge,
    EdgeSpec,
    GeneralCondition,
    GraphSpec,
    MetricGraph,
    VertexSpec,
    build_graph,
    delta_as_general,
    min_half_edge_length,
    validate_vertex_condition,
)
from .io import parse_graph_file, write_csv
from .multiplicity import (
    StationaryState,
    action,
    enumerate_branches,
    newton_stationary,
    normalized_family,
)
from .shooting import (
    HalflineProfile,
    ShootingSolution,
    check_bifurcation,
    halfline_state,
    halfline_tail_mass,
    mass_frequency_curve,
    solve_star_delta,
)
from .spectral import SpectralResult, bottom_of_spectrum, negative_spectrum
from .variational import (
    GroundStateResult,
    SolveOptions,
    TauCurve,
    ThresholdEstimate,
    detect_threshold,
    lagrange_multiplier,
    minimize_fixed_mass,
    minimize_global,
    tau_curve,
    threshold_with_truncation,
)

__all__ = [name for name in dir() if not name.startswith("_")]

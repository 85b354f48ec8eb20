"""Pseudo-spectral 2D incompressible MHD with magnetic-line topology analysis."""

from .fields import (
    ConfigurationError,
    SpectralField2D,
    StreamFunction,
    TaylorSpec,
    TorusGrid,
    c1_norm,
    eval_field,
    jacobian,
    l2_norm,
    leray_project,
    make_taylor,
    make_tilde_t1,
    sobolev_norm,
    stream_function,
    zero_field,
)
from .scenarios import ExperimentConfig, Report, load_config, run_scenario
from .solver import (
    BlowUpError,
    ForcingSpec,
    MHDState,
    SimConfig,
    TrajectoryRecorder,
    duhamel_remainder,
    heat_propagate,
    nonlinear_rhs,
    simulate,
    step,
)
from .topology import (
    CriticalPoint,
    Tolerances,
    TopologySignature,
    detect_saddle_connections,
    extract_signature,
    find_critical_points,
    flow_map,
    is_structurally_stable,
    signatures_equivalent,
    trace_integral_line,
    verify_frozen_in,
)

__all__ = [
    "BlowUpError",
    "ConfigurationError",
    "CriticalPoint",
    "ExperimentConfig",
    "ForcingSpec",
    "MHDState",
    "Report",
    "SimConfig",
    "SpectralField2D",
    "StreamFunction",
    "TaylorSpec",
    "Tolerances",
    "TopologySignature",
    "TorusGrid",
    "TrajectoryRecorder",
    "c1_norm",
    "detect_saddle_connections",
    "duhamel_remainder",
    "eval_field",
    "extract_signature",
    "find_critical_points",
    "flow_map",
    "heat_propagate",
    "is_structurally_stable",
    "jacobian",
    "l2_norm",
    "leray_project",
    "load_config",
    "make_taylor",
    "make_tilde_t1",
    "nonlinear_rhs",
    "run_scenario",
    "signatures_equivalent",
    "simulate",
    "sobolev_norm",
    "step",
    "stream_function",
    "trace_integral_line",
    "verify_frozen_in",
    "zero_field",
]
__version__ = "0.1.0"

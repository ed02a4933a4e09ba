"""Optimal transmission scheduling for clock synchronization in
single-server sensor networks: closed-form dynamics, maximum-principle
synthesis with bang and singular arcs, brute-force oracles, and a
stochastic network simulator."""

from .dynamics import (
    ControlSegment,
    InvalidControlError,
    ModelParams,
    PiecewiseControl,
    ProblemInstance,
    TrajectorySample,
    cost,
    integrate_control,
    propagate_r,
    r_at_times,
    segment_cost,
)
from .netsim import SimConfig, SimResult, compare_to_ode, simulate
from .oracle import DpConfig, dp_solve, parametric_search
from .pmp import (
    AtSwitchingCurveError,
    Extremal,
    ExtremalArc,
    SingularData,
    backward_orbit,
    h1_time_derivatives,
    hamiltonian,
    next_event_backward,
    singular_data,
    switching_h1,
)
from .synthesis import (
    RegimeLabel,
    StructureViolationError,
    SynthesisError,
    SynthesisResult,
    classify,
    classify_control,
    regime_map,
    synthesize,
    zero_regime_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "AtSwitchingCurveError",
    "ControlSegment",
    "DpConfig",
    "Extremal",
    "ExtremalArc",
    "InvalidControlError",
    "ModelParams",
    "PiecewiseControl",
    "ProblemInstance",
    "RegimeLabel",
    "SimConfig",
    "SimResult",
    "SingularData",
    "StructureViolationError",
    "SynthesisError",
    "SynthesisResult",
    "TrajectorySample",
    "backward_orbit",
    "classify",
    "classify_control",
    "compare_to_ode",
    "cost",
    "dp_solve",
    "h1_time_derivatives",
    "hamiltonian",
    "integrate_control",
    "next_event_backward",
    "parametric_search",
    "propagate_r",
    "r_at_times",
    "regime_map",
    "segment_cost",
    "simulate",
    "singular_data",
    "switching_h1",
    "synthesize",
    "zero_regime_threshold",
]

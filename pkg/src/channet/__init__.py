"""Boundary feedback stabilization of subcritical flows on channel networks.

The package computes non-uniform steady states on tree-shaped networks of
frictional channels, builds explicit Lyapunov weights with positivity
certificates for the linearized dynamics, screens terminal feedback gains
against their forbidden intervals, and simulates the closed-loop system to
measure exponential decay.
"""

from .characteristics import (
    CharCoeffs,
    coupling_coefficients,
    eigenvalues,
    nonlinear_change,
    nonlinear_inverse,
    reflection_coefficient,
    riemann_forward,
    riemann_inverse,
)
from .errors import (
    BadSplitSum,
    BoundarySolveFailure,
    CflViolation,
    ChannetError,
    CycleDetected,
    DegenerateFlux,
    DisconnectedChannel,
    EpsilonTooLarge,
    FormMismatch,
    JunctionDivergence,
    MissingGain,
    MultipleParents,
    NegativeFlux,
    NonPositiveV,
    ReflectionPole,
    RiccatiBlowup,
    RootSolveFailure,
    SimulationError,
    SteadyStateBlowup,
    SteadyStateError,
    SubcriticalLoss,
    SupercriticalStart,
    SupercriticalState,
    TerminalSolveFailure,
    TopologyError,
    WeightError,
    ZeroW,
)
from .gains import (
    GainRecord,
    boundary_constants,
    forbidden_interval,
    inlet_reflection,
    is_admissible,
    single_channel_conditions,
)
from .simulate import (
    Bump,
    LyapunovTrace,
    NetworkSimulator,
    SimState,
    decay_fit,
    mass_balance,
    run,
)
from .steady import (
    FeedbackLaw,
    SteadyProfile,
    critical_depth,
    feedback_law,
    integrate_channel_steady,
    solve_network_steady,
    steady_rhs,
)
from .topology import (
    ChannelSpec,
    NetworkTopology,
    network_from_dict,
    network_to_dict,
    traversal_order,
    validate_topology,
)
from .weights import (
    ChannelWeights,
    NetworkCertificate,
    PhiProfiles,
    WeightSet,
    certify_network,
    eta_bar_by_ode,
    eta_bar_closed,
    eta_eps,
    eta_zero,
    interior_matrix,
    junction_matrix,
    junction_reduction,
    lyapunov_value,
    m_profile,
    m_value,
    network_weights,
    phi_profiles,
    riccati_existence_margin,
    trunk_inlet_coefficient,
)

__version__ = "0.1.0"

__all__ = [
    "BadSplitSum",
    "BoundarySolveFailure",
    "Bump",
    "CflViolation",
    "ChannelSpec",
    "ChannelWeights",
    "ChannetError",
    "CharCoeffs",
    "CycleDetected",
    "DegenerateFlux",
    "DisconnectedChannel",
    "EpsilonTooLarge",
    "FeedbackLaw",
    "FormMismatch",
    "GainRecord",
    "JunctionDivergence",
    "LyapunovTrace",
    "MissingGain",
    "MultipleParents",
    "NegativeFlux",
    "NetworkCertificate",
    "NetworkSimulator",
    "NetworkTopology",
    "NonPositiveV",
    "PhiProfiles",
    "ReflectionPole",
    "RiccatiBlowup",
    "RootSolveFailure",
    "SimState",
    "SimulationError",
    "SteadyProfile",
    "SteadyStateBlowup",
    "SteadyStateError",
    "SubcriticalLoss",
    "SupercriticalStart",
    "SupercriticalState",
    "TerminalSolveFailure",
    "TopologyError",
    "WeightError",
    "WeightSet",
    "ZeroW",
    "boundary_constants",
    "certify_network",
    "coupling_coefficients",
    "critical_depth",
    "decay_fit",
    "eigenvalues",
    "eta_bar_by_ode",
    "eta_bar_closed",
    "eta_eps",
    "eta_zero",
    "feedback_law",
    "forbidden_interval",
    "inlet_reflection",
    "integrate_channel_steady",
    "interior_matrix",
    "is_admissible",
    "junction_matrix",
    "junction_reduction",
    "lyapunov_value",
    "m_profile",
    "m_value",
    "mass_balance",
    "network_from_dict",
    "network_to_dict",
    "network_weights",
    "nonlinear_change",
    "nonlinear_inverse",
    "phi_profiles",
    "reflection_coefficient",
    "riccati_existence_margin",
    "riemann_forward",
    "riemann_inverse",
    "run",
    "single_channel_conditions",
    "solve_network_steady",
    "steady_rhs",
    "traversal_order",
    "trunk_inlet_coefficient",
    "validate_topology",
]

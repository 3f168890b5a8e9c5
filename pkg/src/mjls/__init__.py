"""Mean-square stability analysis and stabilizing-policy synthesis for
switched linear systems whose mode switches follow a Markov decision
process.

Fixing a randomized policy collapses the MDP into a Markov chain and the
switched system into a Markov jump linear system; this package tests that
system's mean-square stability exactly (spectral lift, Lyapunov SDP) and
searches the policy space for a stabilizing distribution (convex
relaxation, proximal coordinate descent, grid oracle).  Every claimed
certificate is re-checked by direct arithmetic.
"""

from .errors import (
    CardinalityError,
    DimensionError,
    InvalidPolicyError,
    MalformedProblemError,
    MjlsError,
    ModelFormatError,
    SimulationDivergedError,
    SolverFailureError,
)
from .model import (
    Dtmc,
    Mdp,
    NoiseSpec,
    Policy,
    SwitchedLinearSystem,
    ValidationReport,
    enumerate_deterministic_policies,
    induce_dtmc,
    validate_system,
)
from .conic import (
    LmiBlock,
    SdpProblem,
    SdpSolution,
    dump_problem,
    equality_residual,
    lmi_residual,
    solve_sdp,
)
from .stability import (
    LyapunovCertificate,
    StabilityReport,
    check_mss_diagonal,
    check_mss_lyapunov,
    check_mss_spectral,
    mss_lift,
    verify_policy_certificate,
)
from .synthesis import (
    CdParams,
    SynthesisResult,
    brute_force_policy_search,
    cd_step_V,
    cd_step_policy,
    synth_coordinate_descent,
    synth_sdp_relaxation,
)
from .simulate import (
    DiagnosticReport,
    MomentTrace,
    mss_empirical_diagnostic,
    simulate_trajectories,
    trace_to_csv,
)
from .casegen import (
    TransportSpec,
    WirelessSpec,
    build_transportation_model,
    build_wireless_model,
    default_transport_spec,
    deterministic_gap_instance,
    gen_random_instance,
    random_transport_spec,
    random_wireless_spec,
)
from .modelio import (
    load_model,
    load_policy,
    model_from_dict,
    model_to_dict,
    result_to_dict,
    reverify_result,
    save_model,
    save_result,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

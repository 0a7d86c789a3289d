"""Dense-matrix toolkit for restricted Gibbs states of lattice spin models:
correlation and Markov diagnostics, belief-propagation operators, Petz
recovery and a staged patching circuit that assembles the global Gibbs state
from local pieces."""

__version__ = "0.1.0"

from .lattice import GeometryError, Lattice, Region, Tile, Tiling, annulus, ball, core, distance, make_lattice, tiling_plan
from .operators import (
    DimensionCapError,
    InvariantError,
    NotHermitianError,
    Operator,
    embed,
    fidelity,
    partial_trace,
    tensor,
    trace_distance,
    trace_norm,
    von_neumann_entropy,
)
from .hamiltonian import LocalHamiltonian, ModelError, build_model
from .gibbs import (
    DecayFit,
    DecayProfile,
    StrongSubadditivityError,
    cmi,
    clustering_profile,
    correlation_bracket,
    covariance,
    decay_fit,
    gibbs_state,
    local_indistinguishability,
    local_indistinguishability_profile,
    markov_profile,
    mutual_information,
)
from .bp import BPOperator, bp_decay_profile, exact_bp_operator, localize
from .recovery import RecoveryChannel, apply_recovery, choi_matrix, petz_map, recovery_error, union_compose
from .circuit import CircuitPlan, PreparationReport, build_plan, prepare_1d, run_plan
from .schedule import PowerLawFit, depth_schedule, strictly_local_depth

__all__ = [name for name in dir() if not name.startswith("_")]

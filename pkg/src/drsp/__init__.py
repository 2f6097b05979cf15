"""Statevector simulation of deterministic remote state preparation over
non-maximally entangled qudit channels, with the probabilistic filter
scheme as a baseline."""
from .core import (
    ChannelState,
    DensityMatrix,
    PureState,
    SchmidtForm,
    TargetState,
    UnitaryMatrix,
    apply_unitary,
    fidelity,
    make_state,
    partial_trace,
    schmidt_decompose,
    schmidt_rank,
    tensor,
)
from .measurement import OutcomeHistogram, measure_qudit, sample_counts, tomography_qubit
from .protocols import (
    OwnershipLedger,
    ProtocolResult,
    assert_locality,
    run_conventional_rsp,
    run_optimal_drsp,
    schmidt_normalize_channel,
    theoretical_success_probability,
    verify_factorization,
)

__version__ = "0.1.0"

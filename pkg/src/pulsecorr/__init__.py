"""Learning drift-correcting control pulses for a two-qubit spin system."""

from .dynamics import SystemSpec, evolve, fidelity, fidelity_error
from .grape import OptimConfig, OptimResult, generate_dcp, generate_ncp, grape_gradient, optimize_pulses
from .quantum import RngSeed, haar_unitary, kron, liouvillian, matrix_exp, pauli, unitary_superoperator

__version__ = "0.1.0"

__all__ = [
    "OptimConfig",
    "OptimResult",
    "RngSeed",
    "SystemSpec",
    "evolve",
    "fidelity",
    "fidelity_error",
    "generate_dcp",
    "generate_ncp",
    "grape_gradient",
    "haar_unitary",
    "kron",
    "liouvillian",
    "matrix_exp",
    "optimize_pulses",
    "pauli",
    "unitary_superoperator",
]

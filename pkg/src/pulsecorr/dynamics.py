"""Piecewise-constant evolution of the controlled two-qubit system.

Pulses are ``(n, 2)`` float arrays; column 0 drives ``sigma_x (x) 1`` and
column 1 drives ``sigma_z (x) 1``. Slot 0 is applied first, so the total
propagator is ``P[n-1] @ ... @ P[1] @ P[0]``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .quantum import kron, liouvillian, matrix_exp, pauli, unitary_superoperator

HILBERT_DIM = 4
CONTROL_NAMES = ("x", "z")


def heisenberg_h0() -> np.ndarray:
    """XX + YY + ZZ exchange between the two qubits."""
    return sum(kron(pauli(a), pauli(a)) for a in "XYZ")


def control_generators() -> tuple[np.ndarray, np.ndarray]:
    eye = pauli("I")
    return kron(pauli("X"), eye), kron(pauli("Z"), eye)


def _hermitian(a: np.ndarray, tol: float = 1e-12) -> bool:
    return np.allclose(a, a.conj().T, atol=tol, rtol=0)


@dataclass(frozen=True)
class SystemSpec:
    """Everything needed to integrate the master equation for given pulses.

    ``drift_h`` already includes the drift strength. ``tag`` is a free-form
    identifier recorded in datasets and checkpoints to detect mismatches.
    """

    base_h: np.ndarray = field(default_factory=heisenberg_h0)
    control_gens: tuple[np.ndarray, ...] = field(default_factory=control_generators)
    drift_h: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), dtype=complex))
    lindblads: tuple[tuple[np.ndarray, float], ...] = ()
    horizon: float = 6.0
    slots: int = 32
    tag: str = "none"

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.slots < 1:
            raise ValueError("slots must be >= 1")
        for name in ("base_h", "drift_h"):
            if not _hermitian(np.asarray(getattr(self, name))):
                raise ValueError(f"{name} must be Hermitian")
        for _, rate in self.lindblads:
            if rate < 0:
                raise ValueError("Lindblad rates must be non-negative")

    @property
    def dt(self) -> float:
        return self.horizon / self.slots

    @property
    def is_closed(self) -> bool:
        return all(rate == 0 for _, rate in self.lindblads)

    def static_h(self) -> np.ndarray:
        return np.asarray(self.base_h, dtype=complex) + np.asarray(self.drift_h, dtype=complex)

    def hamiltonians(self, pulses: np.ndarray) -> np.ndarray:
        """Per-slot Hamiltonians, shape ``(n, 4, 4)``."""
        gens = np.stack(self.control_gens)
        return self.static_h()[None] + np.einsum("nc,cij->nij", pulses, gens)

    def with_horizon(self, horizon: float, slots: int) -> "SystemSpec":
        return dataclasses.replace(self, horizon=horizon, slots=slots)

    def without_drift(self) -> "SystemSpec":
        return dataclasses.replace(
            self, drift_h=np.zeros_like(self.drift_h), lindblads=(), tag="none"
        )


def check_pulses(sys: SystemSpec, pulses: np.ndarray) -> np.ndarray:
    pulses = np.asarray(pulses, dtype=float)
    if pulses.shape != (sys.slots, len(sys.control_gens)):
        raise ValueError(f"pulses shape {pulses.shape} != ({sys.slots}, {len(sys.control_gens)})")
    if not np.all(np.isfinite(pulses)):
        raise ValueError("pulses contain non-finite values")
    if np.any(np.abs(pulses) > 1.0):
        raise ValueError("pulse amplitudes must lie in [-1, 1]")
    return pulses


def slot_generator(sys: SystemSpec, pulses: np.ndarray, i: int) -> np.ndarray:
    """Liouvillian that is constant on slot ``i``."""
    pulses = check_pulses(sys, pulses)
    if not 0 <= i < sys.slots:
        raise IndexError(f"slot {i} out of range for {sys.slots} slots")
    return liouvillian(sys.hamiltonians(pulses[i : i + 1])[0], sys.lindblads)


def closed_slot_propagators(sys: SystemSpec, pulses: np.ndarray):
    """Per-slot unitaries via eigendecomposition of each slot Hamiltonian.

    Returns ``(props, evals, evecs)`` with ``props[i] = exp(-i H_i dt)``.
    """
    hs = sys.hamiltonians(pulses)
    evals, evecs = np.linalg.eigh(hs)
    phases = np.exp(-1j * sys.dt * evals)
    props = (evecs * phases[:, None, :]) @ evecs.conj().transpose(0, 2, 1)
    return props, evals, evecs


def open_slot_propagators(sys: SystemSpec, pulses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot superoperator propagators ``exp(L_i dt)`` and the generators ``L_i``."""
    gens = np.stack([liouvillian(h, sys.lindblads) for h in sys.hamiltonians(pulses)])
    return matrix_exp(gens * sys.dt), gens


def chain(props: np.ndarray) -> np.ndarray:
    """Time-ordered product with slot 0 rightmost."""
    out = np.eye(props.shape[-1], dtype=complex)
    for p in props:
        out = p @ out
    return out


def evolve_unitary(sys: SystemSpec, pulses: np.ndarray) -> np.ndarray:
    """4x4 propagator of the Hamiltonian part only (Lindblad terms ignored)."""
    pulses = check_pulses(sys, pulses)
    props, _, _ = closed_slot_propagators(sys, pulses)
    return chain(props)


def evolve(sys: SystemSpec, pulses: np.ndarray, fast: bool = True) -> np.ndarray:
    """Evolution superoperator X(T) for the given pulses.

    For closed systems with ``fast=True`` the 4x4 unitary is propagated and
    lifted at the end; otherwise the full 16x16 Liouvillian path is used.
    """
    pulses = check_pulses(sys, pulses)
    if fast and sys.is_closed:
        return unitary_superoperator(evolve_unitary(sys, pulses))
    props, _ = open_slot_propagators(sys, pulses)
    return chain(props)


def superop_dim(s: np.ndarray) -> int:
    """Hilbert-space dimension N of an N^2 x N^2 superoperator."""
    n = int(round(np.sqrt(s.shape[0])))
    if s.ndim != 2 or s.shape[0] != s.shape[1] or n * n != s.shape[0]:
        raise ValueError(f"not a superoperator shape: {s.shape}")
    return n


def fidelity_error(y: np.ndarray, x: np.ndarray) -> float:
    """Squared Frobenius distance between superoperators scaled by 1/(2N^2)."""
    y = np.asarray(y)
    x = np.asarray(x)
    if y.shape != x.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {x.shape}")
    n = superop_dim(y)
    diff = y - x
    return float(np.vdot(diff, diff).real / (2 * n * n))


def fidelity(y: np.ndarray, x: np.ndarray) -> float:
    return 1.0 - fidelity_error(y, x)


def pulse_fidelity(sys: SystemSpec, pulses: np.ndarray, y: np.ndarray) -> float:
    return fidelity(y, evolve(sys, pulses))

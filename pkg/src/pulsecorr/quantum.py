"""Dense linear algebra for two-qubit control problems.

Matrices are plain ``complex128`` numpy arrays. Superoperators act on
row-stacked density matrices, ``vec(A @ rho @ B) == kron(A, B.T) @ vec(rho)``
with ``vec(rho) == rho.reshape(-1)``, so the channel ``rho -> U rho U^dag``
is represented by ``kron(U, U.conj())``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

_PAULI = {
    "I": np.array([[1, 0], [0, 1]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True)
class RngSeed:
    """A (seed, stream) pair that fully determines a random stream."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            value = getattr(self, name)
            if not 0 <= int(value) < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {value}")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream: int) -> "RngSeed":
        return RngSeed(self.seed, stream)


def pauli(axis: str) -> np.ndarray:
    """Return the Pauli matrix for ``axis`` in {"X", "Y", "Z", "I"}."""
    try:
        return _PAULI[axis.upper()].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli axis {axis!r}") from None


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def _check_square(a: np.ndarray, name: str = "matrix") -> None:
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")


def matrix_exp(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Pade approximant.

    Accepts a single square matrix or a stack of them with shape ``(..., d, d)``.
    """
    a = np.asarray(a, dtype=complex)
    _check_square(a)
    return scipy.linalg.expm(a)


def haar_unitary(dim: int, seed: RngSeed | np.random.Generator) -> np.ndarray:
    """Sample a Haar-distributed ``dim x dim`` unitary.

    Draws a complex Ginibre matrix, takes its QR decomposition and rotates the
    columns of Q so that R has a positive real diagonal. ``seed`` may also be
    an already-running generator.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = seed.generator() if isinstance(seed, RngSeed) else seed
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def unitary_superoperator(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    _check_square(u, "u")
    return np.kron(u, u.conj())


def liouvillian(h: np.ndarray, lindblads: Sequence[tuple[np.ndarray, float]] = ()) -> np.ndarray:
    """Generator of the GKSL equation as a row-stacked superoperator.

    Args:
        h: Hermitian ``d x d`` Hamiltonian.
        lindblads: ``(L_j, rate_j)`` pairs with ``rate_j >= 0``.

    Returns:
        ``d^2 x d^2`` matrix ``G`` with ``d vec(rho)/dt = G @ vec(rho)``.
    """
    h = np.asarray(h, dtype=complex)
    _check_square(h, "h")
    d = h.shape[0]
    eye = np.eye(d, dtype=complex)
    gen = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op, rate in lindblads:
        op = np.asarray(op, dtype=complex)
        if op.shape != (d, d):
            raise ValueError(f"Lindblad operator shape {op.shape} does not match ({d}, {d})")
        if rate < 0:
            raise ValueError(f"Lindblad rate must be non-negative, got {rate}")
        ldl = op.conj().T @ op
        gen = gen + rate * (np.kron(op, op.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T))
    return gen


def vec(rho: np.ndarray) -> np.ndarray:
    """Row-stack a matrix into a vector."""
    return np.asarray(rho).reshape(-1)


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    return np.asarray(v).reshape(d, d)


def ketbra(i: int, j: int, dim: int = 2) -> np.ndarray:
    """Return ``|i><j|`` in dimension ``dim``."""
    out = np.zeros((dim, dim), dtype=complex)
    out[i, j] = 1.0
    return out

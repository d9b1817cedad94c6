"""GRAPE gradients and bounded pulse optimization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dynamics import (
    HILBERT_DIM,
    SystemSpec,
    check_pulses,
    closed_slot_propagators,
    fidelity_error,
    open_slot_propagators,
    superop_dim,
)
from .quantum import RngSeed, haar_unitary, kron, matrix_exp, pauli, unitary_superoperator

logger = logging.getLogger(__name__)

NCP_THRESHOLD = 0.999
DCP_THRESHOLD = 0.99
MAX_REINITS = 5


def _cumulative(props: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Prefix/suffix products around each slot.

    ``before[i] = P[i-1] ... P[0]`` and ``after[i] = P[n-1] ... P[i+1]``.
    """
    n, d, _ = props.shape
    before = np.empty_like(props)
    after = np.empty_like(props)
    acc = np.eye(d, dtype=complex)
    for i in range(n):
        before[i] = acc
        acc = props[i] @ acc
    total = acc
    acc = np.eye(d, dtype=complex)
    for i in range(n - 1, -1, -1):
        after[i] = acc
        acc = acc @ props[i]
    return before, after, total


def _phi(z: np.ndarray) -> np.ndarray:
    """(exp(z) - 1) / z with the removable singularity filled in."""
    small = np.abs(z) < 1e-12
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, np.expm1(safe) / safe)


def _closed_value_and_grad(sys: SystemSpec, pulses: np.ndarray, y: np.ndarray):
    n_dim = HILBERT_DIM
    props, evals, evecs = closed_slot_propagators(sys, pulses)
    before, after, v = _cumulative(props)
    y4 = y.reshape(n_dim, n_dim, n_dim, n_dim).conj()
    # Tr(Y^dag (V (x) conj V)) = sum_ij M_ij V_ij
    m = np.einsum("ikjl,kl->ij", y4, v.conj())
    k = np.einsum("ikjl,ij->kl", y4, v)
    overlap = np.sum(m * v)
    y_norm2 = np.vdot(y, y).real
    value = (y_norm2 + n_dim * n_dim - 2.0 * overlap.real) / (2 * n_dim * n_dim)

    # dF = -(1/N^2) Re Tr(C dV), dV = after dP before
    c = m.T + k.conj().T
    q = before @ c[None] @ after
    mu = -1j * sys.dt * evals
    # divided differences of exp on the eigenvalues of -i dt H
    diff = mu[:, :, None] - mu[:, None, :]
    dd = np.exp(mu)[:, None, :] * _phi(diff)
    wh = evecs.conj().transpose(0, 2, 1)
    q_eig = wh @ q @ evecs
    grad = np.empty_like(pulses)
    for j, gen in enumerate(sys.control_gens):
        e_eig = wh @ (-1j * sys.dt * gen)[None] @ evecs
        tr = np.sum(q_eig.transpose(0, 2, 1) * e_eig * dd, axis=(1, 2))
        grad[:, j] = -tr.real / (n_dim * n_dim)
    return float(value), grad


def lifted_control_generators(sys: SystemSpec) -> list[np.ndarray]:
    """Derivative of the Liouvillian with respect to each control amplitude."""
    eye = np.eye(HILBERT_DIM, dtype=complex)
    return [-1j * (np.kron(g, eye) - np.kron(eye, g.T)) for g in sys.control_gens]


def frechet_blocks(gen_dt: np.ndarray, dir_dt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """exp(A) and its Frechet derivative along E from ``exp([[A, E], [0, A]])``."""
    d = gen_dt.shape[-1]
    big = np.zeros(gen_dt.shape[:-2] + (2 * d, 2 * d), dtype=complex)
    big[..., :d, :d] = gen_dt
    big[..., d:, d:] = gen_dt
    big[..., :d, d:] = dir_dt
    e = matrix_exp(big)
    return e[..., :d, :d], e[..., :d, d:]


def _open_value_and_grad(sys: SystemSpec, pulses: np.ndarray, y: np.ndarray):
    props, gens = open_slot_propagators(sys, pulses)
    before, after, x = _cumulative(props)
    n_dim = superop_dim(y)
    diff = x - y
    value = np.vdot(diff, diff).real / (2 * n_dim * n_dim)
    # dF = (1/N^2) Re Tr((X - Y)^dag after dP before)
    q = before @ diff.conj().T[None] @ after
    grad = np.empty_like(pulses)
    for j, g in enumerate(lifted_control_generators(sys)):
        _, dp = frechet_blocks(gens * sys.dt, np.broadcast_to(g * sys.dt, gens.shape))
        tr = np.einsum("nij,nji->n", q, dp)
        grad[:, j] = tr.real / (n_dim * n_dim)
    return float(value), grad


def value_and_grad(sys: SystemSpec, pulses: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Fidelity error and its exact gradient with respect to every amplitude."""
    pulses = np.asarray(pulses, dtype=float)
    y = np.asarray(y, dtype=complex)
    if sys.is_closed:
        return _closed_value_and_grad(sys, pulses, y)
    return _open_value_and_grad(sys, pulses, y)


def grape_gradient(sys: SystemSpec, pulses: np.ndarray, y: np.ndarray) -> np.ndarray:
    return value_and_grad(sys, check_pulses(sys, pulses), y)[1]


@dataclass
class OptimConfig:
    max_iters: int = 2000
    target_fidelity: float = NCP_THRESHOLD
    learning_rate: float = 0.05
    grad_tol: float = 1e-9
    seed: RngSeed = field(default_factory=lambda: RngSeed(0))

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.target_fidelity <= 1:
            raise ValueError("target_fidelity must lie in (0, 1]")


@dataclass
class OptimResult:
    pulses: np.ndarray
    fidelity: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)


def optimize_pulses(
    sys: SystemSpec, y: np.ndarray, init: np.ndarray, cfg: OptimConfig
) -> OptimResult:
    """Adam descent on the fidelity error with clamping and step rejection.

    A trial step that increases the error is discarded and the step size
    halved, so the accepted iterates have non-increasing error.
    """
    b1, b2, eps = 0.9, 0.999, 1e-8
    pulses = np.clip(check_pulses(sys, init), -1.0, 1.0)
    err, grad = value_and_grad(sys, pulses, y)
    history = [err]
    m = np.zeros_like(pulses)
    v = np.zeros_like(pulses)
    lr = cfg.learning_rate
    t = 0
    it = 0
    while it < cfg.max_iters:
        if 1.0 - err >= cfg.target_fidelity or np.max(np.abs(grad)) < cfg.grad_tol:
            break
        it += 1
        t += 1
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad * grad
        step = (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        trial = np.clip(pulses - lr * step, -1.0, 1.0)
        trial_err, trial_grad = value_and_grad(sys, trial, y)
        if trial_err <= err:
            pulses, err, grad = trial, trial_err, trial_grad
            lr = min(lr * 1.05, cfg.learning_rate * 4)
            history.append(err)
        else:
            lr *= 0.5
            m[:] = 0.0
            v[:] = 0.0
            t = 0
            if lr < 1e-10:
                break
    fid = 1.0 - err
    return OptimResult(pulses, fid, it, fid >= cfg.target_fidelity, history)


def ncp_target(u: np.ndarray) -> np.ndarray:
    """Superoperator of ``U (x) 1`` for a single-qubit ``U``."""
    return unitary_superoperator(kron(u, pauli("I")))


def random_pulses(rng: np.random.Generator, slots: int, controls: int = 2) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(slots, controls))


class NcpResult(NamedTuple):
    u_target: np.ndarray
    pulses: np.ndarray
    fidelity: float
    iterations: int
    attempts: int


def generate_ncp(
    seed: RngSeed,
    cfg: OptimConfig,
    sys: SystemSpec | None = None,
    u_target: np.ndarray | None = None,
):
    """Sample a Haar single-qubit target and find drift-free pulses for ``U (x) 1``.

    Up to ``MAX_REINITS`` uniform random inits are tried. Returns an
    :class:`NcpResult` (iterations summed over all attempts), or ``None`` when
    no attempt reaches ``cfg.target_fidelity``.
    """
    sys = (sys or SystemSpec()).without_drift()
    rng = seed.generator()
    u = haar_unitary(2, rng)
    if u_target is not None:
        u = np.asarray(u_target, dtype=complex)
    y = ncp_target(u)
    iterations = 0
    for attempt in range(MAX_REINITS):
        init = random_pulses(rng, sys.slots, len(sys.control_gens))
        res = optimize_pulses(sys, y, init, cfg)
        iterations += res.iterations
        if res.converged:
            return NcpResult(u, res.pulses, res.fidelity, iterations, attempt + 1)
        logger.debug("seed %s attempt %d stalled at F=%.6f", seed, attempt, res.fidelity)
    logger.warning("seed %s: no NCP reached F >= %s", seed, cfg.target_fidelity)
    return None


def generate_dcp(
    sys_with_drift: SystemSpec, ncp: np.ndarray, y: np.ndarray, cfg: OptimConfig
) -> OptimResult:
    """Local optimization in the drifted system seeded at the NCP."""
    return optimize_pulses(sys_with_drift, y, ncp, cfg)

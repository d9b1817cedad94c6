import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulsecorr.quantum import (
    RngSeed,
    haar_unitary,
    kron,
    ketbra,
    liouvillian,
    matrix_exp,
    pauli,
    unitary_superoperator,
    unvec,
    vec,
)

from conftest import random_density, random_hermitian

I2 = np.eye(2)


def test_pauli_matrices():
    assert np.array_equal(pauli("X"), [[0, 1], [1, 0]])
    assert np.array_equal(pauli("Y"), [[0, -1j], [1j, 0]])
    assert np.array_equal(pauli("Z"), [[1, 0], [0, -1]])
    assert np.array_equal(pauli("I"), I2)
    with pytest.raises(ValueError):
        pauli("Q")


def test_kron_examples():
    assert np.array_equal(kron(pauli("X"), I2), [[0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0]])
    assert np.array_equal(kron(I2, I2), np.eye(4))
    assert np.array_equal(kron(pauli("X"), pauli("Z")), [[0, 0, 1, 0], [0, 0, 0, -1], [1, 0, 0, 0], [0, -1, 0, 0]])


def test_kron_index_formula(rng):
    a = rng.standard_normal((2, 3)) + 1j * rng.standard_normal((2, 3))
    b = rng.standard_normal((3, 2))
    k = kron(a, b)
    for i in range(2):
        for j in range(3):
            for p in range(3):
                for q in range(2):
                    assert k[i * 3 + p, j * 2 + q] == a[i, j] * b[p, q]


def test_kron_associative_bilinear(rng):
    for _ in range(10):
        a, b, c, a2 = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) for _ in range(4))
        assert np.allclose(kron(kron(a, b), c), kron(a, kron(b, c)), atol=1e-12)
        s = 0.7 - 0.3j
        assert np.allclose(kron(s * a + a2, b), s * kron(a, b) + kron(a2, b), atol=1e-12)


def test_matrix_exp_examples():
    assert np.allclose(matrix_exp(np.zeros((4, 4))), np.eye(4), atol=0)
    rot = matrix_exp(-1j * np.pi / 2 * pauli("X"))
    assert np.allclose(rot, [[0, -1j], [-1j, 0]], atol=1e-14)


def test_matrix_exp_matches_eigendecomposition(rng):
    for _ in range(10):
        h = random_hermitian(rng, 4)
        lam, v = np.linalg.eigh(h)
        oracle = v @ np.diag(np.exp(-1j * lam)) @ v.conj().T
        assert np.linalg.norm(matrix_exp(-1j * h) - oracle) < 1e-10


def test_matrix_exp_skew_hermitian_is_unitary(rng):
    u = matrix_exp(-1j * random_hermitian(rng, 16, 3.0))
    assert np.linalg.norm(u.conj().T @ u - np.eye(16)) < 1e-12


def test_matrix_exp_inverse(rng):
    for _ in range(10):
        a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        a *= 5.0 / np.linalg.norm(a, 2)
        assert np.linalg.norm(matrix_exp(a) @ matrix_exp(-a) - np.eye(4)) < 1e-10


def test_matrix_exp_rejects_non_square():
    with pytest.raises(ValueError):
        matrix_exp(np.zeros((2, 3)))


@pytest.mark.parametrize("dim", [1, 2, 4, 7])
def test_haar_unitary_contract(dim):
    for stream in range(5):
        u = haar_unitary(dim, RngSeed(3, stream))
        assert np.linalg.norm(u.conj().T @ u - np.eye(dim)) < 1e-12
        assert abs(abs(np.linalg.det(u)) - 1) < 1e-12


def test_haar_unitary_deterministic():
    a = haar_unitary(4, RngSeed(99, 7))
    b = haar_unitary(4, RngSeed(99, 7))
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, haar_unitary(4, RngSeed(99, 8)))


def test_haar_second_moment():
    # E|Tr U|^2 = 1 for Haar U(d)
    rng = RngSeed(2718).generator()
    traces = np.array([np.trace(haar_unitary(2, rng)) for _ in range(100_000)])
    assert abs(np.mean(np.abs(traces) ** 2) - 1.0) < 0.02


def test_rng_seed_validation():
    with pytest.raises(ValueError):
        RngSeed(-1)
    with pytest.raises(ValueError):
        RngSeed(0, 2**64)


def test_unitary_superoperator_examples():
    assert np.array_equal(unitary_superoperator(np.eye(4)), np.eye(16))
    y = unitary_superoperator(kron(pauli("X"), I2))
    assert abs(np.trace(y)) < 1e-15
    u = haar_unitary(4, RngSeed(1))
    y = unitary_superoperator(u)
    assert np.linalg.norm(y.conj().T @ y - np.eye(16)) < 1e-12
    with pytest.raises(ValueError):
        unitary_superoperator(np.zeros((2, 3)))


def test_unitary_superoperator_acts_on_row_stacked_states(rng):
    u = haar_unitary(4, RngSeed(5))
    rho = random_density(rng, 4)
    out = unvec(unitary_superoperator(u) @ vec(rho))
    assert np.allclose(out, u @ rho @ u.conj().T, atol=1e-13)


def test_unitary_superoperator_homomorphism():
    for k in range(10):
        u = haar_unitary(4, RngSeed(10, k))
        v = haar_unitary(4, RngSeed(11, k))
        lhs = unitary_superoperator(u @ v)
        rhs = unitary_superoperator(u) @ unitary_superoperator(v)
        assert np.linalg.norm(lhs - rhs) < 1e-10


def test_liouvillian_zero():
    assert np.array_equal(liouvillian(np.zeros((4, 4))), np.zeros((16, 16)))


def test_liouvillian_closed_matches_unitary_path(rng):
    for t in (0.3, 1.0, 6.0):
        h = random_hermitian(rng, 4)
        lhs = matrix_exp(liouvillian(h) * t)
        rhs = unitary_superoperator(matrix_exp(-1j * h * t))
        assert np.linalg.norm(lhs - rhs) < 1e-10


def test_liouvillian_matches_master_equation_rhs(rng):
    h = random_hermitian(rng, 4)
    ls = [(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)), 0.3), (kron(pauli("Z"), I2), 0.1)]
    rho = random_density(rng, 4)
    rhs = -1j * (h @ rho - rho @ h)
    for op, rate in ls:
        ldl = op.conj().T @ op
        rhs += rate * (op @ rho @ op.conj().T - 0.5 * (ldl @ rho + rho @ ldl))
    assert np.allclose(unvec(liouvillian(h, ls) @ vec(rho)), rhs, atol=1e-12)


def test_liouvillian_unital_fixes_identity(rng):
    h = random_hermitian(rng, 4)
    gen = liouvillian(h, [(kron(pauli("Z"), I2), 0.5), (kron(I2, pauli("Z")), 0.2)])
    assert np.linalg.norm(gen @ vec(np.eye(4) / 4)) < 1e-12


def test_liouvillian_errors():
    with pytest.raises(ValueError):
        liouvillian(np.eye(4), [(np.eye(2), 0.1)])
    with pytest.raises(ValueError):
        liouvillian(np.eye(4), [(np.eye(4), -0.1)])


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    rates=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=3),
    t=st.floats(0.01, 5.0),
)
def test_lindblad_evolution_preserves_trace_and_hermiticity(seed, rates, t):
    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, 4)
    ls = [(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)), r) for r in rates]
    rho = unvec(matrix_exp(liouvillian(h, ls) * t) @ vec(random_density(rng, 4)))
    assert abs(np.trace(rho) - 1) < 1e-10
    assert np.linalg.norm(rho - rho.conj().T) < 1e-10


def test_ketbra():
    assert np.array_equal(ketbra(0, 1), [[0, 1], [0, 0]])

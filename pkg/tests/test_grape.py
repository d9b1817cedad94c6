import numpy as np
import pytest

from pulsecorr.dynamics import SystemSpec, evolve, fidelity_error, pulse_fidelity
from pulsecorr.grape import (
    OptimConfig,
    _open_value_and_grad,
    generate_dcp,
    generate_ncp,
    grape_gradient,
    ncp_target,
    optimize_pulses,
    random_pulses,
    value_and_grad,
)
from pulsecorr.quantum import RngSeed, haar_unitary, ketbra, kron, pauli, unitary_superoperator

from oracles import central_difference

I2 = np.eye(2)
SY1 = kron(pauli("Y"), I2)
LOWER = kron(ketbra(0, 1), I2)


def fd_gradient(sys, pulses, y, step=1e-5):
    return central_difference(lambda p: fidelity_error(y, evolve(sys, p, fast=False)), pulses, step)


def rel_err(a, b):
    return np.max(np.abs(a - b)) / np.max(np.abs(b))


@pytest.mark.parametrize("k", range(4))
def test_gradient_closed_matches_finite_differences(k, sy_drift):
    rng = np.random.default_rng(k)
    p = rng.uniform(-0.99, 0.99, (32, 2))
    y = ncp_target(haar_unitary(2, RngSeed(8, k)))
    assert rel_err(grape_gradient(sy_drift, p, y), fd_gradient(sy_drift, p, y)) < 1e-6


@pytest.mark.parametrize("k", range(2))
def test_gradient_open_matches_finite_differences(k):
    rng = np.random.default_rng(100 + k)
    sys = SystemSpec(lindblads=((LOWER, 0.05), (kron(pauli("Z"), I2), 0.02)), slots=8, horizon=1.5)
    p = rng.uniform(-0.99, 0.99, (8, 2))
    y = ncp_target(haar_unitary(2, RngSeed(9, k)))
    assert rel_err(grape_gradient(sys, p, y), fd_gradient(sys, p, y)) < 1e-5


def test_gradient_with_non_unitary_target(sy_drift, rng):
    # a generic superoperator target exercises the full closed-path overlap formula
    p = rng.uniform(-1, 1, (32, 2))
    y = evolve(SystemSpec(lindblads=((LOWER, 0.3),)), rng.uniform(-1, 1, (32, 2)))
    assert rel_err(grape_gradient(sy_drift, p, y), fd_gradient(sy_drift, p, y)) < 1e-6


def test_eigen_and_augmented_block_derivatives_agree(sy_drift, rng):
    p = rng.uniform(-1, 1, (32, 2))
    y = ncp_target(haar_unitary(2, RngSeed(2)))
    v1, g1 = value_and_grad(sy_drift, p, y)
    v2, g2 = _open_value_and_grad(sy_drift, p, y)
    assert abs(v1 - v2) < 1e-12
    assert np.max(np.abs(g1 - g2)) < 1e-12


def test_gradient_vanishes_at_exact_target(sy_drift, rng):
    p = rng.uniform(-1, 1, (32, 2))
    y = evolve(sy_drift, p)
    err, grad = value_and_grad(sy_drift, p, y)
    assert abs(err) < 1e-13
    assert np.max(np.abs(grad)) < 1e-12


def test_optimize_returns_optimal_init_unchanged(sy_drift, rng):
    p = rng.uniform(-1, 1, (32, 2))
    res = optimize_pulses(sy_drift, evolve(sy_drift, p), p, OptimConfig())
    assert res.iterations == 0 and res.converged
    assert np.array_equal(res.pulses, p)


def test_optimize_monotone_and_clamped(sy_drift):
    rng = np.random.default_rng(3)
    y = ncp_target(haar_unitary(2, RngSeed(3)))
    res = optimize_pulses(sy_drift, y, random_pulses(rng, 32), OptimConfig(learning_rate=0.2, max_iters=300))
    assert np.all(np.diff(res.history) <= 0)
    assert np.all(np.abs(res.pulses) <= 1.0)
    assert abs(res.fidelity - pulse_fidelity(sy_drift, res.pulses, y)) < 1e-12


def test_optimize_never_worse_than_init(sy_drift):
    rng = np.random.default_rng(4)
    y = ncp_target(haar_unitary(2, RngSeed(4)))
    init = random_pulses(rng, 32)
    res = optimize_pulses(sy_drift, y, init, OptimConfig(max_iters=5))
    assert res.fidelity >= pulse_fidelity(sy_drift, init, y) - 1e-12


def test_optim_config_validation():
    with pytest.raises(ValueError):
        OptimConfig(max_iters=0)
    with pytest.raises(ValueError):
        OptimConfig(target_fidelity=1.5)


def test_ncp_for_identity_target():
    sys = SystemSpec()
    y = ncp_target(I2)
    assert pulse_fidelity(sys, np.zeros((32, 2)), y) < 0.999
    res = generate_ncp(RngSeed(1), OptimConfig(), u_target=I2)
    assert res is not None and res.fidelity >= 0.999


def test_ncp_record_is_self_consistent_and_deterministic():
    a = generate_ncp(RngSeed(21, 4), OptimConfig())
    b = generate_ncp(RngSeed(21, 4), OptimConfig())
    assert a.pulses.tobytes() == b.pulses.tobytes()
    assert a.u_target.tobytes() == b.u_target.tobytes()
    refit = pulse_fidelity(SystemSpec(), a.pulses, ncp_target(a.u_target))
    assert abs(refit - a.fidelity) < 1e-10
    assert a.fidelity >= 0.999


def test_ncp_convergence_rate():
    ok = 0
    for k in range(20):
        res = generate_ncp(RngSeed(77, k), OptimConfig(max_iters=2000))
        ok += res is not None and res.iterations <= 2000
    assert ok >= 19


def _ncps(count, seed=31):
    return [generate_ncp(RngSeed(seed, k), OptimConfig()) for k in range(count)]


def test_dcp_without_drift_is_the_ncp():
    ncp = _ncps(1)[0]
    res = generate_dcp(SystemSpec(), ncp.pulses, ncp_target(ncp.u_target), OptimConfig())
    assert np.linalg.norm(res.pulses - ncp.pulses) == 0.0


def test_dcp_convergence_at_weak_drift(sy_drift):
    ok = 0
    ncps = _ncps(20)
    for ncp in ncps:
        res = generate_dcp(sy_drift, ncp.pulses, ncp_target(ncp.u_target), OptimConfig())
        ok += res.fidelity >= 0.99
    assert ok >= 18


def test_dcp_distance_grows_with_drift_and_is_local():
    ncps = _ncps(20)
    medians = []
    mismatched = []
    for gamma in (0.2, 0.4, 0.6, 0.8):
        sys = SystemSpec(drift_h=gamma * SY1)
        dist = []
        for k, ncp in enumerate(ncps):
            dcp = generate_dcp(sys, ncp.pulses, ncp_target(ncp.u_target), OptimConfig()).pulses
            dist.append(np.linalg.norm(dcp - ncp.pulses))
            if gamma == 0.2:
                other = ncps[(k + 1) % len(ncps)].pulses
                mismatched.append(np.linalg.norm(dcp - other))
        medians.append(np.median(dist))
        if gamma == 0.2:
            assert np.median(dist) < np.median(mismatched)
    assert all(a < b for a, b in zip(medians, medians[1:]))


def test_dcp_high_fidelity_exists_for_strong_mixed_drift():
    drift = 0.8 * (0.8 * kron(pauli("X"), I2) + 0.2 * SY1)
    sys = SystemSpec(drift_h=drift)
    cfg = OptimConfig()
    for ncp in _ncps(5, seed=5):
        y = ncp_target(ncp.u_target)
        best = generate_dcp(sys, ncp.pulses, y, cfg).fidelity
        rng = np.random.default_rng(0)
        # the NCP-seeded local search can stall in a box-constrained minimum
        for _ in range(10):
            if best >= 0.99:
                break
            best = max(best, optimize_pulses(sys, y, random_pulses(rng, 32), cfg).fidelity)
        assert best >= 0.99

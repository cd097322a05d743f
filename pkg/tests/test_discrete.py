"""The discrete Brownian dynamics, its dilations, and the toy Fock register.

Oracles: the free walk (N = H = 0) reduces to a binomial distribution in
closed form; the exact Kraus pair inherits completeness from unitarity of
the interaction; the truncated pair's completeness defect has an explicit
polynomial expansion; the register evolution must reproduce the iterated
channel after tracing out the probes.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import binom

from oqbm.discrete import (
    LatticeField,
    OQBMParams,
    ToyFockRegister,
    default_half_width,
    dilation_check,
    interaction_unitary,
    kraus_exact,
    kraus_truncated,
    oqbm_kernel,
    oqbm_step,
    probe_measurement_unravel,
    probe_operator,
    toyfock_evolve,
    toyfock_reduced_state,
    walk_ensemble,
)
from oqbm.errors import CapacityError, ContractViolation, DimensionError, PaddingError
from oqbm.linalg import check_unitary, dagger, random_hermitian

S3 = np.diag([1.0, -1.0]).astype(complex)
SM = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PLUS = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)


def _params(tau=1e-3, n=None, h=None, m=None):
    n = 0.6 * S3 + 0.3 * SM if n is None else n
    h = 0.2 * SX if h is None else h
    return OQBMParams(N=n, H=h, tau=tau, M=m)


def test_params_validation():
    with pytest.raises(ContractViolation):
        OQBMParams(N=S3, H=np.array([[0, 1], [0, 0]], dtype=complex), tau=1e-3)
    with pytest.raises(ContractViolation):
        OQBMParams(N=S3, H=np.zeros((2, 2)), tau=0.0)
    with pytest.raises(DimensionError):
        OQBMParams(N=S3, H=np.zeros((2, 2)), tau=1e-3, M=np.zeros((3, 3)))
    p = _params()
    assert abs(p.delta - np.sqrt(p.tau)) == 0.0


def test_truncated_completeness_defect_expansion():
    # sum B*B - I = tau^{3/2}(N*M + M*N) + tau^2((-iH - N*N/2)*(..) + M*M)
    p = _params(tau=1e-3, m=0.4j * S3)
    b_plus, b_minus = kraus_truncated(p)
    s = dagger(b_plus) @ b_plus + dagger(b_minus) @ b_minus
    core = -1j * p.H - 0.5 * (dagger(p.N) @ p.N)
    expected = (
        p.tau ** 1.5 * (dagger(p.N) @ p.M + dagger(p.M) @ p.N)
        + p.tau ** 2 * (dagger(core) @ core + dagger(p.M) @ p.M)
    )
    assert np.max(np.abs(s - np.eye(2) - expected)) < 1e-15


def test_exact_pair_is_complete_to_machine_precision():
    p = _params(tau=3e-3)
    k_plus, k_minus = kraus_exact(p)
    s = dagger(k_plus) @ k_plus + dagger(k_minus) @ k_minus
    assert np.max(np.abs(s - np.eye(2))) < 1e-14


def test_exact_pair_rejects_drift_term():
    with pytest.raises(ContractViolation):
        kraus_exact(_params(m=0.1 * S3))


def test_exact_matches_truncated_at_three_halves_order():
    p1 = _params(tau=1e-3)
    p2 = _params(tau=1e-4)
    gap1 = max(np.max(np.abs(a - b)) for a, b in zip(kraus_exact(p1), kraus_truncated(p1)))
    gap2 = max(np.max(np.abs(a - b)) for a, b in zip(kraus_exact(p2), kraus_truncated(p2)))
    r1, r2 = gap1 / p1.tau ** 1.5, gap2 / p2.tau ** 1.5
    assert 0.5 < r1 / r2 < 2.0


def test_interaction_unitary_first_order():
    p = _params(tau=1e-4)
    v = interaction_unitary(p)
    check_unitary(v)
    e10 = np.zeros((2, 2))
    e10[1, 0] = 1.0
    first = (
        np.eye(4)
        - 1j * p.tau * np.kron(p.H, np.eye(2))
        + p.delta * (np.kron(p.N, e10) - np.kron(dagger(p.N), e10.T))
    )
    assert np.max(np.abs(v - first)) < 5.0 * p.tau


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([1e-2, 1e-3, 1e-4]))
def test_exact_completeness_property(seed, tau):
    rng = np.random.default_rng(seed)
    n = random_hermitian(2, rng) + 1j * random_hermitian(2, rng)
    h = random_hermitian(2, rng)
    p = OQBMParams(N=n, H=h, tau=tau)
    k_plus, k_minus = kraus_exact(p)
    s = dagger(k_plus) @ k_plus + dagger(k_minus) @ k_minus
    assert np.max(np.abs(s - np.eye(2))) < 1e-12


def test_free_walk_is_binomial():
    p = OQBMParams(N=np.zeros((2, 2)), H=np.zeros((2, 2)), tau=1e-2)
    n_steps = 8
    field = LatticeField.point_mass(PLUS, p, half_width=n_steps + 1)
    for _ in range(n_steps):
        field = oqbm_step(p, field, use_exact=True)
    traces = field.site_traces()
    center = n_steps + 1
    pmf = binom.pmf(np.arange(n_steps + 1), n_steps, 0.5)
    for k in range(n_steps + 1):
        site = center - n_steps + 2 * k
        assert abs(traces[site] - pmf[k]) < 1e-14
    # odd sites never occupied after an even number of steps
    assert np.max(np.abs(traces[center - n_steps + 1:center + n_steps:2])) == 0.0


def test_field_boundary_policies():
    p = _params(tau=1e-2)
    field = LatticeField.point_mass(PLUS, p, half_width=1)
    stepped = oqbm_step(p, field, use_exact=True)
    stepped = oqbm_step(p, stepped, use_exact=True)
    assert stepped.leak > 0.0
    assert abs(stepped.total_trace() + stepped.leak - 1.0) < 1e-12

    refl = LatticeField.point_mass(PLUS, p, half_width=1, boundary_policy="reflect")
    refl = oqbm_step(p, oqbm_step(p, refl, use_exact=True), use_exact=True)
    assert refl.leak == 0.0
    assert abs(refl.total_trace() - 1.0) < 1e-12

    with pytest.raises(ContractViolation):
        LatticeField.point_mass(PLUS, p, half_width=1, boundary_policy="open")


def test_dilation_check_exact_vs_truncated():
    p = _params(tau=1e-3)
    field = LatticeField.point_mass(PLUS, p, half_width=3)
    assert dilation_check(p, field, use_exact=True) < 1e-12
    trunc = dilation_check(p, field, use_exact=False)
    assert 0.0 < trunc < 1e-3
    with pytest.raises(PaddingError):
        dilation_check(p, LatticeField.point_mass(PLUS, p, half_width=1))


def test_oqbm_kernel_reproduces_lattice_step():
    p = _params(tau=2e-3)
    kernel = oqbm_kernel(p, half_width=4)
    from oqbm.oqw import DiagonalState, oqw_apply

    s = oqw_apply(kernel, DiagonalState({0: PLUS}))
    field = oqbm_step(p, LatticeField.point_mass(PLUS, p, half_width=4), use_exact=True)
    for offset in (-1, 1):
        site = 4 + offset
        assert np.max(np.abs(s.sites[offset] - field.site_matrices[site])) < 1e-15


def test_default_half_width_covers_ballistic_spread():
    p = _params(tau=1e-3, n=S3, h=np.zeros((2, 2)))
    half = default_half_width(p, t_final=1.0)
    # speed of N + N* is 2, six-sigma diffusive margin on top
    assert half * p.delta >= 2.0


def test_toyfock_register_contracts():
    with pytest.raises(CapacityError):
        ToyFockRegister.pure(np.array([1.0, 0.0]), 0, 3, 13)
    reg = ToyFockRegister.pure(np.array([1.0, 1.0]), 1, 3, 2)
    assert abs(np.linalg.norm(reg.state_vector) - 1.0) < 1e-12
    with pytest.raises(ContractViolation):
        ToyFockRegister(2, 3, 1, np.ones(12))


def test_toyfock_orders_agree():
    p = _params(tau=5e-3)
    psi0 = ToyFockRegister.pure(np.array([1.0, 0.5 + 0.2j]), 3, 7, 3)
    a = toyfock_evolve(p, psi0, 3, order="interleaved")
    b = toyfock_evolve(p, psi0, 3, order="shifts-last")
    assert np.max(np.abs(a.state_vector - b.state_vector)) < 1e-13
    with pytest.raises(CapacityError):
        toyfock_evolve(p, psi0, 4)
    with pytest.raises(ContractViolation):
        toyfock_evolve(p, psi0, 2, order="sideways")


def test_toyfock_duality_with_iterated_channel():
    p = _params(tau=4e-3)
    n_probes, half = 4, 5
    n_sites = 2 * half + 1
    vec = np.array([1.0, 0.3 - 0.4j])
    vec = vec / np.linalg.norm(vec)
    psi0 = ToyFockRegister.pure(vec, half, n_sites, n_probes)
    reduced = toyfock_reduced_state(toyfock_evolve(p, psi0, n_probes))

    field = LatticeField.point_mass(np.outer(vec, vec.conj()), p, half)
    for _ in range(n_probes):
        field = oqbm_step(p, field, use_exact=True)
    target = np.zeros((2, n_sites, 2, n_sites), dtype=complex)
    for i in range(n_sites):
        target[:, i, :, i] = field.site_matrices[i]
    gap = np.max(np.abs(reduced - target.reshape(2 * n_sites, 2 * n_sites)))
    assert gap < 1e-13


def test_probe_operators_commute_across_probes():
    dims = (2, 3, 2, 2)
    a = probe_operator(dims, 0, 0, 1)
    b = probe_operator(dims, 1, 1, 0)
    assert np.max(np.abs(a @ b - b @ a)) == 0.0
    assert np.max(np.abs(dagger(probe_operator(dims, 0, 0, 1)) - probe_operator(dims, 0, 1, 0))) == 0.0
    with pytest.raises(DimensionError):
        probe_operator(dims, 0, 0, 2)


def test_walk_ensemble_matches_scalar_sampler():
    p = _params(tau=1e-3)
    rho0 = PLUS
    pos, states, mean_states, checkpoints = walk_ensemble(
        p, rho0, 0.0, 150, 30, seed=77
    )
    for i in (0, 13, 29):
        tr = probe_measurement_unravel(p, rho0, 0.0, 150, seed=77, path_index=i)
        assert tr.positions[-1] == pos[i]
        assert np.array_equal(np.asarray(tr.states[-1]), states[i])
    assert checkpoints[0] == 0 and checkpoints[-1] == 150
    assert abs(np.trace(mean_states[-1]).real - 1.0) < 1e-10


def test_walk_ensemble_thread_invariance():
    p = _params(tau=1e-3)
    out1 = walk_ensemble(p, PLUS, 0.0, 60, 50, seed=3, threads=1)
    out4 = walk_ensemble(p, PLUS, 0.0, 60, 50, seed=3, threads=4)
    for a, b in zip(out1, out4):
        assert np.array_equal(a, b)


def test_walk_positions_live_on_the_lattice():
    p = _params(tau=4e-3)
    tr = probe_measurement_unravel(p, PLUS, 0.25, 40, seed=1)
    steps = np.asarray(tr.positions)
    k = np.round((steps - 0.25) / p.delta)
    assert np.max(np.abs(steps - (0.25 + p.delta * k))) < 1e-12
    assert abs(steps[0] - 0.25) == 0.0


def test_walk_mean_state_matches_channel_iterates():
    # ensemble average over trajectories estimates the iterated lattice
    # channel's gyroscope marginal
    p = _params(tau=2e-3)
    n_steps, n_paths = 40, 6000
    _, _, mean_states, checkpoints = walk_ensemble(
        p, PLUS, 0.0, n_steps, n_paths, seed=12
    )
    from oqbm.discrete import gyro_step

    rho = PLUS.copy()
    for _ in range(n_steps):
        rho = gyro_step(p, rho, use_exact=True)
    gap = np.max(np.abs(mean_states[-1] - rho))
    assert gap < 5.0 / np.sqrt(n_paths)

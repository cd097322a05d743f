"""Record structure of measured evolutions and the consistency certificate.

The vertex-walk dilation must pass every certificate to rounding precision;
a Haar-random evolution on the same registers must fail them by a visible
margin. Record laws are cross-checked against a hand-computed Markov chain
and against single-time Born probabilities.
"""

import itertools

import numpy as np
import pytest

from oqbm.channels import PointerMap
from oqbm.errors import CapacityError, ContractViolation, DimensionError
from oqbm.linalg import dagger, partial_trace, trace_distance
from oqbm.nondemolition import (
    MeasuredEvolution,
    check_nondemolition,
    consistency_check,
    cyclic_pointer_map,
    exact_unraveling,
    generic_measured_evolution,
    noisy_pointer_state,
    oqw_measured_evolution,
    pointer_response,
    walk_record_law,
)
from oqbm.oqw import OQWKernel, classical_walk_kernel

RHO_G = np.array([[0.7, 0.2 - 0.1j], [0.2 + 0.1j, 0.3]], dtype=complex)


def _hadamard_cycle(n=3):
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / 2.0
    vertices = tuple(range(n))
    edges = []
    kraus = {}
    for x in range(n):
        for y in ((x + 1) % n, (x - 1) % n):
            edges.append((x, y))
            kraus[(x, y)] = h.astype(complex)
    return OQWKernel(vertices, tuple(edges), kraus)


def _random_unitary(d, seed):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def test_evolution_validation():
    u = _random_unitary(4, 1)
    eye4 = np.eye(4, dtype=complex)
    part = [np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex)]
    with pytest.raises(ContractViolation):
        MeasuredEvolution(2, 2, (0, 1), (u, u), (None, part))
    with pytest.raises(DimensionError):
        MeasuredEvolution(2, 2, (0, 1), (eye4,), (None, part))
    bad_part = [np.diag([1.0, 0.5]).astype(complex), np.diag([0.0, 0.5]).astype(complex)]
    with pytest.raises(ContractViolation):
        MeasuredEvolution(2, 2, (0, 1), (eye4, u), (None, bad_part))
    short = [np.diag([1.0, 0.0]).astype(complex)]
    with pytest.raises(ContractViolation):
        MeasuredEvolution(2, 2, (0, 1), (eye4, u), (None, short))


def test_heisenberg_factor_both_projector_layouts():
    u = _random_unitary(4, 7)
    eye4 = np.eye(4, dtype=complex)
    diag_part = [np.diag([1.0, 0.0]).astype(complex), np.diag([0.0, 1.0]).astype(complex)]
    plus = np.full((2, 2), 0.5, dtype=complex)
    minus = np.array([[0.5, -0.5], [-0.5, 0.5]], dtype=complex)
    rotated_part = [plus, minus]
    for part in (diag_part, rotated_part):
        ev = MeasuredEvolution(2, 2, (0, 1), (eye4, u), (None, part))
        for x in (0, 1):
            a = ev.heisenberg_factor(1, x)
            direct = dagger(u) @ np.kron(np.eye(2), part[x]) @ u
            assert np.max(np.abs(dagger(a) @ a - direct)) < 1e-12
            assert np.max(np.abs(ev.heisenberg_projector(1, x) - direct)) < 1e-12


def test_walk_certificate_passes_generic_fails():
    ev, _ = oqw_measured_evolution(_hadamard_cycle(), 0, 2)
    rep = check_nondemolition(ev)
    assert rep.passed
    assert rep.max_commutator < 1e-12
    assert rep.max_factor_defect < 1e-12

    broken, _ = generic_measured_evolution(2, 3, 2, seed=5)
    bad = check_nondemolition(broken)
    assert not bad.passed
    assert bad.max_commutator > 1e-3


def test_unraveling_law_and_marginals():
    kernel = _hadamard_cycle()
    ev, rho_b = oqw_measured_evolution(kernel, 0, 2)
    res = exact_unraveling(ev, RHO_G, rho_b)
    assert abs(sum(res.probabilities.values()) - 1.0) < 1e-12

    # single-time marginals must match the plain Born law of the pulled-back
    # record projector on the initial product state
    rho_tot = np.kron(RHO_G, rho_b)
    for k_pos, t in enumerate(res.measured_times):
        law = res.marginal(k_pos)
        for x in range(3):
            born = float(np.trace(rho_tot @ ev.heisenberg_projector(t, x)).real)
            assert abs(law[x] - born) < 1e-11

    # the record average of conditional states is the reduced evolved state
    u = ev.unitaries[ev.measured_times[-1]]
    evolved = u @ rho_tot @ dagger(u)
    reduced = partial_trace(evolved, (2, ev.dim_b), keep=0)
    assert np.max(np.abs(res.mean_state() - reduced)) < 1e-11


def test_unmeasured_time_equals_marginalized_record():
    kernel = _hadamard_cycle()
    ev, rho_b = oqw_measured_evolution(kernel, 0, 2)
    joint = exact_unraveling(ev, RHO_G, rho_b)

    skip_first = MeasuredEvolution(
        dim_g=ev.dim_g,
        dim_b=ev.dim_b,
        times=ev.times,
        unitaries=ev.unitaries,
        partitions=(None, None, ev.partitions[2]),
    )
    coarse = exact_unraveling(skip_first, RHO_G, rho_b)
    for (x2,), p in coarse.probabilities.items():
        summed = sum(joint.probabilities[(x1, x2)] for x1 in range(3))
        assert abs(p - summed) < 1e-10


def test_predicted_state_matches_conditional_mixture():
    kernel = _hadamard_cycle()
    ev, rho_b = oqw_measured_evolution(kernel, 0, 2)
    res = exact_unraveling(ev, RHO_G, rho_b)
    t_last = ev.measured_times[-1]
    seen = 0
    for x1 in range(3):
        p_x1 = sum(res.probabilities[(x1, x2)] for x2 in range(3))
        if p_x1 < 1e-14:
            # a cycle walker must move, so staying put is a null record
            with pytest.raises(ContractViolation):
                res.predicted_state((x1,), t_last)
            continue
        mix = np.zeros((2, 2), dtype=complex)
        for x2 in range(3):
            if res.conditional_states[(x1, x2)] is not None:
                mix += res.probabilities[(x1, x2)] * res.conditional_states[(x1, x2)]
        mix /= p_x1
        predicted = res.predicted_state((x1,), t_last)
        assert np.max(np.abs(predicted - mix)) < 1e-10
        seen += 1
    assert seen == 2


def test_record_law_matches_hand_markov_chain():
    p = np.array([[0.3, 0.7], [0.6, 0.4]])
    kernel = classical_walk_kernel(p, dim=2)
    probs, states = walk_record_law(kernel, np.eye(2) / 2.0, 0, 2)
    expected = {
        (0, 0): 0.09,
        (0, 1): 0.21,
        (1, 0): 0.42,
        (1, 1): 0.28,
    }
    for hist, val in expected.items():
        assert abs(probs[hist] - val) < 1e-14
        assert np.max(np.abs(states[hist] - np.eye(2) / 2.0)) < 1e-14


def test_record_law_agrees_with_unraveling():
    kernel = _hadamard_cycle()
    ev, rho_b = oqw_measured_evolution(kernel, 0, 2)
    res = exact_unraveling(ev, RHO_G, rho_b)
    probs, states = walk_record_law(kernel, RHO_G, 0, 2)
    for xs in res.probabilities:
        assert abs(res.probabilities[xs] - probs[xs]) < 1e-10
        if states[xs] is not None and res.conditional_states[xs] is not None:
            assert trace_distance(states[xs], res.conditional_states[xs]) < 1e-10


def test_pointer_helpers():
    pm = cyclic_pointer_map(3)
    assert pm.inverse(1, 0) == 2
    sigma = noisy_pointer_state(3, fidelity=0.8)
    assert abs(np.trace(sigma).real - 1.0) < 1e-14
    nu = pointer_response(pm, sigma)
    assert np.max(np.abs(nu.sum(axis=0) - 1.0)) < 1e-14
    assert abs(nu[1, 1] - 0.8) < 1e-14

    perfect = pointer_response(pm, noisy_pointer_state(3, fidelity=1.0))
    assert np.max(np.abs(perfect - np.eye(3))) < 1e-14

    with pytest.raises(ContractViolation):
        PointerMap((0, 1), (0, 1), {(x, y): 0 for x in (0, 1) for y in (0, 1)})


def test_consistency_certificate():
    kernel = _hadamard_cycle()
    ev, rho_b = oqw_measured_evolution(kernel, 0, 2)
    pointers = [
        (cyclic_pointer_map(3), noisy_pointer_state(3, 0.85)),
        (cyclic_pointer_map(3), noisy_pointer_state(3, 0.7)),
    ]
    rep = consistency_check(ev, RHO_G, rho_b, pointers)
    assert rep.passed
    assert rep.tv_distance < 1e-10
    assert rep.max_trace_distance < 1e-10
    assert abs(sum(rep.law_indirect.values()) - 1.0) < 1e-10

    broken, bath = generic_measured_evolution(2, 3, 2, seed=5)
    bad = consistency_check(broken, RHO_G, bath, pointers)
    assert not bad.passed
    assert bad.tv_distance > 1e-3

    with pytest.raises(DimensionError):
        consistency_check(ev, RHO_G, rho_b, pointers[:1])


def test_outcome_capacity_guard():
    d_b = 12
    eye = np.eye(2 * d_b, dtype=complex)
    part = [np.diag((np.arange(d_b) == x).astype(complex)) for x in range(d_b)]
    ev = MeasuredEvolution(
        dim_g=2,
        dim_b=d_b,
        times=(0, 1, 2, 3, 4),
        unitaries=(eye,) * 5,
        partitions=(None, part, part, part, part),
    )
    bath = np.zeros((d_b, d_b), dtype=complex)
    bath[0, 0] = 1.0
    with pytest.raises(CapacityError):
        exact_unraveling(ev, np.eye(2) / 2.0, bath)

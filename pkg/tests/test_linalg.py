"""Dense linear-algebra primitives: oracles are scipy routines, kron
identities, and closed-form spectra."""

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from oqbm.errors import ContractViolation, DimensionError
from oqbm.linalg import (
    check_density,
    check_unitary,
    dagger,
    embed_operator,
    hermitize,
    is_hermitian,
    matrix_exp,
    partial_trace,
    psd_project,
    random_density,
    random_hermitian,
    trace_distance,
    trace_norm,
)


def test_dagger_and_hermitize():
    a = np.array([[1 + 2j, 3], [4j, 5]])
    assert np.array_equal(dagger(a), a.conj().T)
    h = hermitize(a)
    assert is_hermitian(h, 0.0)
    assert np.allclose(h, 0.5 * (a + a.conj().T))


def test_matrix_exp_matches_scipy_on_generic_matrix():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert np.max(np.abs(matrix_exp(a) - scipy.linalg.expm(a))) < 1e-11


def test_matrix_exp_hermitian_branch_matches_scipy():
    rng = np.random.default_rng(1)
    h = random_hermitian(5, rng, norm=2.0)
    assert np.max(np.abs(matrix_exp(h) - scipy.linalg.expm(h))) < 1e-12


def test_matrix_exp_antihermitian_gives_unitary():
    rng = np.random.default_rng(2)
    h = random_hermitian(4, rng, norm=3.0)
    u = matrix_exp(-1j * h)
    check_unitary(u)
    assert np.max(np.abs(u - scipy.linalg.expm(-1j * h))) < 1e-12


def test_matrix_exp_rejects_non_square():
    with pytest.raises(DimensionError):
        matrix_exp(np.zeros((2, 3)))


def test_partial_trace_factorizes_kron():
    rng = np.random.default_rng(3)
    a = random_density(2, rng)
    b = random_density(3, rng)
    joint = np.kron(a, b)
    assert np.max(np.abs(partial_trace(joint, (2, 3), keep=0) - a)) < 1e-14
    assert np.max(np.abs(partial_trace(joint, (2, 3), keep=1) - b)) < 1e-14


def test_partial_trace_shape_check():
    with pytest.raises(DimensionError):
        partial_trace(np.eye(5), (2, 3), keep=0)


def test_trace_norm_from_singular_values():
    # diag(3, -4) has singular values {3, 4}
    assert abs(trace_norm(np.diag([3.0, -4.0])) - 7.0) < 1e-13
    rng = np.random.default_rng(4)
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    assert abs(trace_distance(a, b) - trace_distance(b, a)) < 1e-14


def test_psd_project_clips_and_preserves_trace():
    h = np.diag([0.9, 0.3, -0.2])
    out = psd_project(h)
    w = np.linalg.eigvalsh(out)
    assert w.min() >= 0.0
    assert abs(np.trace(out).real - 1.0) < 1e-12


def test_psd_project_keeps_psd_input():
    rng = np.random.default_rng(5)
    rho = random_density(3, rng)
    assert np.max(np.abs(psd_project(rho) - rho)) < 1e-14


def test_psd_project_rejects_non_hermitian():
    with pytest.raises(ContractViolation):
        psd_project(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_check_density_contracts():
    check_density(np.eye(2) / 2)
    with pytest.raises(ContractViolation):
        check_density(np.eye(2))  # trace 2
    with pytest.raises(ContractViolation):
        check_density(np.diag([1.1, -0.1]))  # negative eigenvalue
    with pytest.raises(DimensionError):
        check_density(np.zeros((2, 3)))


def test_check_unitary_detects_defect():
    check_unitary(np.eye(3))
    with pytest.raises(ContractViolation):
        check_unitary(1.001 * np.eye(3))


def test_embed_operator_single_factor_is_kron():
    rng = np.random.default_rng(6)
    op = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    assert np.max(np.abs(embed_operator(op, (2, 3), (0,)) - np.kron(op, np.eye(3)))) < 1e-14
    assert np.max(np.abs(embed_operator(op, (3, 2), (1,)) - np.kron(np.eye(3), op))) < 1e-14


def test_embed_operator_reordered_targets():
    rng = np.random.default_rng(7)
    a = rng.standard_normal((2, 2))
    b = rng.standard_normal((3, 3))
    # op acts as a on factor 2 and b on factor 0 of dims (3, 2, 2)
    op = np.kron(a, b)
    embedded = embed_operator(op, (3, 2, 2), (2, 0))
    direct = np.einsum(
        "ad,be,cf->abcdef", b, np.eye(2), a
    ).reshape(12, 12)
    assert np.max(np.abs(embedded - direct)) < 1e-14


def test_embed_operator_rejects_bad_targets():
    with pytest.raises(DimensionError):
        embed_operator(np.eye(2), (2, 2), (0, 0))
    with pytest.raises(DimensionError):
        embed_operator(np.eye(3), (2, 2), (0,))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 5))
def test_psd_project_property(seed, d):
    rng = np.random.default_rng(seed)
    h = random_hermitian(d, rng, norm=1.0) + np.eye(d) * rng.standard_normal()
    out = psd_project(h)
    assert np.linalg.eigvalsh(out).min() >= -1e-13
    t_in = np.trace(h).real
    if t_in > 0.1:
        assert abs(np.trace(out).real - t_in) < 1e-10 * max(1.0, abs(t_in))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 4))
def test_random_density_is_a_state(seed, d):
    rho = random_density(d, np.random.default_rng(seed))
    check_density(rho)

"""Filtering equation, reference-measure form, and ensemble engine.

The physical-measure ensemble must average to the deterministic semigroup,
the reference-measure weights and state traces must both be martingales with
mean one, and every ensemble path must be replayable bitwise through the
scalar samplers.
"""

import numpy as np
import pytest

from oqbm.belavkin import (
    SDEConfig,
    _min_eig_batch,
    as_generator,
    belavkin_step,
    ensemble_run,
    girsanov_log_weight,
    reference_ensemble,
    reference_path,
    sample_path,
    unnormalized_step,
)
from oqbm.discrete import OQBMParams
from oqbm.errors import CollapseError, ConfigError, StepSizeError
from oqbm.lindblad import LindbladGenerator, semigroup_map
from oqbm.linalg import random_hermitian, trace_norm

S3 = np.diag([1.0, -1.0]).astype(complex)
SM = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
SX = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
Z2 = np.zeros((2, 2), dtype=complex)
PLUS = np.array([[0.5, 0.5], [0.5, 0.5]], dtype=complex)


def test_config_validation():
    with pytest.raises(ConfigError):
        SDEConfig(dt=1e-3, t_final=1.0, scheme="milstein")
    with pytest.raises(ConfigError):
        SDEConfig(dt=0.0, t_final=1.0)
    with pytest.raises(ConfigError):
        SDEConfig(dt=2.0, t_final=1.0)
    cfg = SDEConfig(dt=0.3, t_final=1.0)
    assert cfg.n_steps == 3
    assert abs(cfg.dt_eff - 1.0 / 3.0) < 1e-15
    with pytest.raises(StepSizeError):
        SDEConfig(dt=0.05, t_final=1.0).check_against(LindbladGenerator(2.0 * SM, Z2))


def test_generator_coercion():
    p = OQBMParams(N=0.4 * S3, H=0.1 * SX, tau=1e-3)
    g = as_generator(p)
    assert isinstance(g, LindbladGenerator)
    assert np.array_equal(g.N, p.N)
    assert g is as_generator(g)


def test_min_eig_closed_form_matches_eigvalsh():
    rng = np.random.default_rng(3)
    stack = np.stack([random_hermitian(2, rng) for _ in range(40)])
    fast = _min_eig_batch(stack)
    ref = np.linalg.eigvalsh(stack)[:, 0]
    assert np.max(np.abs(fast - ref)) < 1e-12
    stack3 = np.stack([random_hermitian(3, rng) for _ in range(10)])
    assert np.max(np.abs(_min_eig_batch(stack3) - np.linalg.eigvalsh(stack3)[:, 0])) == 0.0


def test_single_step_contracts():
    g = LindbladGenerator(N=SM, H=0.3 * SX)
    rho, x, db, dt = PLUS, 0.2, 0.03, 1e-3
    new_rho, new_x = belavkin_step(rho, x, db, g, dt)
    assert abs(np.trace(new_rho).real - 1.0) < 1e-12
    assert np.max(np.abs(new_rho - new_rho.conj().T)) == 0.0
    t_val = np.trace((g.N + g.N.conj().T) @ rho).real
    assert abs(new_x - (x + t_val * dt + db)) < 1e-14


def test_single_step_collapse_guard():
    g = LindbladGenerator(N=SM, H=Z2)
    with pytest.raises(CollapseError):
        belavkin_step(np.zeros((2, 2)), 0.0, 0.01, g, 1e-3)


def test_scalar_path_replays_ensemble_paths():
    g = LindbladGenerator(N=0.7 * SM + 0.2 * S3, H=0.4 * SX)
    cfg = SDEConfig(dt=2e-3, t_final=0.3, seed=41)
    res = ensemble_run(g, PLUS, 0.1, 8, cfg)
    for i in (0, 5):
        path = sample_path(g, PLUS, 0.1, cfg, path_index=i).validate(drift_bound=2.0)
        assert path.positions[-1] == res.final_positions[i]
        assert np.array_equal(path.states[-1], res.final_states[i])


def test_path_validation_catches_tampering():
    g = LindbladGenerator(N=SM, H=Z2)
    cfg = SDEConfig(dt=1e-3, t_final=0.05, seed=7)
    path = sample_path(g, PLUS, 0.0, cfg)
    path.validate(drift_bound=2.0)
    path.positions[10] += 1.0
    with pytest.raises(CollapseError):
        path.validate(drift_bound=2.0)
    fresh = sample_path(g, PLUS, 0.0, cfg)
    fresh.states[3] *= 2.0
    with pytest.raises(CollapseError):
        fresh.validate(drift_bound=2.0)


def test_ensemble_mean_tracks_semigroup():
    g = LindbladGenerator(N=SM, H=0.3 * SX)
    t, dt, n_paths = 0.5, 1e-3, 2000
    cfg = SDEConfig(dt=dt, t_final=t, seed=10)
    res = ensemble_run(g, PLUS, 0.0, n_paths, cfg)
    exact = (semigroup_map(g, t) @ PLUS.reshape(-1)).reshape(2, 2)
    gap = trace_norm(res.mean_states[-1] - exact)
    assert gap <= 5.0 * res.state_stderr[-1] + 10.0 * dt
    assert res.aborted == 0
    # projection clips scale like t*sqrt(dt) along near-pure trajectories
    assert res.clipped_mass < 10.0 * t * np.sqrt(dt)
    assert abs(res.times[-1] - t) < 1e-15


def test_ensemble_is_thread_invariant():
    g = LindbladGenerator(N=0.5 * S3, H=0.2 * SX)
    cfg = SDEConfig(dt=1e-3, t_final=0.05, seed=9)
    a = ensemble_run(g, PLUS, 0.0, 300, cfg, threads=1)
    b = ensemble_run(g, PLUS, 0.0, 300, cfg, threads=3)
    assert np.array_equal(a.mean_states, b.mean_states)
    assert np.array_equal(a.x_mean, b.x_mean)
    assert np.array_equal(a.x_var, b.x_var)
    assert np.array_equal(a.final_positions, b.final_positions)
    assert np.array_equal(a.final_states, b.final_states)
    assert a.clipped_mass == b.clipped_mass


def test_unnormalized_step_is_linear():
    g = LindbladGenerator(N=0.6 * SM, H=0.2 * S3)
    rng = np.random.default_rng(2)
    s1 = random_hermitian(2, rng)
    s2 = random_hermitian(2, rng)
    a, b, dw, dt = 0.7, -0.4, 0.05, 1e-3
    combined = unnormalized_step(a * s1 + b * s2, dw, g, dt)
    split = a * unnormalized_step(s1, dw, g, dt) + b * unnormalized_step(s2, dw, g, dt)
    assert np.max(np.abs(combined - split)) < 1e-13


def test_girsanov_quadrature_oracle():
    assert girsanov_log_weight(np.zeros(5), np.full(5, 0.3), 0.1) == 0.0
    got = girsanov_log_weight(np.array([1.0, 2.0]), np.array([0.1, -0.2]), 0.01)
    assert abs(got - (-0.325)) < 1e-15


def test_reference_path_matches_reference_ensemble():
    g = LindbladGenerator(N=0.8 * SM, H=0.2 * S3)
    cfg = SDEConfig(dt=2e-3, t_final=0.2, seed=33)
    res = reference_ensemble(g, PLUS, 0.0, 6, cfg)
    for i in (0, 4):
        path = reference_path(g, PLUS, 0.0, cfg, path_index=i)
        assert path.positions[-1] == res.final_positions[i]
        assert abs(np.exp(path.log_weight) - res.weights[i]) < 1e-12
        assert abs(np.trace(path.states[-1]).real - res.final_traces[i]) < 1e-14


def test_reference_weights_are_a_martingale():
    g = LindbladGenerator(N=0.8 * SM, H=0.2 * S3)
    cfg = SDEConfig(dt=2e-3, t_final=0.4, seed=21)
    res = reference_ensemble(g, PLUS, 0.0, 4000, cfg)
    for values in (res.weights, res.final_traces):
        mean = float(np.mean(values))
        stderr = float(np.std(values) / np.sqrt(res.n_paths))
        assert abs(mean - 1.0) <= 5.0 * stderr + 10.0 * cfg.dt

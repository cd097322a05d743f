"""Discrete open quantum Brownian motion.

Builds the two-outcome Kraus pair (truncated polynomial and exact
unitary-dilation forms), the induced channel on lattice windows, the
position-conditioned dilation with a shift register, and the finite
repeated-interaction evolution on a toy Fock register. Trajectory sampling
reuses the open-walk branch engine so a walk kernel and the dedicated
lattice sampler produce bit-identical paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as _rng
from .errors import (
    CapacityError,
    ContractViolation,
    DimensionError,
    PaddingError,
)
from .linalg import dagger, embed_operator, hermitize, matrix_exp, trace_norm
from .oqw import OQWKernel, QuantumTrajectory, _branch
from .tolerances import TOL

__all__ = [
    "OQBMParams",
    "LatticeField",
    "ToyFockRegister",
    "kraus_truncated",
    "kraus_exact",
    "interaction_unitary",
    "shift_unitary",
    "oqbm_step",
    "gyro_step",
    "dilation_check",
    "default_half_width",
    "oqbm_kernel",
    "probe_measurement_unravel",
    "walk_ensemble",
    "toyfock_evolve",
    "toyfock_reduced_state",
    "probe_operator",
]


@dataclass(frozen=True)
class OQBMParams:
    """Parameters of the discrete dynamics.

    ``delta`` is always the derived space step sqrt(tau); it is exposed as a
    property and never stored, so the two scales cannot drift apart.
    """

    N: np.ndarray
    H: np.ndarray
    tau: float
    M: np.ndarray | None = None

    def __post_init__(self):
        n = np.asarray(self.N, dtype=complex)
        h = np.asarray(self.H, dtype=complex)
        if n.ndim != 2 or n.shape[0] != n.shape[1] or h.shape != n.shape:
            raise DimensionError("N and H must be square matrices of equal dimension")
        if np.max(np.abs(h - h.conj().T)) > TOL.hermiticity:
            raise ContractViolation("H must be Hermitian within 1e-12")
        if not self.tau > 0:
            raise ContractViolation("tau must be positive")
        m = np.zeros_like(n) if self.M is None else np.asarray(self.M, dtype=complex)
        if m.shape != n.shape:
            raise DimensionError("M must match the shape of N")
        object.__setattr__(self, "N", n)
        object.__setattr__(self, "H", h)
        object.__setattr__(self, "M", m)

    @property
    def delta(self) -> float:
        return float(np.sqrt(self.tau))

    @property
    def dim(self) -> int:
        return self.N.shape[0]

    @property
    def has_m(self) -> bool:
        return bool(np.any(self.M != 0))


def kraus_truncated(p: OQBMParams) -> tuple[np.ndarray, np.ndarray]:
    """The polynomial Kraus pair.

    B_pm = (I +- delta N + tau(-iH - N*N/2 +- M)) / sqrt(2), exactly this
    polynomial and nothing more. Completeness holds only to O(tau^{3/2}):
    sum(B*B) - I = tau^{3/2}(N*M + M*N) + tau^2((-iH - N*N/2)*(-iH - N*N/2) + M*M).
    """
    eye = np.eye(p.dim)
    core = -1j * p.H - 0.5 * (dagger(p.N) @ p.N)
    b_plus = (eye + p.delta * p.N + p.tau * (core + p.M)) / np.sqrt(2.0)
    b_minus = (eye - p.delta * p.N + p.tau * (core - p.M)) / np.sqrt(2.0)
    return b_plus, b_minus


def interaction_unitary(p: OQBMParams) -> np.ndarray:
    """One-step system-probe unitary V_tau on H_G (x) C^2.

    Generated by -i tau (H (x) I) + sqrt(tau) (N (x) |1><0| - N* (x) |0><1|).
    The off-diagonal block orientation is fixed so that the +1 probe outcome
    carries +delta N at first order (pinned by a unit test against the
    truncated pair).
    """
    e10 = np.zeros((2, 2), dtype=complex)
    e10[1, 0] = 1.0
    gen = -1j * p.tau * np.kron(p.H, np.eye(2)) + p.delta * (
        np.kron(p.N, e10) - np.kron(dagger(p.N), e10.T)
    )
    return matrix_exp(gen)


def kraus_exact(p: OQBMParams) -> tuple[np.ndarray, np.ndarray]:
    """Exactly complete Kraus pair from the unitary dilation.

    K_pm = (I (x) <pm|) V_tau (I (x) |0>) with |pm> = (|0> +- |1>)/sqrt(2).
    Unitarity of V_tau plus orthonormality of |pm> forces
    K_+* K_+ + K_-* K_- = I to machine precision. Requires M = 0; the drift
    correction has no exact two-outcome dilation of this form.
    """
    if p.has_m:
        raise ContractViolation("kraus_exact requires M = 0; the M term is unsupported here")
    v = interaction_unitary(p)
    d = p.dim
    blocks = v.reshape(d, 2, d, 2)
    k0 = np.ascontiguousarray(blocks[:, 0, :, 0])  # (I (x) <0|) V (I (x) |0>)
    k1 = np.ascontiguousarray(blocks[:, 1, :, 0])
    k_plus = (k0 + k1) / np.sqrt(2.0)
    k_minus = (k0 - k1) / np.sqrt(2.0)
    return k_plus, k_minus


def kraus_pair(p: OQBMParams, use_exact: bool) -> tuple[np.ndarray, np.ndarray]:
    return kraus_exact(p) if use_exact else kraus_truncated(p)


@dataclass
class LatticeField:
    """Position-diagonal state on a finite window of delta Z.

    ``site_matrices[i]`` is the unnormalized PSD block at x = origin +
    i*delta. Mass lost through an absorbing boundary accumulates in ``leak``
    so that total trace + leak stays at 1 for trace-preserving dynamics.
    """

    origin: float
    delta: float
    site_matrices: np.ndarray  # (n_sites, d, d) complex
    boundary_policy: str = "absorb-and-track"
    leak: float = 0.0

    def __post_init__(self):
        self.site_matrices = np.asarray(self.site_matrices, dtype=complex)
        if self.site_matrices.ndim != 3 or self.site_matrices.shape[1] != self.site_matrices.shape[2]:
            raise DimensionError("site_matrices must have shape (n_sites, d, d)")
        if self.boundary_policy not in ("absorb-and-track", "reflect"):
            raise ContractViolation(f"unknown boundary policy {self.boundary_policy!r}")

    @property
    def n_sites(self) -> int:
        return self.site_matrices.shape[0]

    @property
    def dim(self) -> int:
        return self.site_matrices.shape[1]

    def positions(self) -> np.ndarray:
        return self.origin + self.delta * np.arange(self.n_sites)

    def site_traces(self) -> np.ndarray:
        return np.einsum("xii->x", self.site_matrices).real

    def total_trace(self) -> float:
        return float(self.site_traces().sum())

    def validate(self) -> "LatticeField":
        mass = self.total_trace() + self.leak
        if abs(mass - 1.0) > TOL.field_mass:
            raise ContractViolation(
                f"field mass {mass:.12f} (trace + leak) deviates from 1 beyond {TOL.field_mass:.1e}"
            )
        return self

    @classmethod
    def point_mass(
        cls,
        rho: np.ndarray,
        p: OQBMParams,
        half_width: int,
        x0: float = 0.0,
        boundary_policy: str = "absorb-and-track",
    ) -> "LatticeField":
        """Window of 2*half_width+1 sites centred on x0 with all mass there."""
        d = rho.shape[0]
        mats = np.zeros((2 * half_width + 1, d, d), dtype=complex)
        mats[half_width] = rho
        return cls(x0 - half_width * p.delta, p.delta, mats, boundary_policy)


def default_half_width(p: OQBMParams, t_final: float, x_range: float = 0.0) -> int:
    """Window half-width (in sites) covering diffusive spread and ballistic
    drift at the spectral speed of N + N*, with six-sigma margin."""
    v_max = float(np.linalg.norm(p.N + dagger(p.N), 2))
    half = max(6.0 * np.sqrt(max(t_final, p.tau)), 6.0 * v_max * t_final) + x_range
    return int(np.ceil(half / p.delta)) + 2


def oqbm_step(p: OQBMParams, field: LatticeField, use_exact: bool = True) -> LatticeField:
    """One application of the lattice channel.

    output(x) = A_+ rho(x - delta) A_+* + A_- rho(x + delta) A_-* with the
    chosen Kraus pair. Boundary handling follows the field's policy: an
    absorbing window drops the two off-window contributions into ``leak``,
    a reflecting one folds them back onto the edge sites. Mass conservation
    is asserted only for the exact pair; the truncated pair loses trace at
    O(tau^{3/2}) per step by construction.
    """
    if field.n_sites == 0:
        raise ContractViolation("empty lattice window")
    a_plus, a_minus = kraus_pair(p, use_exact)
    mats = field.site_matrices
    up = np.einsum("ij,xjk,lk->xil", a_plus, mats, a_plus.conj())
    down = np.einsum("ij,xjk,lk->xil", a_minus, mats, a_minus.conj())
    out = np.zeros_like(mats)
    out[1:] += up[:-1]
    out[:-1] += down[1:]
    leak = field.leak
    if field.boundary_policy == "absorb-and-track":
        leak += float(np.trace(up[-1]).real + np.trace(down[0]).real)
    else:  # reflect
        out[-1] += up[-1]
        out[0] += down[0]
    new = LatticeField(field.origin, field.delta, out, field.boundary_policy, leak)
    if use_exact:
        new.validate()
    return new


def gyro_step(p: OQBMParams, rho: np.ndarray, use_exact: bool = True) -> np.ndarray:
    """Internal-state marginal channel: sum of A rho A* over both outcomes."""
    a_plus, a_minus = kraus_pair(p, use_exact)
    return a_plus @ rho @ dagger(a_plus) + a_minus @ rho @ dagger(a_minus)


def shift_unitary(n_sites: int) -> np.ndarray:
    """Cyclic one-site right shift D on the window: |x> -> |x + delta>.

    Cyclic rather than truncated so it stays unitary; every caller keeps the
    field support padded away from the edges, where the wrap cannot act.
    """
    d = np.zeros((n_sites, n_sites))
    for i in range(n_sites):
        d[(i + 1) % n_sites, i] = 1.0
    return d


def _field_as_block_diagonal(field: LatticeField) -> np.ndarray:
    """Embed a diagonal field as a density matrix on H_G (x) window."""
    n, d = field.n_sites, field.dim
    rho = np.zeros((d, n, d, n), dtype=complex)
    for x in range(n):
        rho[:, x, :, x] = field.site_matrices[x]
    return rho.reshape(d * n, d * n)


def _support_padding(field: LatticeField) -> int:
    tr = field.site_traces()
    occupied = np.nonzero(tr > 1e-15)[0]
    if occupied.size == 0:
        return field.n_sites
    return int(min(occupied[0], field.n_sites - 1 - occupied[-1]))


def dilation_check(p: OQBMParams, field: LatticeField, use_exact: bool = True) -> float:
    """Trace-norm gap between the lattice channel and its one-step dilation.

    The dilation prepares a fresh probe qubit in |0>, applies the
    system-probe unitary, applies the probe-conditioned window shift
    R = D (x) |+><+| + D* (x) |-><-|, and discards the probe. With the exact
    Kraus pair the two routes agree to machine precision; with the truncated
    pair they differ at O(tau^{3/2}).

    The window must keep at least two empty sites on each side so that
    neither route touches the boundary.
    """
    if _support_padding(field) < 2:
        raise PaddingError("dilation_check needs at least 2 sites of empty padding")
    n, d = field.n_sites, field.dim

    one_step = oqbm_step(p, field, use_exact=use_exact)
    route_a = _field_as_block_diagonal(one_step)

    dims = (d, n, 2)
    v_full = embed_operator(interaction_unitary(p), dims, (0, 2))
    shift = shift_unitary(n)
    plus = np.array([[0.5, 0.5], [0.5, 0.5]])
    minus = np.array([[0.5, -0.5], [-0.5, 0.5]])
    r_full = embed_operator(np.kron(shift, plus) + np.kron(shift.T, minus), dims, (1, 2))

    probe = np.zeros((2, 2), dtype=complex)
    probe[0, 0] = 1.0
    rho_tot = np.kron(_field_as_block_diagonal(field), probe)
    u = r_full @ v_full
    evolved = u @ rho_tot @ dagger(u)
    t = evolved.reshape(d * n, 2, d * n, 2)
    route_b = t[:, 0, :, 0] + t[:, 1, :, 1]
    return trace_norm(route_a - route_b)


def oqbm_kernel(p: OQBMParams, half_width: int, use_exact: bool = True) -> OQWKernel:
    """Walk kernel of the dynamics on a periodic window of integer sites.

    Sites are labelled by integers in [-half_width, half_width]; edge order
    is (x -> x+1) with the + operator first, matching the branch order of the
    dedicated lattice sampler, so the two samplers consume identical uniform
    draws. The wrap edge exists only to keep per-vertex completeness exact;
    choose the window so trajectories never reach it.
    """
    a_plus, a_minus = kraus_pair(p, use_exact)
    span = list(range(-half_width, half_width + 1))
    n = len(span)
    edges = []
    kraus = {}
    for i, x in enumerate(span):
        right = span[(i + 1) % n]
        left = span[(i - 1) % n]
        edges.append((x, right))
        kraus[(x, right)] = a_plus
        edges.append((x, left))
        kraus[(x, left)] = a_minus
    return OQWKernel(tuple(span), tuple(edges), kraus)


def probe_measurement_unravel(
    p: OQBMParams,
    rho0: np.ndarray,
    x0: float,
    n_steps: int,
    seed: int,
    path_index: int = 0,
    use_exact: bool = True,
) -> QuantumTrajectory:
    """Sample one repeated-measurement trajectory.

    Each step measures the coupled probe in the +- basis: outcome +1 moves
    the walker by +delta and applies K_+, outcome -1 mirrors it. Positions
    are x0 + delta * (running sum of outcomes).
    """
    k_plus, k_minus = kraus_pair(p, use_exact)
    stack = np.stack([k_plus, k_minus])
    g = _rng.path_generator(seed, path_index)
    rho = np.asarray(rho0, dtype=complex)
    positions = [float(x0)]
    states = [rho]
    s = 0
    for _ in range(n_steps):
        u = np.array([g.random()])
        choice, post, _ = _branch(stack, rho[None, :, :], u)
        rho = post[0]
        s += 1 - 2 * int(choice[0])
        positions.append(float(x0 + p.delta * s))
        states.append(rho)
    return QuantumTrajectory(
        times=np.arange(n_steps + 1),
        positions=positions,
        states=states,
        rng_seed=seed,
        path_index=path_index,
    )


def walk_ensemble(
    p: OQBMParams,
    rho0: np.ndarray,
    x0: float,
    n_steps: int,
    n_paths: int,
    seed: int,
    threads: int = 1,
    use_exact: bool = True,
    step_chunk: int = 1024,
):
    """Final positions and states of n_paths measurement trajectories.

    Vectorized over fixed-size path blocks; path i consumes the stream
    (seed, i) exactly as the scalar sampler does, so results are independent
    of the block schedule and the thread count.

    Returns (positions (n_paths,), states (n_paths, d, d), mean_states
    (n_checkpoints, d, d), checkpoint_steps) where checkpoints include step 0
    and the final step.
    """
    k_plus, k_minus = kraus_pair(p, use_exact)
    stack = np.stack([k_plus, k_minus])
    d = p.dim
    rho0 = np.asarray(rho0, dtype=complex)
    checkpoints = sorted(set(range(0, n_steps + 1, max(1, n_steps // 50))) | {0, n_steps})

    def worker(start: int, size: int):
        streams = _rng.ChunkedStreams(seed, start, size)
        pos = np.zeros(size, dtype=np.int64)
        states = np.broadcast_to(rho0, (size, d, d)).copy()
        sums = np.zeros((len(checkpoints), d, d), dtype=complex)
        ci = 0
        if checkpoints[0] == 0:
            sums[0] = states.sum(axis=0)
            ci = 1
        done = 0
        while done < n_steps:
            m = min(step_chunk, n_steps - done)
            u = streams.uniforms(m)
            for k in range(m):
                choice, states, _ = _branch(stack, states, u[:, k])
                pos += 1 - 2 * choice
                step = done + k + 1
                if ci < len(checkpoints) and checkpoints[ci] == step:
                    sums[ci] = states.sum(axis=0)
                    ci += 1
            done += m
        return pos, states, sums

    parts = _rng.run_blocks(n_paths, worker, threads)
    pos = np.concatenate([q[0] for q in parts])
    states = np.concatenate([q[1] for q in parts])
    mean_states = _rng.combine_sums([q[2] for q in parts]) / n_paths
    return x0 + p.delta * pos, states, mean_states, np.asarray(checkpoints)


@dataclass
class ToyFockRegister:
    """State vector on gyroscope (x) window (x) n probe qubits.

    The tensor layout is row-major with the gyroscope first, then the window
    site index, then probes in interaction order.
    """

    gyro_dim: int
    window_size: int
    n_probes: int
    state_vector: np.ndarray

    def __post_init__(self):
        if self.n_probes > 12:
            raise CapacityError("toy Fock registers support at most 12 probes")
        expected = self.gyro_dim * self.window_size * 2**self.n_probes
        self.state_vector = np.asarray(self.state_vector, dtype=complex).reshape(-1)
        if self.state_vector.size != expected:
            raise DimensionError(
                f"state vector length {self.state_vector.size} != {expected}"
            )
        norm = float(np.linalg.norm(self.state_vector))
        if abs(norm - 1.0) > TOL.state_norm:
            raise ContractViolation(f"register norm {norm:.12f} deviates from 1")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.gyro_dim, self.window_size) + (2,) * self.n_probes

    def tensor(self) -> np.ndarray:
        return self.state_vector.reshape(self.dims)

    @classmethod
    def pure(
        cls,
        gyro_vec: np.ndarray,
        site_index: int,
        window_size: int,
        n_probes: int,
    ) -> "ToyFockRegister":
        """Product state: gyroscope vector, point position, all probes in |0>."""
        gyro_vec = np.asarray(gyro_vec, dtype=complex)
        g = gyro_vec / np.linalg.norm(gyro_vec)
        w = np.zeros(window_size, dtype=complex)
        w[site_index] = 1.0
        vec = np.kron(g, w)
        for _ in range(n_probes):
            vec = np.kron(vec, np.array([1.0, 0.0], dtype=complex))
        return cls(gyro_vec.size, window_size, n_probes, vec)


def _apply_two_factor(tensor: np.ndarray, op: np.ndarray, axes: tuple[int, int]) -> np.ndarray:
    moved = np.moveaxis(tensor, axes, (0, 1))
    da, db = moved.shape[0], moved.shape[1]
    flat = moved.reshape(da * db, -1)
    out = (np.asarray(op, dtype=complex) @ flat).reshape(moved.shape)
    return np.moveaxis(out, (0, 1), axes)


def toyfock_evolve(
    p: OQBMParams,
    psi0: ToyFockRegister,
    n_steps: int,
    order: str = "interleaved",
) -> ToyFockRegister:
    """Repeated-interaction evolution on the register.

    Step k couples the gyroscope to probe k through the interaction unitary,
    then shifts the window conditionally on that probe. ``order`` selects the
    product form: "interleaved" applies (shift_k interaction_k) step by step;
    "shifts-last" applies every interaction first and every shift after,
    which is the same operator because shift_j commutes with interaction_k
    for j != k.
    """
    if n_steps > psi0.n_probes:
        raise CapacityError(
            f"n_steps={n_steps} exceeds the register's {psi0.n_probes} probes"
        )
    if order not in ("interleaved", "shifts-last"):
        raise ContractViolation(f"unknown product order {order!r}")
    v = interaction_unitary(p)
    shift = shift_unitary(psi0.window_size)
    plus = np.array([[0.5, 0.5], [0.5, 0.5]])
    minus = np.array([[0.5, -0.5], [-0.5, 0.5]])
    r = np.kron(shift, plus) + np.kron(shift.T, minus)
    t = psi0.tensor()
    if order == "interleaved":
        for k in range(n_steps):
            t = _apply_two_factor(t, v, (0, 2 + k))
            t = _apply_two_factor(t, r, (1, 2 + k))
    else:
        for k in range(n_steps):
            t = _apply_two_factor(t, v, (0, 2 + k))
        for k in range(n_steps):
            t = _apply_two_factor(t, r, (1, 2 + k))
    out = ToyFockRegister(psi0.gyro_dim, psi0.window_size, psi0.n_probes, t.reshape(-1))
    return out


def toyfock_reduced_state(reg: ToyFockRegister) -> np.ndarray:
    """Density matrix on gyroscope (x) window after tracing out all probes."""
    g, w = reg.gyro_dim, reg.window_size
    t = reg.state_vector.reshape(g * w, -1)
    return t @ t.conj().T


def probe_operator(reg_dims: tuple[int, ...], k: int, i: int, j: int) -> np.ndarray:
    """Dense matrix of the discrete noise operator on probe k.

    Maps the probe basis vector e_i to e_j and annihilates the other one;
    the adjoint swaps the indices, and operators on distinct probes commute.
    Intended for small registers only (the matrix is dense).
    """
    if i not in (0, 1) or j not in (0, 1):
        raise DimensionError("probe levels are 0 and 1")
    op = np.zeros((2, 2), dtype=complex)
    op[j, i] = 1.0
    return embed_operator(op, reg_dims, (2 + k,))

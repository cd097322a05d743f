"""Open quantum walks on finite directed graphs.

The channel acts on position-diagonal states site by site; quantum
trajectories sample one position record per step with the Born rule
probabilities Tr(K rho K*). Trajectory i of an ensemble consumes the
stream (seed, i) and therefore reproduces exactly, alone or batched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .errors import ContractViolation, DegenerateStepError, DimensionError
from .linalg import dagger, hermitize, trace_norm
from .tolerances import TOL

__all__ = [
    "OQWKernel",
    "DiagonalState",
    "QuantumTrajectory",
    "oqw_apply",
    "sample_step",
    "sample_trajectory",
    "ensemble_sample",
    "expectation_identity_check",
    "classical_walk_kernel",
]


@dataclass(frozen=True)
class OQWKernel:
    """Kraus operators indexed by directed edges, complete at every vertex."""

    vertices: tuple
    edges: tuple  # of (src, dst)
    kraus_by_edge: dict

    def __post_init__(self):
        vset = set(self.vertices)
        dims = {np.asarray(k).shape for k in self.kraus_by_edge.values()}
        if len(dims) != 1 or any(len(s) != 2 or s[0] != s[1] for s in dims):
            raise DimensionError("edge Kraus operators must share one square shape")
        for e in self.edges:
            if e not in self.kraus_by_edge:
                raise ContractViolation(f"edge {e} has no Kraus operator")
            if e[0] not in vset or e[1] not in vset:
                raise ContractViolation(f"edge {e} leaves the vertex set")
        d = self.dim
        for x in self.vertices:
            s = np.zeros((d, d), dtype=complex)
            outgoing = [e for e in self.edges if e[0] == x]
            if not outgoing:
                raise ContractViolation(f"vertex {x!r} has no outgoing edges")
            for e in outgoing:
                k = np.asarray(self.kraus_by_edge[e], dtype=complex)
                s += dagger(k) @ k
            defect = float(np.max(np.abs(s - np.eye(d))))
            if defect > TOL.completeness:
                raise ContractViolation(
                    f"completeness defect {defect:.3e} at vertex {x!r}"
                )

    @property
    def dim(self) -> int:
        return next(iter(self.kraus_by_edge.values())).shape[0]

    def out_edges(self, x) -> list:
        return [e for e in self.edges if e[0] == x]


@dataclass
class DiagonalState:
    """Position-diagonal state: one unnormalized PSD matrix per occupied site."""

    sites: dict  # vertex -> PSD matrix

    def total_trace(self) -> float:
        return float(sum(np.trace(m).real for m in self.sites.values()))

    def validate(self, kernel: OQWKernel | None = None) -> "DiagonalState":
        if kernel is not None:
            unknown = set(self.sites) - set(kernel.vertices)
            if unknown:
                raise ContractViolation(f"state supported outside the vertex set: {unknown}")
        if abs(self.total_trace() - 1.0) > TOL.diag_mass:
            raise ContractViolation(
                f"diagonal state mass {self.total_trace():.12f} deviates from 1"
            )
        for x, m in self.sites.items():
            w = np.linalg.eigvalsh(hermitize(np.asarray(m, dtype=complex)))
            if w.size and float(w[0]) < -1e-10:
                raise ContractViolation(f"site {x!r} matrix has eigenvalue {w[0]:.3e}")
        return self


@dataclass
class QuantumTrajectory:
    times: np.ndarray
    positions: list
    states: list
    rng_seed: int
    path_index: int = 0


def oqw_apply(kernel: OQWKernel, s: DiagonalState) -> DiagonalState:
    """One application of the walk channel to a diagonal state."""
    unknown = set(s.sites) - set(kernel.vertices)
    if unknown:
        raise ContractViolation(f"state supported outside the vertex set: {unknown}")
    out: dict = {}
    for x, m in s.sites.items():
        m = np.asarray(m, dtype=complex)
        for (src, dst) in kernel.out_edges(x):
            k = kernel.kraus_by_edge[(src, dst)]
            contrib = k @ m @ dagger(k)
            if dst in out:
                out[dst] = out[dst] + contrib
            else:
                out[dst] = contrib
    return DiagonalState({x: hermitize(m) for x, m in out.items()})


class _CompiledKernel:
    """Vertex-indexed edge tables for vectorized stepping."""

    def __init__(self, kernel: OQWKernel):
        self.vertices = list(kernel.vertices)
        self.index = {v: i for i, v in enumerate(self.vertices)}
        self.dim = kernel.dim
        self.targets = []
        self.kraus = []
        for v in self.vertices:
            edges = kernel.out_edges(v)
            self.targets.append(np.array([self.index[e[1]] for e in edges], dtype=np.int64))
            self.kraus.append(
                np.stack([np.asarray(kernel.kraus_by_edge[e], dtype=complex) for e in edges])
            )


def _branch(kraus_stack: np.ndarray, states: np.ndarray, u: np.ndarray):
    """Vectorized Born-rule branch selection shared by every sampler.

    kraus_stack: (E, d, d); states: (m, d, d); u: (m,) uniforms.
    Returns (choice (m,), post-states (m, d, d), branch probabilities (m,)).
    """
    half = np.matmul(kraus_stack[:, None], states[None])
    probs = np.einsum("emij,eij->em", half, kraus_stack.conj()).real
    np.clip(probs, 0.0, None, out=probs)
    cum = np.cumsum(probs, axis=0)
    total = cum[-1]
    if np.any(total < TOL.null_outcome):
        raise DegenerateStepError("all branch probabilities are numerically null")
    if np.any(np.abs(total - 1.0) > TOL.diag_mass):
        raise ContractViolation(
            "branch probabilities do not sum to 1 within tolerance "
            f"(worst total {total[np.argmax(np.abs(total - 1.0))]:.12f})"
        )
    choice = (cum <= (u * total)[None, :]).sum(axis=0)
    np.minimum(choice, kraus_stack.shape[0] - 1, out=choice)
    m_idx = np.arange(states.shape[0])
    sel = np.matmul(half[choice, m_idx], kraus_stack[choice].conj().transpose(0, 2, 1))
    p_sel = probs[choice, m_idx]
    sel = sel / p_sel[:, None, None]
    sel = 0.5 * (sel + sel.conj().transpose(0, 2, 1))
    return choice, sel, p_sel


def sample_step(kernel: OQWKernel, rho: np.ndarray, x, rng: np.random.Generator):
    """One trajectory step: sample the next vertex, return it with the
    normalized post-state.

    Raises a degenerate-step error when every branch probability sits below
    the null threshold (misconfigured kernel or state).
    """
    edges = kernel.out_edges(x)
    if not edges:
        raise ContractViolation(f"vertex {x!r} has no outgoing edges")
    stack = np.stack([np.asarray(kernel.kraus_by_edge[e], dtype=complex) for e in edges])
    u = rng.random()
    choice, post, _ = _branch(stack, np.asarray(rho, dtype=complex)[None, :, :], np.array([u]))
    return edges[int(choice[0])][1], post[0]


def sample_trajectory(
    kernel: OQWKernel,
    rho0: np.ndarray,
    x0,
    n_steps: int,
    seed: int,
    path_index: int = 0,
) -> QuantumTrajectory:
    """Sample one quantum trajectory on its own (seed, path_index) stream."""
    g = _rng.path_generator(seed, path_index)
    positions = [x0]
    states = [np.asarray(rho0, dtype=complex)]
    x, rho = x0, states[0]
    for _ in range(n_steps):
        x, rho = sample_step(kernel, rho, x, g)
        positions.append(x)
        states.append(rho)
    return QuantumTrajectory(
        times=np.arange(n_steps + 1),
        positions=positions,
        states=states,
        rng_seed=seed,
        path_index=path_index,
    )


def ensemble_sample(
    kernel: OQWKernel,
    rho0: np.ndarray,
    x0,
    n_steps: int,
    n_paths: int,
    seed: int,
    threads: int = 1,
):
    """Final (positions, states) for n_paths independent trajectories.

    Path i reproduces sample_trajectory(..., path_index=i) exactly; paths are
    processed in fixed-size blocks so the result is independent of ``threads``.
    """
    ck = _CompiledKernel(kernel)
    d = ck.dim
    rho0 = np.asarray(rho0, dtype=complex)
    x0_idx = ck.index[x0]

    def worker(start: int, size: int):
        u = _rng.block_uniforms(seed, start, size, n_steps) if n_steps else np.zeros((size, 0))
        pos = np.full(size, x0_idx, dtype=np.int64)
        states = np.broadcast_to(rho0, (size, d, d)).copy()
        for k in range(n_steps):
            new_pos = pos.copy()
            for v in np.unique(pos):
                m = pos == v
                choice, post, _ = _branch(ck.kraus[v], states[m], u[m, k])
                states[m] = post
                new_pos[m] = ck.targets[v][choice]
            pos = new_pos
        return pos, states

    parts = _rng.run_blocks(n_paths, worker, threads)
    positions = np.concatenate([p for p, _ in parts])
    states = np.concatenate([s for _, s in parts])
    return np.array([ck.vertices[i] for i in positions], dtype=object), states


@dataclass
class IdentityCheckReport:
    n_samples: int
    discrepancy: float
    stderr: float
    per_site: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.discrepancy <= 5.0 * self.stderr


def expectation_identity_check(
    kernel: OQWKernel,
    rho0: np.ndarray,
    x0,
    n_steps: int,
    n_samples: int,
    seed: int,
    threads: int = 1,
) -> IdentityCheckReport:
    """Monte-Carlo check of the trajectory/channel duality.

    Estimates the site-resolved expectation E[1{X_n = x} rho_n] from
    trajectories and compares it with the n-fold channel action on
    rho0 at x0, in summed trace norm. The reported ``stderr`` is the sum
    over sites of sqrt(d) times the Frobenius-level standard error of the
    per-site estimate (a trace-norm dominating scale), and the check passes
    when the discrepancy stays below five of them.
    """
    if n_samples < 1000:
        raise ContractViolation("expectation_identity_check needs at least 1e3 samples")
    ck = _CompiledKernel(kernel)
    d, n_v = ck.dim, len(ck.vertices)
    rho0 = np.asarray(rho0, dtype=complex)
    x0_idx = ck.index[x0]

    def worker(start: int, size: int):
        u = _rng.block_uniforms(seed, start, size, n_steps) if n_steps else np.zeros((size, 0))
        pos = np.full(size, x0_idx, dtype=np.int64)
        states = np.broadcast_to(rho0, (size, d, d)).copy()
        for k in range(n_steps):
            new_pos = pos.copy()
            for v in np.unique(pos):
                m = pos == v
                choice, post, _ = _branch(ck.kraus[v], states[m], u[m, k])
                states[m] = post
                new_pos[m] = ck.targets[v][choice]
            pos = new_pos
        s1 = np.zeros((n_v, d, d), dtype=complex)
        s2 = np.zeros((n_v, d, d), dtype=float)
        np.add.at(s1, pos, states)
        np.add.at(s2, pos, np.abs(states) ** 2)
        return s1, s2

    parts = _rng.run_blocks(n_samples, worker, threads)
    s1 = _rng.combine_sums([p[0] for p in parts])
    s2 = _rng.combine_sums([p[1] for p in parts])
    mean = s1 / n_samples
    var = s2 / n_samples - np.abs(mean) ** 2
    np.clip(var, 0.0, None, out=var)

    exact = DiagonalState({x0: rho0})
    for _ in range(n_steps):
        exact = oqw_apply(kernel, exact)

    per_site = {}
    discrepancy = 0.0
    stderr = 0.0
    for v, idx in ck.index.items():
        target = np.asarray(exact.sites.get(v, np.zeros((d, d))), dtype=complex)
        dv = trace_norm(mean[idx] - target)
        se = np.sqrt(d) * float(np.sqrt(var[idx].sum() / n_samples))
        if dv > 0 or se > 0 or v in exact.sites:
            per_site[v] = (dv, se)
        discrepancy += dv
        stderr += se
    return IdentityCheckReport(n_samples, discrepancy, stderr, per_site)


def classical_walk_kernel(p: np.ndarray, dim: int = 1) -> OQWKernel:
    """Walk with scalar Kraus sqrt(p(x,y)) I: positions follow the Markov
    chain of the row-stochastic matrix p, the internal state never moves."""
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    vertices = tuple(range(n))
    edges = []
    kraus = {}
    for x in range(n):
        for y in range(n):
            if p[x, y] > 0:
                edges.append((x, y))
                kraus[(x, y)] = np.sqrt(p[x, y]) * np.eye(dim, dtype=complex)
    return OQWKernel(vertices, tuple(edges), kraus)

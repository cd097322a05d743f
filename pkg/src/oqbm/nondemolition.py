"""Measured unitary evolutions, their classical records, and consistency.

A MeasuredEvolution bundles cumulative unitaries U_t on H_G (x) H_B with, at
selected times, a projective partition of the environment factor H_B. The
scheme is nondemolition when each time-s partition, propagated forward by
the connecting unitary U_t U_s*, lands inside the commutant of the time-t
partition and acts as the identity on the gyroscope factor. In that case
the record (X_1, ..., X_T) carries a classical joint law with well-defined
conditional states, tabulated here by exhaustive enumeration.

consistency_check couples a fresh pointer register to each measured
partition in sequence (a controlled permutation with an arbitrary, possibly
noisy pointer preparation), computes the exact joint readout law on the full
tensor product, and compares it against the classical pushforward of the
exact record law through the pointer response. The two tables coincide to
rounding precisely for nondemolition schemes; a generic unitary evolution
leaves a finite gap, and the report certifies either outcome.

Everything in this module is exact linear algebra on finite tensor
products; nothing is sampled.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .channels import PointerMap
from .errors import CapacityError, ContractViolation, DimensionError
from .linalg import check_unitary, dagger, embed_operator, hermitize, trace_distance
from .oqw import OQWKernel
from .tolerances import TOL

__all__ = [
    "MeasuredEvolution",
    "NondemolitionReport",
    "UnravelingResult",
    "ConsistencyReport",
    "check_nondemolition",
    "exact_unraveling",
    "cyclic_pointer_map",
    "noisy_pointer_state",
    "pointer_response",
    "oqw_measured_evolution",
    "generic_measured_evolution",
    "walk_record_law",
    "consistency_check",
]

MAX_OUTCOME_TUPLES = 10_000


@dataclass(frozen=True)
class MeasuredEvolution:
    """Cumulative unitaries with projective readout partitions.

    ``unitaries[k]`` maps time 0 to ``times[k]`` on H_G (x) H_B, so the
    first entry must be the identity. ``partitions[k]`` is either None (no
    readout at that time) or a list of projectors on H_B that are mutually
    orthogonal and resolve the identity.
    """

    dim_g: int
    dim_b: int
    times: tuple
    unitaries: tuple
    partitions: tuple

    def __post_init__(self):
        d = self.dim_g * self.dim_b
        if not (len(self.times) == len(self.unitaries) == len(self.partitions)):
            raise DimensionError("times, unitaries and partitions must align")
        if np.max(np.abs(self.unitaries[0] - np.eye(d))) > TOL.unitarity:
            raise ContractViolation("the time-0 unitary must be the identity")
        for u in self.unitaries:
            if u.shape != (d, d):
                raise DimensionError(f"unitary shape {u.shape}, expected {(d, d)}")
            check_unitary(u, TOL.unitarity)
        for k, part in enumerate(self.partitions):
            if part is None:
                continue
            total = np.zeros((self.dim_b, self.dim_b), dtype=complex)
            for i, p in enumerate(part):
                if np.max(np.abs(p - dagger(p))) > TOL.hermiticity * 10:
                    raise ContractViolation(f"projector {i} at time {k} is not Hermitian")
                if np.max(np.abs(p @ p - p)) > TOL.projector_resolution:
                    raise ContractViolation(f"projector {i} at time {k} is not idempotent")
                for q in part[:i]:
                    if np.max(np.abs(p @ q)) > TOL.projector_resolution:
                        raise ContractViolation(f"partition at time {k} is not orthogonal")
                total += p
            if np.max(np.abs(total - np.eye(self.dim_b))) > TOL.projector_resolution:
                raise ContractViolation(f"partition at time {k} does not resolve identity")

    @property
    def measured_times(self) -> list:
        """Indices into ``times`` that carry a readout partition."""
        return [k for k, p in enumerate(self.partitions) if p is not None]

    def connecting(self, s: int, t: int) -> np.ndarray:
        """U_{t,s} = U_t U_s*, the evolution from times[s] to times[t]."""
        return self.unitaries[t] @ dagger(self.unitaries[s])

    def heisenberg_factor(self, k: int, outcome: int) -> np.ndarray:
        """Rank factor A with A* A = U_k* (I_G (x) P_k(x)) U_k.

        For a partition stored as diagonal 0/1 matrices the factor is a row
        slice of U_k; general projectors go through one eigensolve."""
        u = self.unitaries[k]
        p = np.asarray(self.partitions[k][outcome])
        diag = np.diagonal(p)
        if np.count_nonzero(p - np.diag(diag)) == 0:
            mask = np.kron(np.ones(self.dim_g), diag.real) > 0.5
            return u[mask]
        w, v = np.linalg.eigh(np.kron(np.eye(self.dim_g), p))
        basis = v[:, w > 0.5].conj().T
        return basis @ u

    def heisenberg_projector(self, k: int, outcome: int) -> np.ndarray:
        """E_k(x) = U_k* (I_G (x) P_k(x)) U_k, the record observable pulled
        back to time zero."""
        a = self.heisenberg_factor(k, outcome)
        return dagger(a) @ a


@dataclass
class NondemolitionReport:
    """Certificate for the forward-propagation structure of the record.

    For every pair of measured times s <= t and outcome x, the operator
    Q = U_{t,s} (I_G (x) P_s(x)) U_{t,s}* is tested for (a) commutation with
    every projector of the time-t partition and (b) triviality on the
    gyroscope factor, i.e. distance from I_G (x) Tr_G(Q)/d_G. Frobenius
    norms throughout.
    """

    max_commutator: float
    max_factor_defect: float
    commutators: dict       # (s, t, x, y) -> norm
    factor_defects: dict    # (s, t, x) -> norm

    @property
    def passed(self) -> bool:
        return (
            self.max_commutator <= TOL.nondemolition
            and self.max_factor_defect <= TOL.nondemolition
        )


def _frob(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(a) ** 2)))


def check_nondemolition(ev: MeasuredEvolution) -> NondemolitionReport:
    """Exhaustive certificate over measured time pairs and outcomes.

    Never raises; a failing evolution simply produces large norms in the
    report."""
    times = ev.measured_times
    d_g, d_b = ev.dim_g, ev.dim_b
    eye_g = np.eye(d_g)
    commutators = {}
    defects = {}
    for i, s in enumerate(times):
        for t in times[i:]:
            u_ts = ev.connecting(s, t)
            for x, p in enumerate(ev.partitions[s]):
                q = u_ts @ np.kron(eye_g, p) @ dagger(u_ts)
                bath = np.einsum("gagb->ab", q.reshape(d_g, d_b, d_g, d_b)) / d_g
                defects[(s, t, x)] = _frob(q - np.kron(eye_g, bath))
                for y, pt in enumerate(ev.partitions[t]):
                    f = np.kron(eye_g, pt)
                    commutators[(s, t, x, y)] = _frob(q @ f - f @ q)
    return NondemolitionReport(
        max_commutator=max(commutators.values(), default=0.0),
        max_factor_defect=max(defects.values(), default=0.0),
        commutators=commutators,
        factor_defects=defects,
    )


@dataclass
class UnravelingResult:
    """Joint record law and conditioned gyroscope states.

    ``probabilities[xs]`` is the chance of the outcome tuple ``xs`` (one
    entry per measured time, chronological, by sequential projection).
    ``conditional_states[xs]`` is the normalized gyroscope state at the
    final time given ``xs``, or None for a null tuple.
    """

    measured_times: list
    probabilities: dict
    conditional_states: dict
    evolution: MeasuredEvolution
    _branch_vectors: list
    _branch_weights: np.ndarray

    def validate(self) -> "UnravelingResult":
        total = sum(self.probabilities.values())
        if abs(total - 1.0) > 1e-12 * max(1, len(self.probabilities)):
            raise ContractViolation(f"record law sums to {total:.14f}, not 1")
        return self

    def marginal(self, k: int) -> np.ndarray:
        """Law of the single record at position k of the measured times."""
        sizes = [len(self.evolution.partitions[t]) for t in self.measured_times]
        out = np.zeros(sizes[k])
        for xs, p in self.probabilities.items():
            out[xs[k]] += p
        return out

    def mean_state(self) -> np.ndarray:
        """Record average of the conditional states; equals the reduced
        Stinespring state at the final time."""
        d = self.evolution.dim_g
        acc = np.zeros((d, d), dtype=complex)
        for xs, p in self.probabilities.items():
            if self.conditional_states[xs] is not None:
                acc += p * self.conditional_states[xs]
        return acc

    def predicted_state(self, prefix: tuple, t_index: int) -> np.ndarray:
        """Gyroscope state at times[t_index] given the record through the
        first len(prefix) measured times (the connecting two-time maps)."""
        ev = self.evolution
        d_g, d_b = ev.dim_g, ev.dim_b
        factors = [
            ev.heisenberg_factor(ev.measured_times[i], x) for i, x in enumerate(prefix)
        ]
        u_t = ev.unitaries[t_index]
        acc = np.zeros((d_g, d_g), dtype=complex)
        norm = 0.0
        for j, w in enumerate(self._branch_weights):
            v = self._branch_vectors[j]
            for a in factors:
                v = dagger(a) @ (a @ v)
            norm += w * float(np.real(np.vdot(v, v)))
            vm = (u_t @ v).reshape(d_g, d_b)
            acc += w * (vm @ vm.conj().T)
        if norm <= TOL.null_outcome:
            raise ContractViolation(f"conditioning on a null record {prefix}")
        return hermitize(acc / norm)


def _pure_branches(rho: np.ndarray, cut: float = 1e-14):
    """Eigen-decompose a density matrix into weighted pure branches."""
    w, v = np.linalg.eigh(np.asarray(rho, dtype=complex))
    keep = w > cut
    return list(v[:, keep].T), w[keep]


def exact_unraveling(
    ev: MeasuredEvolution, rho_g: np.ndarray, rho_b: np.ndarray
) -> UnravelingResult:
    """Tabulate the full record law by direct computation.

    The probability of a tuple is the commutative-algebra value
    Re Tr[rho E_1(x_1) ... E_T(x_T)], the joint spectral law of the record
    observables. For a nondemolition scheme this coincides with sequential
    collapse (the product of projectors is itself a projector); for a broken
    scheme it is exactly the quantity whose mismatch with the physical
    pointer law the consistency proposition quantifies. Conditional
    gyroscope states come from the time-ordered sandwich, environment-traced
    and renormalized at the final time. The initial state rho_g (x) rho_b is
    split into pure branches; the number of outcome tuples is capped at 10^4.
    """
    times = ev.measured_times
    sizes = [len(ev.partitions[k]) for k in times]
    n_tuples = int(np.prod(sizes)) if sizes else 1
    if n_tuples > MAX_OUTCOME_TUPLES:
        raise CapacityError(f"{n_tuples} outcome tuples exceed the cap {MAX_OUTCOME_TUPLES}")

    d_g, d_b = ev.dim_g, ev.dim_b
    bg, wg = _pure_branches(rho_g)
    bb, wb = _pure_branches(rho_b)
    branches = [np.kron(g, b) for g in bg for b in bb]
    weights = np.array([x * y for x in wg for y in wb])

    factors = [
        [ev.heisenberg_factor(k, x) for x in range(len(ev.partitions[k]))] for k in times
    ]
    u_final = ev.unitaries[times[-1]] if times else ev.unitaries[-1]

    probabilities = {}
    conditional = {}
    for xs in itertools.product(*[range(s) for s in sizes]):
        acc = np.zeros((d_g, d_g), dtype=complex)
        p_alg = 0.0
        p_seq = 0.0
        for j, w in enumerate(weights):
            v0 = branches[j]
            v = v0
            for k_pos, x in enumerate(xs):
                a = factors[k_pos][x]
                v = dagger(a) @ (a @ v)
            # v = E_T ... E_1 |v0>, so <v0|v>* = <v0|E_1 ... E_T|v0>
            p_alg += w * float(np.real(np.vdot(v0, v)))
            p_seq += w * float(np.real(np.vdot(v, v)))
            vm = (u_final @ v).reshape(d_g, d_b)
            acc += w * (vm @ vm.conj().T)
        probabilities[xs] = p_alg
        conditional[xs] = hermitize(acc / p_seq) if p_seq > TOL.null_outcome else None

    return UnravelingResult(
        measured_times=list(times),
        probabilities=probabilities,
        conditional_states=conditional,
        evolution=ev,
        _branch_vectors=branches,
        _branch_weights=weights,
    ).validate()


def cyclic_pointer_map(n: int) -> PointerMap:
    """psi(x, y) = (x + y) mod n. Reading from the reference preparation
    |0> reproduces x exactly; mixed preparations blur it."""
    pts = tuple(range(n))
    return PointerMap(pts, pts, {(x, y): (x + y) % n for x in pts for y in pts})


def noisy_pointer_state(n: int, fidelity: float = 0.8) -> np.ndarray:
    """Diagonal pointer preparation: weight ``fidelity`` on the reference
    value and the rest spread uniformly."""
    diag = np.full(n, (1.0 - fidelity) / (n - 1))
    diag[0] = fidelity
    return np.diag(diag).astype(complex)


def pointer_response(pointer_map: PointerMap, pointer_state: np.ndarray) -> np.ndarray:
    """Column-stochastic readout kernel nu[y, x] = P(read y | outcome x)."""
    n_x = len(pointer_map.system_points)
    n_y = len(pointer_map.pointer_points)
    nu = np.zeros((n_y, n_x))
    for xi, x in enumerate(pointer_map.system_points):
        for yi, y in enumerate(pointer_map.pointer_points):
            y0 = pointer_map.inverse(x, y)
            j = pointer_map.pointer_points.index(y0)
            nu[yi, xi] = float(np.real(pointer_state[j, j]))
    return nu


def _unitary_vertex_dilation(kernel: OQWKernel, x: int) -> np.ndarray:
    """Unitary on H_G (x) C^n whose action on auxiliary state |0> stacks the
    outgoing Kraus operators of vertex x: <g', y| V(x) |g, 0> = B(x -> y)[g', g]."""
    d, n = kernel.dim, len(kernel.vertices)
    v0 = np.zeros((d, n, d), dtype=complex)
    for e in kernel.out_edges(kernel.vertices[x]):
        v0[:, kernel.vertices.index(e[1]), :] = np.asarray(
            kernel.kraus_by_edge[e], dtype=complex
        )
    v0 = v0.reshape(d * n, d)
    # vertex completeness makes these d columns orthonormal already; place
    # them at the reference-input indices |g, 0> and fill the remaining
    # columns with a greedy orthonormal completion
    full = np.zeros((d * n, d * n), dtype=complex)
    ref_cols = [g * n for g in range(d)]
    full[:, ref_cols] = v0
    basis = [v0[:, j] for j in range(d)]
    spare = iter(i for i in range(d * n) if i not in ref_cols)
    for seed_col in np.eye(d * n, dtype=complex):
        resid = seed_col
        for b in basis:
            resid = resid - b * np.vdot(b, resid)
        nrm = np.linalg.norm(resid)
        if nrm > 1e-7:
            col = resid / nrm
            basis.append(col)
            full[:, next(spare)] = col
        if len(basis) == d * n:
            break
    check_unitary(full, TOL.unitarity)
    return full


def oqw_measured_evolution(
    kernel: OQWKernel, start_vertex: int, n_steps: int
) -> tuple[MeasuredEvolution, np.ndarray]:
    """Realize a vertex walk as a measured evolution of its site register.

    Registers: gyroscope, walker site, and one fresh probe per step; each
    step's unitary moves the walker with the edge amplitudes while writing
    the pre-step site into the probe, which is what makes the site readout
    nondemolition. Partitions measure the site register at every positive
    time. Returns the evolution and the initial environment state (site
    concentrated at ``start_vertex``, probes at the reference value).
    """
    d = kernel.dim
    n = len(kernel.vertices)
    dims = (d, n) + (n,) * n_steps
    d_total = int(np.prod(dims))
    d_b = d_total // d

    vertex_unitaries = [_unitary_vertex_dilation(kernel, x) for x in range(n)]

    site_partition = []
    bath_dims = dims[1:]
    for x in range(n):
        e = np.zeros((n, n))
        e[x, x] = 1.0
        site_partition.append(embed_operator(e, bath_dims, (0,)).real)

    unitaries = [np.eye(d_total, dtype=complex)]
    partitions: list = [None]
    u_cum = unitaries[0]
    for k in range(n_steps):
        s = np.zeros((d, n, n, d, n, n), dtype=complex)
        for x in range(n):
            vx = vertex_unitaries[x].reshape(d, n, d, n)
            # site x -> y with amplitude <y|V(x)|z>, probe_k records x
            s[:, :, x, :, x, :] = vx
        s = s.reshape(d * n * n, d * n * n)
        u_cum = embed_operator(s, dims, (0, 1, 2 + k)) @ u_cum
        unitaries.append(u_cum)
        partitions.append(site_partition)

    ev = MeasuredEvolution(
        dim_g=d,
        dim_b=d_b,
        times=tuple(range(n_steps + 1)),
        unitaries=tuple(unitaries),
        partitions=tuple(partitions),
    )

    site0 = np.zeros((n, n), dtype=complex)
    site0[start_vertex, start_vertex] = 1.0
    probe0 = np.zeros((n, n), dtype=complex)
    probe0[0, 0] = 1.0
    rho_b = site0
    for _ in range(n_steps):
        rho_b = np.kron(rho_b, probe0)
    return ev, rho_b


def generic_measured_evolution(
    dim_g: int, n_sites: int, n_steps: int, seed: int = 5
) -> tuple[MeasuredEvolution, np.ndarray]:
    """A deliberately broken instance: same registers and site partitions as
    the walk construction, but Haar-random step unitaries, which destroy the
    nondemolition structure almost surely."""
    dims = (dim_g, n_sites) + (n_sites,) * n_steps
    d_total = int(np.prod(dims))
    d_b = d_total // dim_g
    rng = np.random.default_rng(seed)

    site_partition = []
    for x in range(n_sites):
        e = np.zeros((n_sites, n_sites))
        e[x, x] = 1.0
        site_partition.append(embed_operator(e, dims[1:], (0,)).real)

    unitaries = [np.eye(d_total, dtype=complex)]
    partitions: list = [None]
    u_cum = unitaries[0]
    for _ in range(n_steps):
        z = rng.standard_normal((d_total, d_total)) + 1j * rng.standard_normal(
            (d_total, d_total)
        )
        q, r = np.linalg.qr(z)
        q = q * (np.diagonal(r) / np.abs(np.diagonal(r)))
        u_cum = q @ u_cum
        unitaries.append(u_cum)
        partitions.append(site_partition)

    ev = MeasuredEvolution(
        dim_g=dim_g,
        dim_b=d_b,
        times=tuple(range(n_steps + 1)),
        unitaries=tuple(unitaries),
        partitions=tuple(partitions),
    )
    bath = np.zeros((d_b, d_b), dtype=complex)
    bath[0, 0] = 1.0
    return ev, bath


def walk_record_law(kernel: OQWKernel, rho_g: np.ndarray, start_vertex: int, n_steps: int):
    """Exact site-record law of the walk by branching the diagonal dynamics:
    the path-product of edge transition weights. Returns (probabilities,
    states) over site tuples (x_1, ..., x_T)."""
    n = len(kernel.vertices)
    frontier = {(): (start_vertex, np.asarray(rho_g, dtype=complex))}
    for _ in range(n_steps):
        nxt = {}
        for hist, (x, mat) in frontier.items():
            for e in kernel.out_edges(kernel.vertices[x]):
                b = np.asarray(kernel.kraus_by_edge[e], dtype=complex)
                y = kernel.vertices.index(e[1])
                nxt[hist + (y,)] = (y, b @ mat @ dagger(b))
        frontier = nxt
    probabilities = {}
    states = {}
    for hist in itertools.product(range(n), repeat=n_steps):
        if hist in frontier:
            mat = frontier[hist][1]
            p = float(np.trace(mat).real)
        else:
            mat, p = None, 0.0
        probabilities[hist] = p
        states[hist] = (
            hermitize(mat / p) if (mat is not None and p > TOL.null_outcome) else None
        )
    return probabilities, states


@dataclass
class ConsistencyReport:
    """Gap between the indirect-measurement law and the classical model."""

    tv_distance: float
    max_trace_distance: float
    law_indirect: dict
    law_pushforward: dict
    nondemolition: NondemolitionReport

    @property
    def passed(self) -> bool:
        return (
            self.tv_distance <= TOL.nondemolition
            and self.max_trace_distance <= TOL.nondemolition
        )


def consistency_check(
    ev: MeasuredEvolution,
    rho_g: np.ndarray,
    rho_b: np.ndarray,
    pointers: list,
) -> ConsistencyReport:
    """Compare indirect pointer readout with the classical pushforward.

    ``pointers`` holds one (PointerMap, pointer_state) pair per measured
    time. Route one extends the space by the pointer registers, interleaves
    the connecting unitaries with the controlled couplings Z_k, and reads
    all pointers at the end. Route two pushes the exact record law through
    the pointer response kernels and mixes the conditional states
    accordingly. Both the total-variation gap between the laws and the
    largest conditional trace distance are reported; for a nondemolition
    evolution both vanish to rounding.
    """
    times = ev.measured_times
    if len(pointers) != len(times):
        raise DimensionError(f"{len(times)} measured times but {len(pointers)} pointers")
    d_g, d_b = ev.dim_g, ev.dim_b
    d_sys = d_g * d_b
    p_dims = [len(pm.pointer_points) for pm, _ in pointers]
    dims_ext = (d_sys,) + tuple(p_dims)
    n_tuples = int(np.prod(p_dims))
    if n_tuples > MAX_OUTCOME_TUPLES:
        raise CapacityError(f"{n_tuples} pointer tuples exceed the cap {MAX_OUTCOME_TUPLES}")

    # branches of the initial product state, extended by the pointers
    bs, ws = _pure_branches(np.kron(np.asarray(rho_g, complex), np.asarray(rho_b, complex)))
    branches, weights = list(bs), list(ws)
    for _, sigma in pointers:
        bp, wp = _pure_branches(np.asarray(sigma, dtype=complex))
        branches = [np.kron(v, p) for v in branches for p in bp]
        weights = [w * u for w in weights for u in wp]
    weights = np.asarray(weights)

    # W = Z_T U_{T,T-1} ... Z_1 U_{1,0} on the extended space
    w_total = None
    prev = 0
    for k, t in enumerate(times):
        u_conn = embed_operator(ev.connecting(prev, t), dims_ext, (0,))
        pm, _ = pointers[k]
        n_y = p_dims[k]
        z = np.zeros((d_sys * n_y, d_sys * n_y), dtype=complex)
        y_index = {y: j for j, y in enumerate(pm.pointer_points)}
        for x, p in enumerate(ev.partitions[t]):
            perm = np.zeros((n_y, n_y))
            for j, y in enumerate(pm.pointer_points):
                perm[y_index[pm.table[(pm.system_points[x], y)]], j] = 1.0
            z += np.kron(np.kron(np.eye(d_g), p), perm)
        z_k = embed_operator(z, dims_ext, (0, 1 + k))
        step = z_k @ u_conn
        w_total = step if w_total is None else step @ w_total
        prev = t

    evolved = [w_total @ v for v in branches]

    # read all pointers jointly; conditional gyroscope states by tracing
    law_a = {}
    cond_a = {}
    for ys in itertools.product(*[range(m) for m in p_dims]):
        acc = np.zeros((d_g, d_g), dtype=complex)
        p = 0.0
        for j, w in enumerate(weights):
            v = evolved[j].reshape((d_g, d_b) + tuple(p_dims))
            sel = v[(slice(None), slice(None)) + ys].reshape(d_g, d_b)
            p += w * float(np.real(np.sum(np.abs(sel) ** 2)))
            acc += w * (sel @ sel.conj().T)
        law_a[ys] = p
        cond_a[ys] = hermitize(acc / p) if p > TOL.null_outcome else None

    # classical route: exact record law pushed through the responses
    unravel = exact_unraveling(ev, rho_g, rho_b)
    responses = [pointer_response(pm, sigma) for pm, sigma in pointers]
    law_b = {}
    cond_b = {}
    for ys in law_a:
        p = 0.0
        acc = np.zeros((d_g, d_g), dtype=complex)
        for xs, px in unravel.probabilities.items():
            if px == 0.0:
                continue
            w = px * float(np.prod([responses[k][y, x] for k, (y, x) in enumerate(zip(ys, xs))]))
            if w == 0.0 or unravel.conditional_states[xs] is None:
                continue
            p += w
            acc += w * unravel.conditional_states[xs]
        law_b[ys] = p
        cond_b[ys] = hermitize(acc / p) if p > TOL.null_outcome else None

    tv = 0.5 * sum(abs(law_a[k] - law_b[k]) for k in law_a)
    mtd = 0.0
    for k in law_a:
        if cond_a[k] is not None and cond_b[k] is not None:
            mtd = max(mtd, trace_distance(cond_a[k], cond_b[k]))
    return ConsistencyReport(
        tv_distance=float(tv),
        max_trace_distance=float(mtd),
        law_indirect=law_a,
        law_pushforward=law_b,
        nondemolition=check_nondemolition(ev),
    )

"""Quantum channels, projective measurement, and pointer-based indirect
measurement on finite spaces.

Composite spaces are always ordered system-first: an operator on S (x) p acts
on column vectors indexed by (s, p) in row-major layout, and probe/pointer
registers are traced out with :func:`oqbm.linalg.partial_trace`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DimensionError
from .linalg import check_density, check_unitary, dagger, hermitize, partial_trace
from .tolerances import TOL

__all__ = [
    "KrausChannel",
    "PointerMap",
    "ConditionalState",
    "apply_channel",
    "stinespring_step",
    "kraus_from_stinespring",
    "choi_matrix",
    "measure_discrete",
    "unnormalized_state",
    "pointer_unitary",
    "indirect_measure",
]


@dataclass(frozen=True)
class KrausChannel:
    """A CPTP map given by its Kraus family.

    ``completeness_tol`` bounds how far sum(K* K) may sit from the identity;
    construction fails beyond it.
    """

    dim: int
    kraus: tuple[np.ndarray, ...]
    completeness_tol: float = TOL.completeness

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.kraus)
        if not ops:
            raise ContractViolation("KrausChannel needs at least one operator")
        for k in ops:
            if k.shape != (self.dim, self.dim):
                raise DimensionError(
                    f"Kraus operator shape {k.shape} does not match dim {self.dim}"
                )
        object.__setattr__(self, "kraus", ops)
        defect = self.completeness_defect()
        if defect > self.completeness_tol:
            raise ContractViolation(
                f"Kraus completeness defect {defect:.3e} exceeds {self.completeness_tol:.1e}"
            )

    def completeness_defect(self) -> float:
        s = sum(dagger(k) @ k for k in self.kraus)
        return float(np.max(np.abs(s - np.eye(self.dim))))


def apply_channel(ch: KrausChannel, rho: np.ndarray) -> np.ndarray:
    """sum_k K_k rho K_k*."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (ch.dim, ch.dim):
        raise DimensionError(f"state shape {rho.shape} does not match channel dim {ch.dim}")
    out = np.zeros_like(rho)
    for k in ch.kraus:
        out += k @ rho @ dagger(k)
    return out


def stinespring_step(rho_s: np.ndarray, v: np.ndarray, rho_p: np.ndarray) -> np.ndarray:
    """One dilated step: couple a fresh probe, evolve unitarily, discard it.

    Returns Tr_p[ V (rho_S (x) rho_p) V* ]. ``v`` must be unitary on the
    composite space within the global unitarity tolerance.
    """
    rho_s = np.asarray(rho_s, dtype=complex)
    rho_p = np.asarray(rho_p, dtype=complex)
    d_s, d_p = rho_s.shape[0], rho_p.shape[0]
    check_unitary(v, what="stinespring unitary")
    if v.shape != (d_s * d_p, d_s * d_p):
        raise DimensionError(
            f"unitary shape {v.shape} does not factor as system {d_s} x probe {d_p}"
        )
    joint = np.kron(rho_s, rho_p)
    return partial_trace(v @ joint @ dagger(v), (d_s, d_p), keep=0)


def kraus_from_stinespring(v: np.ndarray, d_s: int, d_p: int, probe_vec: np.ndarray) -> list[np.ndarray]:
    """Extract Kraus operators K_k = (I (x) <k|) V (I (x) |phi>).

    The extraction basis is the computational basis of the probe; ``probe_vec``
    is the pure probe state the channel couples to.
    """
    if v.shape != (d_s * d_p, d_s * d_p):
        raise DimensionError("unitary does not match the requested factorization")
    phi = np.asarray(probe_vec, dtype=complex).reshape(d_p)
    blocks = v.reshape(d_s, d_p, d_s, d_p)
    # contract the input probe leg with phi, read off one output-probe index per K
    cols = np.einsum("apbq,q->pab", blocks, phi)
    return [np.ascontiguousarray(cols[k]) for k in range(d_p)]


def choi_matrix(ch: KrausChannel) -> np.ndarray:
    """Choi operator (ch (x) id)(|Omega><Omega|), |Omega> unnormalized.

    PSD iff the channel is completely positive; the partial trace over the
    output factor returns transpose(sum K*K).
    """
    d = ch.dim
    c = np.zeros((d * d, d * d), dtype=complex)
    for k in ch.kraus:
        # |Omega> = sum_i |i>|i>, so (K (x) I)|Omega> has components K_{a i} delta_{b i}
        vec = np.einsum("ai,bi->ab", k, np.eye(d)).reshape(-1)
        c += np.outer(vec, vec.conj())
    return c


@dataclass(frozen=True)
class ConditionalState:
    """A single measurement branch: outcome label, its probability, and the
    normalized post-state (``None`` when the branch is numerically null)."""

    outcome: object
    probability: float
    state: np.ndarray | None
    null: bool = False


def measure_discrete(
    rho: np.ndarray,
    projectors: list[np.ndarray],
    outcomes: list | None = None,
) -> list[ConditionalState]:
    """Projective measurement of a finite observable.

    The projector family must be mutually orthogonal and resolve the identity
    within tolerance. Outcomes with probability below the null threshold are
    returned flagged, with no state.
    """
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    outcomes = list(range(len(projectors))) if outcomes is None else list(outcomes)
    total = sum(np.asarray(p, dtype=complex) for p in projectors)
    if np.max(np.abs(total - np.eye(d))) > TOL.projector_resolution:
        raise ContractViolation("projector family does not resolve the identity")
    for i, p in enumerate(projectors):
        for q in projectors[i + 1 :]:
            if np.max(np.abs(p @ q)) > TOL.projector_resolution:
                raise ContractViolation("projectors are not mutually orthogonal")
    branches = []
    for label, p in zip(outcomes, projectors):
        prob = float(np.trace(p @ rho).real)
        if prob < TOL.null_outcome:
            branches.append(ConditionalState(label, max(prob, 0.0), None, null=True))
            continue
        post = p @ rho @ p / prob
        branches.append(ConditionalState(label, prob, hermitize(post)))
    return branches


def unnormalized_state(rho: np.ndarray, d_g: int, n_x: int) -> list[np.ndarray]:
    """Diagonal blocks sigma(x) = (I (x) <x|) rho (I (x) |x>) of a state on
    H_G (x) C^X.

    Tr sigma(x) is the Born probability of x; sigma(x)/Tr sigma(x) is the
    conditional gyroscope state where the trace is positive.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (d_g * n_x, d_g * n_x):
        raise DimensionError("state does not factor as gyroscope x outcome register")
    t = rho.reshape(d_g, n_x, d_g, n_x)
    return [np.ascontiguousarray(t[:, x, :, x]) for x in range(n_x)]


@dataclass(frozen=True)
class PointerMap:
    """Finite pointer kinematics: for each system outcome x, a bijection
    psi(x, .) of the pointer alphabet Y."""

    system_points: tuple
    pointer_points: tuple
    table: dict = field(default_factory=dict)  # (x, y) -> psi(x, y)

    def __post_init__(self):
        ys = set(self.pointer_points)
        for x in self.system_points:
            image = [self.table[(x, y)] for y in self.pointer_points]
            if set(image) != ys or len(image) != len(ys):
                raise ContractViolation(f"pointer map is not a bijection at outcome {x!r}")

    def inverse(self, x, y):
        """The unique y0 with psi(x, y0) = y."""
        for y0 in self.pointer_points:
            if self.table[(x, y0)] == y:
                return y0
        raise KeyError((x, y))


def pointer_unitary(psi: PointerMap) -> np.ndarray:
    """Permutation unitary |x, y> -> |x, psi(x, y)> on C^X (x) C^Y."""
    n_x, n_y = len(psi.system_points), len(psi.pointer_points)
    z = np.zeros((n_x * n_y, n_x * n_y))
    y_index = {y: j for j, y in enumerate(psi.pointer_points)}
    for i, x in enumerate(psi.system_points):
        for j, y in enumerate(psi.pointer_points):
            jj = y_index[psi.table[(x, y)]]
            z[i * n_y + jj, i * n_y + j] = 1.0
    return z


def indirect_measure(
    rho: np.ndarray,
    d_g: int,
    psi: PointerMap,
    sigma_pointer: np.ndarray,
) -> list[ConditionalState]:
    """Measure the X register of a state on H_G (x) C^X through a pointer.

    Couples a pointer register prepared in ``sigma_pointer`` with the
    permutation unitary of ``psi``, projectively reads the pointer, and
    returns the outcome law over Y together with conditional states on
    H_G (x) C^X.
    """
    rho = np.asarray(rho, dtype=complex)
    n_x, n_y = len(psi.system_points), len(psi.pointer_points)
    if rho.shape != (d_g * n_x, d_g * n_x):
        raise DimensionError("state does not match H_G (x) C^X")
    sigma = check_density(sigma_pointer, what="pointer state")
    if sigma.shape != (n_y, n_y):
        raise DimensionError("pointer state does not match the pointer alphabet")
    z = np.kron(np.eye(d_g), pointer_unitary(psi))
    joint = z @ np.kron(rho, sigma) @ z.conj().T
    t = joint.reshape(d_g * n_x, n_y, d_g * n_x, n_y)
    branches = []
    for j, y in enumerate(psi.pointer_points):
        block = np.ascontiguousarray(t[:, j, :, j])
        prob = float(np.trace(block).real)
        if prob < TOL.null_outcome:
            branches.append(ConditionalState(y, max(prob, 0.0), None, null=True))
        else:
            branches.append(ConditionalState(y, prob, hermitize(block / prob)))
    return branches

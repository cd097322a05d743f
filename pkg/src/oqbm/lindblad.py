"""Deterministic continuum evolutions.

The gyroscope master equation, the position-resolved field equation for
Q_t(x), the two-point kernel equation for K_t(x, y), and invariant-state
analysis of the generator (drift speed, degeneracy of the stationary set).

All PDE solving is method of lines: centred spatial differences with
Dirichlet-zero ghost cells and classical RK4 in time. The kernel equation
only differentiates along the diagonal direction, so its derivatives are
discretized by shifting both indices together; on diagonal-supported data
this reproduces the field scheme stencil for stencil.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ContractViolation, DimensionError, StepSizeError
from .linalg import dagger, hermitize
from .tolerances import TOL

__all__ = [
    "LindbladGenerator",
    "QField",
    "KKernel",
    "InvariantReport",
    "DegenerateInvariantError",
    "lindblad_rhs",
    "lindblad_matrix",
    "semigroup_map",
    "evolve_rho_G",
    "evolve_Q",
    "evolve_K",
    "invariant_report",
    "invariant_state",
    "ballistic_speed",
]


@dataclass(frozen=True)
class LindbladGenerator:
    N: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.N, dtype=complex)
        h = np.asarray(self.H, dtype=complex)
        if n.ndim != 2 or n.shape[0] != n.shape[1] or h.shape != n.shape:
            raise DimensionError("N and H must be square matrices of equal dimension")
        if np.max(np.abs(h - h.conj().T)) > TOL.hermiticity:
            raise ContractViolation("H must be Hermitian within 1e-12")
        object.__setattr__(self, "N", n)
        object.__setattr__(self, "H", h)

    @property
    def dim(self) -> int:
        return self.N.shape[0]

    def stiffness(self) -> float:
        """Crude operator-norm bound on the generator, for step-size guards."""
        return 2.0 * float(np.linalg.norm(self.H, 2)) + 2.0 * float(np.linalg.norm(self.N, 2)) ** 2


def lindblad_rhs(g: LindbladGenerator, rho: np.ndarray) -> np.ndarray:
    """-i[H, rho] + N rho N* - {N*N, rho}/2. Traceless by cyclicity."""
    n, h = g.N, g.H
    nn = dagger(n) @ n
    return (
        -1j * (h @ rho - rho @ h)
        + n @ rho @ dagger(n)
        - 0.5 * (nn @ rho + rho @ nn)
    )


def _rhs_batched(g: LindbladGenerator, rho: np.ndarray) -> np.ndarray:
    """lindblad_rhs over a leading batch of matrices (..., d, d)."""
    n, h = g.N, g.H
    nn = dagger(n) @ n
    return (
        -1j * (np.matmul(h, rho) - np.matmul(rho, h))
        + np.matmul(np.matmul(n, rho), dagger(n))
        - 0.5 * (np.matmul(nn, rho) + np.matmul(rho, nn))
    )


def lindblad_matrix(g: LindbladGenerator) -> np.ndarray:
    """The generator as a d^2 x d^2 matrix on row-major vectorized states."""
    n, h = g.N, g.H
    d = g.dim
    eye = np.eye(d)
    nn = dagger(n) @ n
    # row-major vec: vec(A rho B) = (A kron B^T) vec(rho)
    return (
        -1j * (np.kron(h, eye) - np.kron(eye, h.T))
        + np.kron(n, n.conj())
        - 0.5 * (np.kron(nn, eye) + np.kron(eye, nn.T))
    )


def semigroup_map(g: LindbladGenerator, t: float) -> np.ndarray:
    """exp(t L) acting on row-major vectorized states."""
    return scipy.linalg.expm(t * lindblad_matrix(g))


def _rk4(rhs, y, dt: float, n_steps: int):
    for _ in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def evolve_rho_G(g: LindbladGenerator, rho0: np.ndarray, t: float, dt: float) -> np.ndarray:
    """Integrate the master equation with classical RK4 at fixed step.

    The requested dt is shrunk to divide t evenly. Trace drift beyond 1e-6
    signals an unstable step size and raises rather than returning garbage.
    """
    if dt * g.stiffness() > 0.1 + 1e-12:
        raise StepSizeError(
            f"dt={dt:g} too large for generator stiffness {g.stiffness():.3f}"
        )
    rho0 = np.asarray(rho0, dtype=complex)
    if t == 0:
        return rho0.copy()
    n_steps = max(1, int(np.ceil(t / dt - 1e-12)))
    h = t / n_steps
    rho = _rk4(lambda r: lindblad_rhs(g, r), rho0, h, n_steps)
    drift = abs(np.trace(rho).real - np.trace(rho0).real)
    if drift > 1e-6:
        raise StepSizeError(f"trace drifted by {drift:.3e}; reduce dt")
    return hermitize(rho)


@dataclass
class QField:
    """Matrix-valued density field on a uniform grid.

    values[i] is the unnormalized PSD matrix at x_min + i*dx. ``leak`` holds
    the mass absorbed by the Dirichlet boundary so far.
    """

    x_min: float
    dx: float
    values: np.ndarray  # (n, d, d)
    leak: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 3 or self.values.shape[1] != self.values.shape[2]:
            raise DimensionError("QField values must have shape (n, d, d)")

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def positions(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    def mass(self) -> float:
        tr = np.einsum("xii->x", self.values).real
        return float(np.trapezoid(tr, dx=self.dx))

    def marginal(self) -> np.ndarray:
        """Gyroscope state integral Q dx (trapezoid)."""
        w = np.full(self.n_points, self.dx)
        w[0] *= 0.5
        w[-1] *= 0.5
        return np.einsum("x,xij->ij", w, self.values)

    def validate(self) -> "QField":
        if abs(self.mass() + self.leak - 1.0) > TOL.pde_mass:
            raise ContractViolation(
                f"field mass {self.mass() + self.leak:.9f} (incl. leak) deviates from 1"
            )
        w = np.linalg.eigvalsh(0.5 * (self.values + self.values.conj().transpose(0, 2, 1)))
        if float(w.min()) < -1e-8:
            raise ContractViolation(f"field has eigenvalue {w.min():.3e} below -1e-8")
        return self

    @classmethod
    def gaussian(
        cls,
        rho0: np.ndarray,
        x_min: float,
        dx: float,
        n: int,
        center: float = 0.0,
        var: float = 1.0,
    ) -> "QField":
        """Gaussian profile times a fixed gyroscope state, normalized so the
        trapezoid mass is exactly 1 on this grid."""
        x = x_min + dx * np.arange(n)
        profile = np.exp(-((x - center) ** 2) / (2.0 * var))
        w = np.full(n, dx)
        w[0] *= 0.5
        w[-1] *= 0.5
        profile /= float(np.sum(w * profile) * np.trace(np.asarray(rho0)).real)
        return cls(x_min, dx, profile[:, None, None] * np.asarray(rho0, dtype=complex)[None, :, :])


def _shift_zero(a: np.ndarray, k: int) -> np.ndarray:
    """Shift along axis 0 by k sites, filling with zeros (Dirichlet ghosts)."""
    out = np.zeros_like(a)
    if k > 0:
        out[k:] = a[:-k]
    elif k < 0:
        out[:k] = a[-k:]
    else:
        out[...] = a
    return out


def evolve_Q(g: LindbladGenerator, q0: QField, t: float, dt: float) -> QField:
    """Method-of-lines integration of the field equation

        dQ/dt = L(Q) + (1/2) d2Q/dx2 - (N dQ/dx + (dQ/dx) N*).

    Centred differences in space, RK4 in time, Dirichlet-zero boundary with
    the absorbed mass integrated alongside the field so that mass + leak is
    conserved to the scheme's accuracy (not by construction).
    """
    dx = q0.dx
    if dt > 0.4 * dx * dx + 1e-15:
        raise StepSizeError(f"CFL violation: dt={dt:g} exceeds 0.4*dx^2={0.4*dx*dx:g}")
    if t == 0:
        return QField(q0.x_min, dx, q0.values.copy(), q0.leak)
    n_steps = max(1, int(np.ceil(t / dt - 1e-12)))
    h = t / n_steps
    n_op = g.N
    n_dag = dagger(n_op)

    def rhs(state):
        q, _ = state
        up = _shift_zero(q, -1)   # Q[i+1]
        dn = _shift_zero(q, 1)    # Q[i-1]
        d1 = (up - dn) / (2.0 * dx)
        d2 = (up - 2.0 * q + dn) / (dx * dx)
        dq = _rhs_batched(g, q) + 0.5 * d2 - (np.matmul(n_op, d1) + np.matmul(d1, n_dag))
        # outflow through the Dirichlet boundary, from the discrete telescopes
        edge = q[0] + q[-1]
        adv = np.matmul(n_op, q[-1] - q[0]) + np.matmul(q[-1] - q[0], n_dag)
        flux = np.trace(0.5 * edge / dx + 0.5 * adv).real
        return (dq, flux)

    q = q0.values
    leak = q0.leak
    for _ in range(n_steps):
        k1q, k1l = rhs((q, leak))
        k2q, k2l = rhs((q + 0.5 * h * k1q, 0.0))
        k3q, k3l = rhs((q + 0.5 * h * k2q, 0.0))
        k4q, k4l = rhs((q + h * k3q, 0.0))
        q = q + (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        leak = leak + (h / 6.0) * (k1l + 2.0 * k2l + 2.0 * k3l + k4l)
    return QField(q0.x_min, dx, q, leak)


@dataclass
class KKernel:
    """Two-point matrix kernel K(x, y) on the same uniform grid in both
    variables, with the Hermitian symmetry K(x, y) = K(y, x)*."""

    x_min: float
    dx: float
    values: np.ndarray  # (n, n, d, d)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if (
            self.values.ndim != 4
            or self.values.shape[0] != self.values.shape[1]
            or self.values.shape[2] != self.values.shape[3]
        ):
            raise DimensionError("KKernel values must have shape (n, n, d, d)")

    def symmetry_defect(self) -> float:
        swapped = self.values.transpose(1, 0, 3, 2).conj()
        return float(np.max(np.abs(self.values - swapped)))

    def validate(self) -> "KKernel":
        if self.symmetry_defect() > 1e-8:
            raise ContractViolation(
                f"kernel symmetry defect {self.symmetry_defect():.3e} exceeds 1e-8"
            )
        return self

    def diagonal(self) -> np.ndarray:
        n = self.values.shape[0]
        idx = np.arange(n)
        return self.values[idx, idx]


def _diag_shift(k: np.ndarray, s: int) -> np.ndarray:
    """Shift both grid indices together by s, zero-filling at the boundary."""
    out = np.zeros_like(k)
    if s > 0:
        out[s:, s:] = k[:-s, :-s]
    elif s < 0:
        out[:s, :s] = k[-s:, -s:]
    else:
        out[...] = k
    return out


def evolve_K(g: LindbladGenerator, k0: KKernel, t: float, dt: float) -> KKernel:
    """Integrate the kernel equation

        dK/dt = L(K) + (1/2)(dx+dy)^2 K - (N (dx+dy)K + ((dx+dy)K) N*).

    All derivatives act along the diagonal direction, so they are
    discretized as directional differences (both indices shifted together),
    which keeps the Hermitian symmetry exact and reduces to the field scheme
    on the diagonal.
    """
    dx = k0.dx
    if dt > 0.4 * dx * dx + 1e-15:
        raise StepSizeError(f"CFL violation: dt={dt:g} exceeds 0.4*dx^2={0.4*dx*dx:g}")
    if t == 0:
        return KKernel(k0.x_min, dx, k0.values.copy())
    n_steps = max(1, int(np.ceil(t / dt - 1e-12)))
    h = t / n_steps
    n_op = g.N
    n_dag = dagger(n_op)

    def rhs(k):
        up = _diag_shift(k, -1)
        dn = _diag_shift(k, 1)
        d1 = (up - dn) / (2.0 * dx)
        d2 = (up - 2.0 * k + dn) / (dx * dx)
        return _rhs_batched(g, k) + 0.5 * d2 - (np.matmul(n_op, d1) + np.matmul(d1, n_dag))

    return KKernel(k0.x_min, dx, _rk4(rhs, k0.values, h, n_steps))


class DegenerateInvariantError(ContractViolation):
    """The generator has more than one invariant state; carries the report."""

    def __init__(self, report: "InvariantReport"):
        super().__init__(
            f"invariant state is not unique (null dimension {report.null_dimension})"
        )
        self.report = report


@dataclass
class InvariantReport:
    null_dimension: int
    states: list  # representative invariant density matrices
    speeds: list  # Tr((N+N*) rho) per state
    basis: list   # Hermitian null-space basis of the vectorized generator
    residuals: list

    @property
    def degenerate(self) -> bool:
        return self.null_dimension != 1


def invariant_report(g: LindbladGenerator, seed: int = 11) -> InvariantReport:
    """Stationary analysis of the generator.

    The null space of the vectorized generator is computed by SVD with a
    relative threshold. A one-dimensional null space yields the unique
    invariant state. For degenerate null spaces, representative fixed points
    are extracted from the spectral projectors of a generic Hermitian
    null-space element; each candidate is kept only if it is PSD and
    annihilated by the generator.
    """
    d = g.dim
    mat = lindblad_matrix(g)
    _, s, vh = np.linalg.svd(mat)
    s_max = float(s[0]) if s.size else 0.0
    null = [vh[i].conj().reshape(d, d) for i in range(len(s)) if s[i] <= 1e-10 * max(s_max, 1.0)]
    basis = []
    for v in null:
        for cand in (hermitize(v), hermitize(1j * v)):
            if np.max(np.abs(cand)) < 1e-12:
                continue
            # keep only directions independent from what we have
            probe = cand / np.linalg.norm(cand)
            if all(abs(np.vdot(b, probe)) < 1.0 - 1e-9 for b in basis):
                residual = probe - sum(np.vdot(b, probe) * b for b in basis)
                if np.linalg.norm(residual) > 1e-8:
                    basis.append(residual / np.linalg.norm(residual))
    k = len(basis)
    states: list[np.ndarray] = []
    residuals: list[float] = []
    if k == 1:
        rho = basis[0]
        tr = np.trace(rho).real
        if abs(tr) > 1e-12:
            rho = hermitize(rho / tr)
            if float(np.linalg.eigvalsh(rho).min()) >= -1e-9:
                states.append(rho)
                residuals.append(float(np.max(np.abs(lindblad_rhs(g, rho)))))
    elif k > 1:
        rng = np.random.default_rng(seed)
        coeff = rng.standard_normal(k)
        generic = sum(c * b for c, b in zip(coeff, basis))
        w, vecs = np.linalg.eigh(generic)
        used = np.zeros(len(w), dtype=bool)
        for i in range(len(w)):
            if used[i]:
                continue
            cluster = np.abs(w - w[i]) <= 1e-8 * (1.0 + np.abs(w).max())
            used |= cluster
            p = vecs[:, cluster] @ vecs[:, cluster].conj().T
            rho = hermitize(p / np.trace(p).real)
            res = float(np.max(np.abs(lindblad_rhs(g, rho))))
            if res <= 1e-10 and float(np.linalg.eigvalsh(rho).min()) >= -1e-9:
                states.append(rho)
                residuals.append(res)
    nn = g.N + dagger(g.N)
    speeds = [float(np.trace(nn @ rho).real) for rho in states]
    return InvariantReport(k, states, speeds, basis, residuals)


def invariant_state(g: LindbladGenerator) -> np.ndarray:
    """The unique stationary density matrix; raises when it is not unique."""
    rep = invariant_report(g)
    if rep.degenerate or not rep.states:
        raise DegenerateInvariantError(rep)
    return rep.states[0]


def ballistic_speed(g: LindbladGenerator) -> float:
    """Asymptotic drift velocity Tr((N+N*) rho_inf) of the unique invariant
    state; degenerate generators raise with the multi-state report attached."""
    rep = invariant_report(g)
    if rep.degenerate or not rep.states:
        raise DegenerateInvariantError(rep)
    return rep.speeds[0]

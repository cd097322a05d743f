"""Dense linear-algebra primitives used throughout the package.

Everything here operates on plain complex ``numpy`` arrays. States are
represented as density matrices (Hermitian, PSD, unit trace); validation
helpers enforce those contracts at API boundaries using the global
tolerance record.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import ContractViolation, DimensionError
from .tolerances import TOL, Tolerances

__all__ = [
    "dagger",
    "hermitize",
    "is_hermitian",
    "matrix_exp",
    "partial_trace",
    "trace_norm",
    "trace_distance",
    "psd_project",
    "check_density",
    "check_unitary",
    "embed_operator",
    "random_density",
    "random_hermitian",
]


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def hermitize(a: np.ndarray) -> np.ndarray:
    """Project onto the Hermitian part, (A + A*)/2."""
    return 0.5 * (a + a.conj().T)


def is_hermitian(a: np.ndarray, tol: float | None = None) -> bool:
    tol = TOL.hermiticity if tol is None else tol
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def matrix_exp(a: np.ndarray) -> np.ndarray:
    """Matrix exponential of a square complex matrix.

    Normal matrices are exponentiated through their spectral decomposition;
    everything else goes through scaling-and-squaring Pade. Relative
    accuracy is far below 1e-10 for the operator norms used here (<= 10).
    """
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"matrix_exp expects a square matrix, got {a.shape}")
    scale = 1.0 + float(np.abs(a).max(initial=0.0))
    if np.max(np.abs(a - a.conj().T), initial=0.0) <= 1e-13 * scale:
        w, v = np.linalg.eigh(hermitize(a))
        return (v * np.exp(w)) @ v.conj().T
    if np.max(np.abs(a + a.conj().T), initial=0.0) <= 1e-13 * scale:
        # anti-Hermitian: unitary exponential through the spectrum of -iA
        w, v = np.linalg.eigh(hermitize(-1j * a))
        return (v * np.exp(1j * w)) @ v.conj().T
    return scipy.linalg.expm(a)


def partial_trace(rho: np.ndarray, dims: tuple[int, int], keep: int) -> np.ndarray:
    """Trace out one tensor factor of a bipartite operator.

    Parameters
    ----------
    rho : array on H_A (x) H_B, shape (dA*dB, dA*dB)
    dims : (dA, dB)
    keep : 0 to keep the A factor, 1 to keep B
    """
    d_a, d_b = dims
    if rho.shape != (d_a * d_b, d_a * d_b):
        raise DimensionError(
            f"partial_trace: operator shape {rho.shape} does not match dims {dims}"
        )
    if keep not in (0, 1):
        raise ValueError("keep must be 0 or 1")
    t = rho.reshape(d_a, d_b, d_a, d_b)
    if keep == 0:
        return np.trace(t, axis1=1, axis2=3)
    return np.trace(t, axis1=0, axis2=2)


def trace_norm(a: np.ndarray) -> float:
    """Sum of singular values."""
    return float(np.linalg.svd(a, compute_uv=False).sum())


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * trace_norm(a - b)


def psd_project(rho: np.ndarray, tol: Tolerances | None = None) -> np.ndarray:
    """Nearest positive-semidefinite matrix with the input's trace.

    The input must be Hermitian within tolerance (non-Hermitian input is a
    contract violation, not something to silently fix). Negative eigenvalues
    are clipped to zero and the spectrum rescaled so the trace is preserved.
    PSD inputs are returned unchanged up to the Hermitian symmetrization.
    """
    tol = tol or TOL
    if not is_hermitian(rho, 10 * tol.hermiticity):
        raise ContractViolation(
            "psd_project expects a Hermitian matrix; "
            f"max asymmetry {np.max(np.abs(rho - rho.conj().T)):.3e}"
        )
    h = hermitize(rho)
    w, v = np.linalg.eigh(h)
    if w[0] >= 0.0:
        return h
    t_in = float(np.trace(h).real)
    w = np.clip(w, 0.0, None)
    s = float(w.sum())
    if s > 0.0 and t_in > 0.0:
        w *= t_in / s
    return (v * w) @ v.conj().T


def check_density(rho: np.ndarray, tol: Tolerances | None = None, what: str = "state") -> np.ndarray:
    """Validate a density matrix contract; returns the array unchanged."""
    tol = tol or TOL
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"{what}: expected a square matrix, got {rho.shape}")
    asym = float(np.max(np.abs(rho - rho.conj().T)))
    if asym > tol.hermiticity:
        raise ContractViolation(f"{what}: hermiticity defect {asym:.3e} > {tol.hermiticity:.1e}")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > tol.unit_trace:
        raise ContractViolation(f"{what}: trace {tr} deviates from 1 beyond {tol.unit_trace:.1e}")
    w_min = float(np.linalg.eigvalsh(hermitize(rho))[0])
    if w_min < tol.psd:
        raise ContractViolation(f"{what}: negative eigenvalue {w_min:.3e}")
    return rho


def check_unitary(v: np.ndarray, tol: float | None = None, what: str = "operator") -> np.ndarray:
    tol = TOL.unitarity if tol is None else tol
    v = np.asarray(v, dtype=complex)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise DimensionError(f"{what}: expected a square matrix, got {v.shape}")
    defect = float(np.max(np.abs(v @ v.conj().T - np.eye(v.shape[0]))))
    if defect > tol:
        raise ContractViolation(f"{what}: unitarity defect {defect:.3e} > {tol:.1e}")
    return v


def embed_operator(op: np.ndarray, dims: tuple[int, ...], targets: tuple[int, ...]) -> np.ndarray:
    """Lift an operator acting on selected tensor factors to the full space.

    ``op`` acts on the factors listed in ``targets`` (in that order) and as
    the identity elsewhere. Factors are numbered left to right in the tensor
    product with row-major index layout.
    """
    n = len(dims)
    targets = tuple(targets)
    if len(set(targets)) != len(targets) or any(t < 0 or t >= n for t in targets):
        raise DimensionError(f"invalid target factors {targets} for {n} factors")
    d_t = int(np.prod([dims[t] for t in targets]))
    if op.shape != (d_t, d_t):
        raise DimensionError(f"operator shape {op.shape} does not match target dims")
    rest = [i for i in range(n) if i not in targets]
    order = list(targets) + rest
    d_rest = int(np.prod([dims[i] for i in rest])) if rest else 1
    k = np.kron(np.asarray(op, dtype=complex), np.eye(d_rest))
    shape = [dims[i] for i in order]
    t = k.reshape(shape + shape)
    perm = list(np.argsort(order))
    t = t.transpose(perm + [n + p for p in perm])
    d_tot = int(np.prod(dims))
    return np.ascontiguousarray(t.reshape(d_tot, d_tot))


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Random full(ish)-rank density matrix from a Ginibre draw."""
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    return hermitize(rho)


def random_hermitian(d: int, rng: np.random.Generator, norm: float = 1.0) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = hermitize(g)
    s = float(np.linalg.norm(h, 2))
    return h * (norm / s) if s > 0 else h

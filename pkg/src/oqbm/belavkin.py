"""Diffusive stochastic master equation and its reference-measure form.

The normalized filtering equation reads, in Ito form,

    d rho = L(rho) dt + (N rho + rho N* - T(rho) rho) dB,
    dX    = T(rho) dt + dB,         T(rho) = Tr((N + N*) rho),

with B a standard Brownian motion under the physical measure. The linear
(unnormalized) form replaces the innovation by a reference Brownian motion W
under which X - X_0 = W, and the physical measure is recovered by the
exponential weight exp(int T dW - 1/2 int T^2 ds).

Integration is Euler-Maruyama at fixed step. States are required to be
Hermitian on entry and are re-hermitized after every update, which lets the
integrators build each step from the single product N rho (its adjoint is
rho N* and Tr((N + N*) rho) = 2 Re Tr(N rho)). A state is projected back
onto the PSD cone only when an eigenvalue dips below -1e-10, then
renormalized. A path whose trace collapses below 1e-12 before normalization
is aborted: the scalar sampler raises, the ensemble engine freezes the path
and reports the count.

Ensembles are embarrassingly parallel over fixed blocks of paths. Every path
owns a counter-based RNG stream keyed by (seed, path index) and all
reductions run in block order, so results are byte-identical for any thread
count and any path's trajectory can be replayed in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CollapseError, ConfigError, ContractViolation, StepSizeError
from .linalg import dagger, hermitize
from .lindblad import LindbladGenerator
from .rng import ChunkedStreams, path_generator, run_blocks
from .tolerances import TOL

__all__ = [
    "SDEConfig",
    "SDEPath",
    "ReferencePath",
    "SDEEnsembleResult",
    "ReferenceEnsembleResult",
    "as_generator",
    "belavkin_step",
    "unnormalized_step",
    "sample_path",
    "reference_path",
    "girsanov_log_weight",
    "ensemble_run",
    "reference_ensemble",
]

_CHUNK = 256  # time steps drawn per RNG call inside ensemble workers


def as_generator(obj) -> LindbladGenerator:
    """Coerce anything carrying N and H attributes into a generator."""
    if isinstance(obj, LindbladGenerator):
        return obj
    return LindbladGenerator(np.asarray(obj.N), np.asarray(obj.H))


@dataclass(frozen=True)
class SDEConfig:
    dt: float
    t_final: float
    scheme: str = "euler-maruyama"
    renormalize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.scheme != "euler-maruyama":
            raise ConfigError(f"unknown scheme {self.scheme!r}", path="scheme")
        if self.dt <= 0 or self.t_final <= 0:
            raise ConfigError("dt and t_final must be positive", path="dt")
        if self.dt > self.t_final + 1e-15:
            raise ConfigError("dt exceeds t_final", path="dt")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))

    @property
    def dt_eff(self) -> float:
        """Actual step, after rounding to an integer number of steps."""
        return self.t_final / self.n_steps

    def check_against(self, g: LindbladGenerator) -> None:
        stiff = self.dt * float(np.linalg.norm(g.N, 2)) ** 2
        if stiff > 0.1 + 1e-12:
            raise StepSizeError(
                f"dt*|N|^2 = {stiff:.3f} exceeds 0.1; the Euler-Maruyama bias "
                "bound no longer applies"
            )


def _require_hermitian(rho: np.ndarray) -> None:
    """Reject a visibly non-Hermitian initial state.

    The integrators keep their states exactly Hermitian by construction and
    lean on that to halve the work per step, so a skew input would silently
    propagate the wrong equation."""
    defect = float(np.max(np.abs(rho - rho.conj().T)))
    if defect > TOL.hermiticity:
        raise ContractViolation(
            f"initial state is not Hermitian (defect {defect:.3e})"
        )


def _min_eig_batch(states: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of each Hermitian matrix in a (m, d, d) stack."""
    d = states.shape[-1]
    if d == 2:
        a = states[:, 0, 0].real
        b = states[:, 1, 1].real
        off = states[:, 0, 1]
        half = 0.5 * (a - b)
        return 0.5 * (a + b) - np.sqrt(half * half + (off * off.conj()).real)
    return np.linalg.eigvalsh(states)[:, 0]


def _project_psd_batch(states: np.ndarray, flagged: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues of the flagged states in place, preserving
    each trace. Returns the clipped mass per state (zeros where untouched)."""
    out = np.zeros(states.shape[0])
    idx = np.nonzero(flagged)[0]
    if idx.size == 0:
        return out
    if states.shape[-1] == 2:
        # closed form: the clipped state is a multiple of A - lo*I, which is
        # proportional to the projector onto the top eigenvector
        a = states[idx]
        half = 0.5 * (a[:, 0, 0].real - a[:, 1, 1].real)
        tr_in = a[:, 0, 0].real + a[:, 1, 1].real
        off = a[:, 0, 1]
        s = np.sqrt(half * half + (off * off.conj()).real)
        lo = 0.5 * tr_in - s
        hi = 0.5 * tr_in + s
        out[idx] = np.clip(-lo, 0.0, None) + np.clip(-hi, 0.0, None)
        keep = np.where(tr_in > 0, tr_in, hi)
        factor = np.where(hi > 0, keep / np.where(2.0 * s > 0, 2.0 * s, 1.0), 0.0)
        eye = np.eye(2)
        states[idx] = factor[:, None, None] * (a - lo[:, None, None] * eye)
        return out
    w, v = np.linalg.eigh(states[idx])
    out[idx] = np.clip(-w, 0.0, None).sum(axis=1)
    tr_in = np.sum(w, axis=1)
    w = np.clip(w, 0.0, None)
    tr_out = np.sum(w, axis=1)
    ok = (tr_out > 0) & (tr_in > 0)
    scale = np.ones_like(tr_out)
    scale[ok] = tr_in[ok] / tr_out[ok]
    w = w * scale[:, None]
    recon = np.einsum("mik,mk,mjk->mij", v, w, v.conj())
    states[idx] = 0.5 * (recon + recon.conj().transpose(0, 2, 1))
    return out


def _filter_step(
    states: np.ndarray,
    xs: np.ndarray,
    dbs: np.ndarray,
    g: LindbladGenerator,
    dt: float,
    renormalize: bool,
    active: np.ndarray,
):
    """One Euler-Maruyama update of a (m, d, d) stack of normalized states.

    The states must be Hermitian; every left product is then the adjoint of
    a right product (N rho = (rho N*)*) and Tr((N + N*) rho) = 2 Re Tr(rho N*),
    so the whole update needs three matrix products, each evaluated as one
    flat (m d, d) x (d, d) multiply. The drift is assembled one-sided, with
    the rho G* half doubled; the closing hermitization averages in the
    adjoint half, which restores G rho + rho G* while leaving the already
    Hermitian terms untouched. Returns (states, xs, clipped_per_path,
    newly_collapsed_mask). Paths outside ``active`` are left untouched.
    """
    n, nd = g.N, dagger(g.N)
    core = -1j * g.H - 0.5 * (nd @ n)
    m, d = states.shape[0], states.shape[2]
    flat = states.reshape(m * d, d)
    u = (flat @ nd).reshape(m, d, d)
    a = u.conj().transpose(0, 2, 1)
    t_vals = 2.0 * np.einsum("mii->m", u).real
    stoch = u + a
    stoch -= t_vals[:, None, None] * states
    v = (flat @ core.conj().T).reshape(m, d, d)
    w = (np.ascontiguousarray(a).reshape(m * d, d) @ nd).reshape(m, d, d)
    new = states + dt * (2.0 * v + w) + dbs[:, None, None] * stoch
    new = 0.5 * (new + new.conj().transpose(0, 2, 1))

    flagged = (_min_eig_batch(new) < TOL.psd) & active
    clipped = _project_psd_batch(new, flagged)

    traces = np.einsum("mii->m", new).real
    newly_collapsed = (traces < TOL.collapse) & active
    if renormalize:
        safe = np.where(traces > TOL.collapse, traces, 1.0)
        new /= safe[:, None, None]

    new_xs = xs + t_vals * dt + dbs
    frozen = ~active | newly_collapsed
    if frozen.any():
        new[frozen] = states[frozen]
        new_xs[frozen] = xs[frozen]
    return new, new_xs, clipped, newly_collapsed


def belavkin_step(rho, x, db, g, dt, renormalize: bool = True):
    """Single update of the normalized filtering equation.

    Raises CollapseError when the pre-normalization trace falls below 1e-12.
    Shares its arithmetic with the ensemble engine, so iterating this by hand
    reproduces any ensemble path exactly.
    """
    g = as_generator(g)
    rho = np.asarray(rho, dtype=complex)
    _require_hermitian(rho)
    states = rho[None, :, :]
    xs = np.array([float(x)])
    dbs = np.array([float(db)])
    active = np.array([True])
    new, new_xs, _, collapsed = _filter_step(states, xs, dbs, g, dt, renormalize, active)
    if collapsed[0]:
        raise CollapseError(f"state trace fell below {TOL.collapse:g} at X={x:.4f}")
    return new[0], float(new_xs[0])


def unnormalized_step(sigma, dw, g, dt):
    """Single update of the linear reference-measure equation,

        d sigma = L(sigma) dt + (N sigma + sigma N*) dW.

    The state must be Hermitian. Only hermitization is applied after the
    update; the trace carries the likelihood."""
    g = as_generator(g)
    sigma = np.asarray(sigma, dtype=complex)
    _require_hermitian(sigma)
    n, nd = g.N, dagger(g.N)
    core = -1j * g.H - 0.5 * (nd @ n)
    a = n @ sigma
    c = core @ sigma
    new = sigma + dt * (c + dagger(c) + a @ nd) + dw * (a + dagger(a))
    return hermitize(new)


def girsanov_log_weight(t_values: np.ndarray, increments: np.ndarray, dt: float) -> float:
    """Left-endpoint quadrature of log p = int T dW - 1/2 int T^2 ds."""
    t_values = np.asarray(t_values, dtype=float)
    increments = np.asarray(increments, dtype=float)
    return float(np.sum(t_values * increments) - 0.5 * dt * np.sum(t_values * t_values))


@dataclass
class SDEPath:
    """Full record of one filtering trajectory."""

    times: np.ndarray
    states: np.ndarray      # (n_steps + 1, d, d)
    positions: np.ndarray   # (n_steps + 1,)
    increments: np.ndarray  # (n_steps,)
    seed: int
    path_index: int

    def validate(self, drift_bound: float | None = None) -> "SDEPath":
        """Check the stored invariants: every state stays trace one (within
        1e-8 of it) and no position increment is larger than a drift bound
        plus an 8-sigma Brownian kick."""
        traces = np.einsum("kii->k", self.states).real
        if np.max(np.abs(traces - 1.0)) > TOL.sde_trace:
            raise CollapseError(
                f"stored state trace deviates from 1 by {np.max(np.abs(traces - 1.0)):.3e}"
            )
        dt = float(self.times[1] - self.times[0])
        if drift_bound is None:
            drift_bound = float(np.abs(np.diff(self.positions) - self.increments).max() / dt) if self.increments.size else 0.0
        dx = np.abs(np.diff(self.positions))
        if dx.size and float(dx.max()) > drift_bound * dt + 8.0 * np.sqrt(dt):
            raise CollapseError(f"position increment {dx.max():.3e} implausibly large")
        return self


@dataclass
class ReferencePath:
    """One trajectory of the linear equation under the reference measure."""

    times: np.ndarray
    states: np.ndarray      # unnormalized (n_steps + 1, d, d)
    positions: np.ndarray
    increments: np.ndarray
    log_weight: float
    seed: int
    path_index: int


def sample_path(g, rho0, x0, cfg: SDEConfig, path_index: int = 0) -> SDEPath:
    """Integrate one normalized trajectory, storing every step.

    Path ``i`` drawn here is bitwise identical to path ``i`` of
    ensemble_run with the same seed."""
    g = as_generator(g)
    cfg.check_against(g)
    n_steps, dt = cfg.n_steps, cfg.dt_eff
    gen = path_generator(cfg.seed, path_index)
    dbs = gen.standard_normal(n_steps) * np.sqrt(dt)

    d = g.dim
    states = np.empty((n_steps + 1, d, d), dtype=complex)
    positions = np.empty(n_steps + 1)
    states[0] = np.asarray(rho0, dtype=complex)
    _require_hermitian(states[0])
    positions[0] = float(x0)
    cur = states[0][None].copy()
    xs = np.array([positions[0]])
    active = np.array([True])
    for k in range(n_steps):
        cur, xs, _, collapsed = _filter_step(
            cur, xs, dbs[k : k + 1], g, dt, cfg.renormalize, active
        )
        if collapsed[0]:
            raise CollapseError(f"trajectory collapsed at step {k}")
        states[k + 1] = cur[0]
        positions[k + 1] = xs[0]
    return SDEPath(
        times=dt * np.arange(n_steps + 1),
        states=states,
        positions=positions,
        increments=dbs,
        seed=cfg.seed,
        path_index=path_index,
    )


def reference_path(g, rho0, x0, cfg: SDEConfig, path_index: int = 0) -> ReferencePath:
    """Integrate one unnormalized trajectory under the reference measure."""
    g = as_generator(g)
    cfg.check_against(g)
    n_steps, dt = cfg.n_steps, cfg.dt_eff
    gen = path_generator(cfg.seed, path_index)
    dws = gen.standard_normal(n_steps) * np.sqrt(dt)

    d = g.dim
    nn = g.N + dagger(g.N)
    states = np.empty((n_steps + 1, d, d), dtype=complex)
    positions = np.empty(n_steps + 1)
    states[0] = np.asarray(rho0, dtype=complex)
    _require_hermitian(states[0])
    positions[0] = float(x0)
    t_values = np.empty(n_steps)
    sigma = states[0].copy()
    for k in range(n_steps):
        tr = np.trace(sigma).real
        if tr < TOL.collapse:
            raise CollapseError(f"reference trajectory collapsed at step {k}")
        t_values[k] = np.trace(nn @ sigma).real / tr
        sigma = unnormalized_step(sigma, dws[k], g, dt)
        states[k + 1] = sigma
        positions[k + 1] = positions[k] + dws[k]
    return ReferencePath(
        times=dt * np.arange(n_steps + 1),
        states=states,
        positions=positions,
        increments=dws,
        log_weight=girsanov_log_weight(t_values, dws, dt),
        seed=cfg.seed,
        path_index=path_index,
    )


@dataclass
class SDEEnsembleResult:
    times: np.ndarray           # checkpoint times (c,)
    mean_states: np.ndarray     # (c, d, d) plain path averages
    state_stderr: np.ndarray    # (c,) trace-norm-dominating standard error
    x_mean: np.ndarray          # (c,)
    x_var: np.ndarray           # (c,)
    final_positions: np.ndarray
    final_states: np.ndarray
    n_paths: int
    aborted: int
    clipped_mass: float         # largest PSD-projection mass over all paths
    seed: int

    def x_stderr(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.x_var, 0.0) / self.n_paths)


def _checkpoint_indices(n_steps: int, n_checkpoints: int) -> np.ndarray:
    k = min(max(2, n_checkpoints), n_steps + 1)
    return np.unique(np.round(np.linspace(0, n_steps, k)).astype(int))


def ensemble_run(
    g,
    rho0,
    x0,
    n_paths: int,
    cfg: SDEConfig,
    threads: int = 1,
    n_checkpoints: int = 51,
) -> SDEEnsembleResult:
    """Monte Carlo over the filtering equation.

    Paths are simulated in fixed blocks; per-block partial sums are combined
    in block order, so the result depends only on (seed, n_paths), never on
    the thread count. Aborted (collapsed) paths stay frozen at their last
    valid state and are counted in the report.
    """
    g = as_generator(g)
    cfg.check_against(g)
    n_steps, dt = cfg.n_steps, cfg.dt_eff
    d = g.dim
    rho0 = np.asarray(rho0, dtype=complex)
    _require_hermitian(rho0)
    checkpoints = _checkpoint_indices(n_steps, n_checkpoints)
    cp_of_step = {int(s): i for i, s in enumerate(checkpoints)}
    n_cp = len(checkpoints)
    sqrt_dt = np.sqrt(dt)

    def worker(start: int, m: int):
        streams = ChunkedStreams(cfg.seed, start, m)
        states = np.tile(rho0, (m, 1, 1))
        xs = np.full(m, float(x0))
        active = np.ones(m, dtype=bool)
        s1 = np.zeros((n_cp, d, d), dtype=complex)
        s2 = np.zeros((n_cp, d, d))
        sx = np.zeros(n_cp)
        sxx = np.zeros(n_cp)
        clipped = np.zeros(m)

        def record(cp: int):
            s1[cp] += states.sum(axis=0)
            s2[cp] += (states.real**2 + states.imag**2).sum(axis=0)
            sx[cp] += xs.sum()
            sxx[cp] += (xs * xs).sum()

        if 0 in cp_of_step:
            record(cp_of_step[0])
        step = 0
        while step < n_steps:
            k = min(_CHUNK, n_steps - step)
            dbs = streams.normals(k) * sqrt_dt
            for j in range(k):
                states, xs, c, collapsed = _filter_step(
                    states, xs, dbs[:, j], g, dt, cfg.renormalize, active
                )
                clipped += c
                if collapsed.any():
                    active &= ~collapsed
                step += 1
                if step in cp_of_step:
                    record(cp_of_step[step])
        return {
            "s1": s1,
            "s2": s2,
            "sx": sx,
            "sxx": sxx,
            "final_x": xs,
            "final_states": states,
            "aborted": int((~active).sum()),
            "clipped": float(clipped.max()) if m else 0.0,
        }

    blocks = run_blocks(n_paths, worker, threads)
    s1 = np.zeros((n_cp, d, d), dtype=complex)
    s2 = np.zeros((n_cp, d, d))
    sx = np.zeros(n_cp)
    sxx = np.zeros(n_cp)
    finals_x = []
    finals_s = []
    aborted = 0
    clipped = 0.0
    for payload in blocks:
        s1 += payload["s1"]
        s2 += payload["s2"]
        sx += payload["sx"]
        sxx += payload["sxx"]
        finals_x.append(payload["final_x"])
        finals_s.append(payload["final_states"])
        aborted += payload["aborted"]
        clipped = max(clipped, payload["clipped"])

    mean_states = s1 / n_paths
    ent_var = np.maximum(s2 / n_paths - (mean_states.real**2 + mean_states.imag**2), 0.0)
    stderr = np.sqrt(d) * np.sqrt(ent_var.sum(axis=(1, 2)) / n_paths)
    x_mean = sx / n_paths
    x_var = np.maximum(sxx / n_paths - x_mean * x_mean, 0.0)
    return SDEEnsembleResult(
        times=dt * checkpoints.astype(float),
        mean_states=mean_states,
        state_stderr=stderr,
        x_mean=x_mean,
        x_var=x_var,
        final_positions=np.concatenate(finals_x),
        final_states=np.concatenate(finals_s),
        n_paths=n_paths,
        aborted=aborted,
        clipped_mass=clipped,
        seed=cfg.seed,
    )


@dataclass
class ReferenceEnsembleResult:
    final_positions: np.ndarray
    weights: np.ndarray        # exp of the accumulated Girsanov logarithm
    final_traces: np.ndarray   # trace of the unnormalized state (martingale)
    n_paths: int
    seed: int


def reference_ensemble(
    g,
    rho0,
    x0,
    n_paths: int,
    cfg: SDEConfig,
    threads: int = 1,
) -> ReferenceEnsembleResult:
    """Monte Carlo over the linear equation under the reference measure.

    Returns the raw material for change-of-measure estimates: terminal
    positions X = x0 + W, the quadrature weights, and the state traces
    (which track the same likelihood and should agree with the weights up to
    the quadrature's O(dt) bias)."""
    g = as_generator(g)
    cfg.check_against(g)
    n_steps, dt = cfg.n_steps, cfg.dt_eff
    rho0 = np.asarray(rho0, dtype=complex)
    _require_hermitian(rho0)
    sqrt_dt = np.sqrt(dt)
    n_op, nd = g.N, dagger(g.N)
    core_ct = dagger(-1j * g.H - 0.5 * (nd @ n_op))
    d = g.dim

    def worker(start: int, m: int):
        streams = ChunkedStreams(cfg.seed, start, m)
        sigmas = np.tile(rho0, (m, 1, 1))
        xs = np.full(m, float(x0))
        logp = np.zeros(m)
        step = 0
        while step < n_steps:
            k = min(_CHUNK, n_steps - step)
            dws = streams.normals(k) * sqrt_dt
            for j in range(k):
                dw = dws[:, j]
                flat = sigmas.reshape(m * d, d)
                traces = np.einsum("mii->m", sigmas).real
                u = (flat @ nd).reshape(m, d, d)
                t_vals = 2.0 * np.einsum("mii->m", u).real / np.where(
                    traces > TOL.collapse, traces, 1.0
                )
                logp += t_vals * dw - 0.5 * dt * t_vals * t_vals
                a = u.conj().transpose(0, 2, 1)
                stoch = u + a
                v = (flat @ core_ct).reshape(m, d, d)
                w = (np.ascontiguousarray(a).reshape(m * d, d) @ nd).reshape(m, d, d)
                # one-sided drift (rho G* doubled); the hermitization below
                # averages in the adjoint, restoring G rho + rho G*
                sigmas = sigmas + dt * (2.0 * v + w) + dw[:, None, None] * stoch
                sigmas = 0.5 * (sigmas + sigmas.conj().transpose(0, 2, 1))
                xs = xs + dw
                step += 1
        return {
            "x": xs,
            "w": np.exp(logp),
            "tr": np.einsum("mii->m", sigmas).real,
        }

    blocks = run_blocks(n_paths, worker, threads)
    return ReferenceEnsembleResult(
        final_positions=np.concatenate([b["x"] for b in blocks]),
        weights=np.concatenate([b["w"] for b in blocks]),
        final_traces=np.concatenate([b["tr"] for b in blocks]),
        n_paths=n_paths,
        seed=cfg.seed,
    )

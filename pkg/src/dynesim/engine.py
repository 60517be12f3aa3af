"""Conditioned-state propagation under diffusive dyne measurement.

Two interchangeable one-step schemes are provided for the normalized
master-equation filter:

* ``"kraus"`` (production default): a positivity-preserving step of Kraus
  form.  With ``sigma = |-><+|``, measured channel ``sqrt(gamma)*sigma`` at
  efficiency ``eta`` and unmeasured dephasing ``sqrt(gamma_t2/2)*sigma_z``,

      M = I - (gamma/2 sigma^dag sigma + gamma_t2/4 I) dt
            + sqrt(gamma*eta) e^{-i phi} sigma V_dt
      rho' ~ M rho M^dag + (1-eta) gamma sigma rho sigma^dag dt
               + (gamma_t2/2) sigma_z rho sigma_z dt,

  trace-normalized.  Every term is positive semidefinite, so the state
  stays a state for any step size.

* ``"euler"``: explicit Euler-Maruyama on the Ito master equation with
  superoperators ``D[c]rho = c rho c^dag - {c^dag c, rho}/2`` and
  ``H[c]rho = c rho + rho c^dag - tr[(c + c^dag) rho] rho``.  Retained as
  an independent oracle; it can leave the state space at finite dt, which
  is flagged rather than repaired.

Both schemes emit the measurement record from the pre-update state,

    V_dt = sqrt(gamma*eta) * 2 Re(e^{i phi} rho_mp) * dt + dW,

so the noise part of ``V`` has variance ``dt`` (Ito convention).

The same kernels run either on scalars (one trajectory, full record kept)
or vectorized over a batch of independent trajectories, which is the
production path for large ensembles.  Batch lanes never interact, so
per-trajectory results are bitwise independent of how an ensemble is
chunked over workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .modeshape import GammaSchedule, ModeShape, mode_shape_from_gamma
from .noise import NoisePath
from .states import DensityMatrix, TimeGrid

EULER_POSITIVITY_FLOOR = -1e-6


class NumericalIntegrityError(RuntimeError):
    """The propagated state left the physical state space."""


class PositivityWarning(UserWarning):
    """Euler step produced a density matrix with det below the floor."""


@dataclass(frozen=True)
class SimParams:
    """Physical parameters of one simulation run."""

    eta: float
    gamma_t2: float
    sched: GammaSchedule

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.gamma_t2 < 0.0:
            raise ValueError(f"gamma_t2 must be >= 0, got {self.gamma_t2}")

    @property
    def grid(self) -> TimeGrid:
        return self.sched.grid


@dataclass
class TrajectoryRecord:
    """Full per-step output of a single simulated trajectory."""

    grid: TimeGrid
    v_dt: np.ndarray
    phi: np.ndarray
    bloch: np.ndarray  # (n_steps, 3), state after each step
    noise: NoisePath


@dataclass
class EnsembleRun:
    """Batched trajectory output; per-trajectory axis first everywhere."""

    grid: TimeGrid
    n_traj: int
    R_final: np.ndarray
    r2_max_err: np.ndarray  # running max | |R|^2 - int u | per trajectory
    rho_mm: np.ndarray
    rho_pp: np.ndarray
    rho_mp: np.ndarray
    sample_indices: np.ndarray | None = None
    bloch_samples: np.ndarray | None = None  # (B, S, 3)
    R_samples: np.ndarray | None = None  # (B, S) complex
    phi_samples: np.ndarray | None = None  # (B, S)
    phi: np.ndarray | None = None  # (B, T) when recorded
    v_dt: np.ndarray | None = None  # (B, T) when recorded
    min_det: np.ndarray | None = None  # per-step minimum determinant
    max_trace_err: np.ndarray | None = None  # per-step max |trace - 1|

    def bloch_final(self) -> np.ndarray:
        out = np.empty((self.n_traj, 3))
        out[:, 0] = 2.0 * self.rho_mp.real
        out[:, 1] = -2.0 * self.rho_mp.imag
        out[:, 2] = self.rho_pp - self.rho_mm
        return out


# ---------------------------------------------------------------------------
# one-step kernels (vectorized; scalars pass through as 0-d arrays)
# ---------------------------------------------------------------------------

def _signal(mp, e_neg, sg):
    """sqrt(gamma*eta) <sigma e^{-i phi} + h.c.> from the pre-update state."""
    return 2.0 * sg * (np.conj(e_neg) * mp).real


def kraus_step(mm, pp, mp, gamma, eta, gamma_t2, e_neg, v_dt, dt):
    """Positivity-preserving update given the realized record increment."""
    sg = np.sqrt(gamma * eta)
    kap = sg * v_dt
    a = 1.0 - 0.25 * gamma_t2 * dt
    b = 1.0 - (0.5 * gamma + 0.25 * gamma_t2) * dt
    deph = 0.5 * gamma_t2 * dt
    loss = (1.0 - eta) * gamma * dt
    re = (np.conj(e_neg) * mp).real
    nmm = a * a * mm + 2.0 * a * kap * re + kap * kap * pp + loss * pp + deph * mm
    npp = b * b * pp + deph * pp
    nmp = b * (a * mp + kap * e_neg * pp) - deph * mp
    inv = 1.0 / (nmm + npp)
    return nmm * inv, npp * inv, nmp * inv


def euler_step(mm, pp, mp, gamma, eta, gamma_t2, e_neg, dW, dt):
    """Explicit Euler-Maruyama update; trace-preserving by construction."""
    sg = np.sqrt(gamma * eta)
    s2 = 2.0 * (np.conj(e_neg) * mp).real  # <sigma e^{-i phi} + h.c.>
    drive = sg * dW
    nmm = mm + gamma * pp * dt + drive * s2 * pp
    npp = pp - gamma * pp * dt - drive * s2 * pp
    nmp = mp - (0.5 * gamma + gamma_t2) * mp * dt + drive * (e_neg * pp - s2 * mp)
    return nmm, npp, nmp


def step_sme(
    rho: DensityMatrix,
    gamma: float,
    phi: float,
    params: SimParams,
    dW: float,
    dt: float,
    scheme: str = "kraus",
) -> tuple[DensityMatrix, float]:
    """Single conditioned step; returns the new state and the emitted V_dt."""
    if not np.isfinite(dW):
        raise ValueError(f"non-finite noise increment {dW}")
    e_neg = np.exp(-1j * phi)
    sg = np.sqrt(gamma * params.eta)
    v_dt = _signal(rho.rho_mp, e_neg, sg) * dt + dW
    if scheme == "kraus":
        mm, pp, mp = kraus_step(
            rho.rho_mm, rho.rho_pp, rho.rho_mp,
            gamma, params.eta, params.gamma_t2, e_neg, v_dt, dt,
        )
    elif scheme == "euler":
        mm, pp, mp = euler_step(
            rho.rho_mm, rho.rho_pp, rho.rho_mp,
            gamma, params.eta, params.gamma_t2, e_neg, dW, dt,
        )
        det = mm * pp - abs(mp) ** 2
        if det < EULER_POSITIVITY_FLOOR:
            warnings.warn(
                f"euler step left the state space (det={det:.3e})",
                PositivityWarning,
            )
    else:
        raise ValueError(f"unknown stepping scheme {scheme!r}")
    return DensityMatrix(float(mm), float(pp), complex(mp)), float(v_dt)


def step_sse(psi, gamma: float, phi: float, v_dt: float, dt: float):
    """Linear (unnormalized) pure-state filter step at unit efficiency."""
    from .states import PureAmplitudes

    c_plus = psi.c_plus * (1.0 - 0.5 * gamma * dt)
    c_minus = psi.c_minus + psi.c_plus * np.sqrt(gamma) * np.exp(-1j * phi) * v_dt
    return PureAmplitudes(c_minus=complex(c_minus), c_plus=complex(c_plus))


def sse_evolve(v_dt: np.ndarray, phi: np.ndarray, sched: GammaSchedule,
               c_minus0=0.0 + 0.0j, c_plus0=1.0 + 0.0j):
    """Run the linear filter over full records; returns (c_minus, c_plus) paths.

    ``v_dt`` and ``phi`` are (B, T) (or (T,)) arrays; outputs have one extra
    time entry for the initial amplitudes.
    """
    v_dt = np.atleast_2d(v_dt)
    phi = np.atleast_2d(phi)
    B, T = v_dt.shape
    dt = sched.grid.dt
    g = sched.gamma
    cm = np.empty((B, T + 1), dtype=complex)
    cp = np.empty((B, T + 1), dtype=complex)
    cm[:, 0] = c_minus0
    cp[:, 0] = c_plus0
    for k in range(T):
        cp[:, k + 1] = cp[:, k] * (1.0 - 0.5 * g[k] * dt)
        cm[:, k + 1] = cm[:, k] + cp[:, k] * np.sqrt(g[k]) * np.exp(-1j * phi[:, k]) * v_dt[:, k]
    return cm, cp


# ---------------------------------------------------------------------------
# trajectory loops
# ---------------------------------------------------------------------------

def _step_coeffs(params: SimParams, mode: ModeShape):
    """Per-step scalar coefficients shared by all batch lanes."""
    dt = params.grid.dt
    n = params.grid.n_steps
    g = params.sched.gamma[:n]
    sg = np.sqrt(g * params.eta)
    sqrt_u = np.sqrt(np.maximum(mode.u[:n], 0.0))
    # left-Riemann cumulative of u, matching the discrete estimator sum
    cum_u_left = np.concatenate([[0.0], np.cumsum(mode.u[:n] * dt)])
    return g, sg, sqrt_u, cum_u_left


def simulate_ensemble(
    params: SimParams,
    controller,
    rho0,
    dW: np.ndarray,
    scheme: str = "kraus",
    mode: ModeShape | None = None,
    sample_indices=None,
    record_phi: bool = False,
    record_v: bool = False,
    track_integrity: bool = False,
) -> EnsembleRun:
    """Propagate a batch of independent trajectories under one controller.

    Parameters
    ----------
    controller : object with ``next_phase(k) -> (B,)`` and
        ``ingest_record(v_dt, k)`` (see :mod:`dynesim.controllers`).
    rho0 : DensityMatrix applied to all lanes, or a tuple of
        ``(rho_mm, rho_pp, rho_mp)`` arrays of shape (B,).
    dW : (B, n_steps) array of Wiener increments, variance dt each.
    sample_indices : optional iterable of step indices k at which the
        post-step state, the running estimator integral R and the emitted
        phase are stored.
    """
    dt = params.grid.dt
    n = params.grid.n_steps
    dW = np.atleast_2d(dW)
    if dW.shape[1] != n:
        raise ValueError(f"dW must have {n} steps, got {dW.shape[1]}")
    B = dW.shape[0]
    if not np.all(np.isfinite(dW)):
        raise ValueError("non-finite noise increments")

    if mode is None:
        mode = getattr(controller, "mode", None) or mode_shape_from_gamma(params.sched)

    if isinstance(rho0, DensityMatrix):
        mm = np.full(B, rho0.rho_mm)
        pp = np.full(B, rho0.rho_pp)
        mp = np.full(B, rho0.rho_mp, dtype=complex)
    else:
        mm = np.array(rho0[0], dtype=float)
        pp = np.array(rho0[1], dtype=float)
        mp = np.array(rho0[2], dtype=complex)

    g, sg, sqrt_u, cum_u_left = _step_coeffs(params, mode)
    eta, g2 = params.eta, params.gamma_t2

    sample_set = None
    if sample_indices is not None:
        sample_idx = np.asarray(sorted(sample_indices), dtype=int)
        sample_set = {int(k): i for i, k in enumerate(sample_idx)}
        S = sample_idx.size
        bloch_samples = np.empty((B, S, 3))
        R_samples = np.empty((B, S), dtype=complex)
        phi_samples = np.empty((B, S))

    phi_out = np.empty((B, n)) if record_phi else None
    v_out = np.empty((B, n)) if record_v else None

    R = np.zeros(B, dtype=complex)
    r2_max_err = np.zeros(B)
    track_det = track_integrity or scheme == "euler"
    min_det = np.full(B, np.inf) if track_det else None
    max_trace_err = np.zeros(B) if track_integrity else None

    for k in range(n):
        phi = controller.next_phase(k)
        e_neg = np.exp(-1j * phi)
        v = _signal(mp, e_neg, sg[k]) * dt + dW[:, k]
        if scheme == "kraus":
            mm, pp, mp = kraus_step(mm, pp, mp, g[k], eta, g2, e_neg, v, dt)
        else:
            mm, pp, mp = euler_step(mm, pp, mp, g[k], eta, g2, e_neg, dW[:, k], dt)
        if track_det:
            np.minimum(min_det, (mm * pp - np.abs(mp) ** 2).real, out=min_det)
        if track_integrity:
            np.maximum(max_trace_err, np.abs(mm + pp - 1.0), out=max_trace_err)
        controller.ingest_record(v, k)

        R += np.conj(e_neg) * sqrt_u[k] * v
        np.maximum(
            r2_max_err,
            np.abs(np.abs(R) ** 2 - cum_u_left[k + 1]),
            out=r2_max_err,
        )
        if record_phi:
            phi_out[:, k] = phi
        if record_v:
            v_out[:, k] = v
        if sample_set is not None and k in sample_set:
            i = sample_set[k]
            bloch_samples[:, i, 0] = 2.0 * mp.real
            bloch_samples[:, i, 1] = -2.0 * mp.imag
            bloch_samples[:, i, 2] = (pp - mm).real
            R_samples[:, i] = R
            phi_samples[:, i] = phi

    if not (np.all(np.isfinite(mm)) and np.all(np.isfinite(pp))
            and np.all(np.isfinite(mp))):
        raise NumericalIntegrityError("state became non-finite during propagation")
    if scheme == "kraus":
        det = (mm * pp - np.abs(mp) ** 2).real
        if det.min() < -1e-9:
            raise NumericalIntegrityError(
                f"kraus step lost positivity (min det {det.min():.3e})"
            )

    return EnsembleRun(
        grid=params.grid,
        n_traj=B,
        R_final=R,
        r2_max_err=r2_max_err,
        rho_mm=np.asarray(mm, dtype=float),
        rho_pp=np.asarray(pp, dtype=float),
        rho_mp=mp,
        sample_indices=sample_idx if sample_set is not None else None,
        bloch_samples=bloch_samples if sample_set is not None else None,
        R_samples=R_samples if sample_set is not None else None,
        phi_samples=phi_samples if sample_set is not None else None,
        phi=phi_out,
        v_dt=v_out,
        min_det=min_det,
        max_trace_err=max_trace_err,
    )


def simulate_trajectory(
    params: SimParams,
    controller,
    initial: DensityMatrix,
    noise: NoisePath,
    scheme: str = "kraus",
) -> TrajectoryRecord:
    """Single-trajectory convenience wrapper keeping the full record."""
    n = params.grid.n_steps
    try:
        run = simulate_ensemble(
            params,
            controller,
            initial,
            noise.dW.reshape(1, -1),
            scheme=scheme,
            sample_indices=range(n),
            record_phi=True,
            record_v=True,
        )
    except (ValueError, NumericalIntegrityError) as exc:
        raise type(exc)(f"trajectory failed: {exc}") from exc
    return TrajectoryRecord(
        grid=params.grid,
        v_dt=run.v_dt[0],
        phi=run.phi[0],
        bloch=run.bloch_samples[0],
        noise=noise,
    )


def filter_from_record(
    params: SimParams,
    v_dt: np.ndarray,
    phi: np.ndarray,
    rho0,
    sample_indices=None,
) -> EnsembleRun:
    """Re-run the conditioned-state filter on stored records.

    Used to estimate the state from the measurement signal alone, e.g. from
    a maximally mixed prior, independently of how the records were
    generated.  Only the Kraus scheme is offered here since filtering must
    stay on the state space for any input record.
    """
    dt = params.grid.dt
    n = params.grid.n_steps
    v_dt = np.atleast_2d(v_dt)
    phi = np.atleast_2d(phi)
    if v_dt.shape != phi.shape or v_dt.shape[1] != n:
        raise ValueError("v_dt and phi must both be (B, n_steps)")
    B = v_dt.shape[0]

    if isinstance(rho0, DensityMatrix):
        mm = np.full(B, rho0.rho_mm)
        pp = np.full(B, rho0.rho_pp)
        mp = np.full(B, rho0.rho_mp, dtype=complex)
    else:
        mm = np.array(rho0[0], dtype=float)
        pp = np.array(rho0[1], dtype=float)
        mp = np.array(rho0[2], dtype=complex)

    g = params.sched.gamma[: n]
    eta, g2 = params.eta, params.gamma_t2

    sample_set = None
    if sample_indices is not None:
        sample_idx = np.asarray(sorted(sample_indices), dtype=int)
        sample_set = {int(k): i for i, k in enumerate(sample_idx)}
        bloch_samples = np.empty((B, sample_idx.size, 3))

    for k in range(n):
        e_neg = np.exp(-1j * phi[:, k])
        mm, pp, mp = kraus_step(mm, pp, mp, g[k], eta, g2, e_neg, v_dt[:, k], dt)
        if sample_set is not None and k in sample_set:
            i = sample_set[k]
            bloch_samples[:, i, 0] = 2.0 * mp.real
            bloch_samples[:, i, 1] = -2.0 * mp.imag
            bloch_samples[:, i, 2] = (pp - mm).real

    return EnsembleRun(
        grid=params.grid,
        n_traj=B,
        R_final=np.zeros(B, dtype=complex),
        r2_max_err=np.zeros(B),
        rho_mm=np.asarray(mm, dtype=float),
        rho_pp=np.asarray(pp, dtype=float),
        rho_mp=mp,
        sample_indices=sample_idx if sample_set is not None else None,
        bloch_samples=bloch_samples if sample_set is not None else None,
    )

"""Pump-phase controllers: homodyne, heterodyne, adaptive feedback, replay.

The adaptive controller emulates the digital feedback loop of the receiver:
the record increment is pushed through a pure transport delay (the
electrical round-trip of the loop), then a first-order exponential filter,
and the surviving signal drives the pump phase proportionally,

    d phi = P(t_eff) * (processed V_dt),    t_eff = t - delay,

with gain ``P(t) = sqrt(u(t) / int_0^t u)`` clamped below ``t_min``.  The
internal estimate is ``theta = phi - pi/2`` (phase-measurement condition).
The filter is applied before the gain; its DC gain is one so a constant
record passes through unattenuated.

An alternative ``arg_r`` mode recomputes ``theta = arg(R)`` from the
accumulated estimator integral each step instead of integrating the
proportional law; the two coincide in the zero-delay continuum limit and
the arg-R form serves as the oracle in tests.

Controllers are batch-oriented: one instance drives B independent
trajectory lanes in lock-step, with no interaction between lanes.  Emitted
phases are stored unwrapped (cumulative radians).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .modeshape import ModeShape, gain_profile

SCHEMES = ("homodyne", "heterodyne", "adaptive", "replay")


@dataclass(frozen=True)
class ControllerConfig:
    scheme: str = "adaptive"
    phi0: float = 0.0
    f_het: float = 0.0
    delay: float = 0.0
    filter_tau: float = 0.0
    t_min: float | None = None
    replay_source: np.ndarray | None = None
    adaptive_mode: str = "proportional"  # or "arg_r"
    slew_limit: float | None = None  # rad/s clamp on d(phi)/dt, off by default

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.delay < 0.0 or self.filter_tau < 0.0 or self.f_het < 0.0:
            raise ValueError("delay, filter_tau and f_het must be non-negative")
        if self.adaptive_mode not in ("proportional", "arg_r"):
            raise ValueError(f"unknown adaptive_mode {self.adaptive_mode!r}")
        if self.scheme == "replay" and self.replay_source is None:
            raise ValueError("replay scheme requires a replay_source phase program")


class Controller:
    """Batched pump-phase source; one instance per ensemble chunk."""

    def __init__(self, cfg: ControllerConfig, mode: ModeShape, batch: int = 1,
                 phi0: np.ndarray | None = None):
        self.cfg = cfg
        self.mode = mode
        self.batch = batch
        grid = mode.grid
        self.dt = grid.dt
        self.n_steps = grid.n_steps
        self.phi = np.full(batch, cfg.phi0, dtype=float)
        if phi0 is not None:
            self.phi[:] = phi0
        self._phi0 = self.phi.copy()

        self.delay_steps = int(round(cfg.delay / self.dt))
        self._buf = (np.zeros((self.delay_steps, batch))
                     if self.delay_steps > 0 else None)
        self._alpha = (1.0 - np.exp(-self.dt / cfg.filter_tau)
                       if cfg.filter_tau > 0.0 else None)
        self.filter_y = np.zeros(batch)

        self.gain = gain_profile(mode, cfg.t_min)
        self._sqrt_u = np.sqrt(np.maximum(mode.u[: self.n_steps], 0.0))
        self._omega_het = 2.0 * np.pi * cfg.f_het
        self._slew_cap = (cfg.slew_limit * self.dt
                          if cfg.slew_limit is not None else None)
        if cfg.scheme == "replay":
            src = np.atleast_2d(np.asarray(cfg.replay_source, dtype=float))
            if src.shape[1] != self.n_steps:
                raise ValueError(
                    f"replay program has {src.shape[1]} steps, grid wants {self.n_steps}"
                )
            if src.shape[0] == 1 and batch > 1:
                src = np.broadcast_to(src, (batch, self.n_steps))
            elif src.shape[0] != batch:
                raise ValueError("replay program batch mismatch")
            self._replay = src

        # arg_r bookkeeping: estimator integral built from the processed
        # (delayed) record and the phases that were live when it was taken
        self.R = np.zeros(batch, dtype=complex)
        self._phi_ring = np.zeros((self.delay_steps + 1, batch))

    # -- phase emission ----------------------------------------------------

    def next_phase(self, k: int) -> np.ndarray:
        if not 0 <= k < self.n_steps:
            raise IndexError(f"step index {k} outside grid")
        scheme = self.cfg.scheme
        if scheme == "homodyne":
            return self._phi0
        if scheme == "heterodyne":
            return self._phi0 + self._omega_het * (k * self.dt)
        if scheme == "replay":
            return self._replay[:, k]
        return self.phi  # adaptive: advanced by ingest_record

    # -- record ingestion --------------------------------------------------

    def ingest_record(self, v_dt: np.ndarray, k: int) -> None:
        cfg = self.cfg
        if self._buf is not None:
            slot = k % self.delay_steps
            x = self._buf[slot].copy()
            self._buf[slot] = v_dt
        else:
            x = v_dt

        if self._alpha is not None:
            self.filter_y += self._alpha * (x - self.filter_y)
            x = self.filter_y

        if cfg.scheme != "adaptive":
            return

        k_eff = max(k - self.delay_steps, 0)
        if cfg.adaptive_mode == "proportional":
            dphi = self.gain[k_eff] * x
            if self._slew_cap is not None:
                dphi = np.clip(dphi, -self._slew_cap, self._slew_cap)
            self.phi = self.phi + dphi
        else:
            self._ingest_arg_r(x, k, k_eff)

    def _ingest_arg_r(self, x: np.ndarray, k: int, k_eff: int) -> None:
        ring = self._phi_ring
        n_ring = ring.shape[0]
        ring[k % n_ring] = self.phi
        if k >= self.delay_steps:
            # phase that was live when the popped sample was taken,
            # delay_steps ago (the current phase when there is no delay)
            phi_then = ring[(k + 1) % n_ring]
            self.R = self.R + np.exp(1j * phi_then) * self._sqrt_u[k_eff] * x
        mag = np.abs(self.R)
        target = np.angle(self.R) + 0.5 * np.pi
        # unwrap against the current phase; hold phi where R carries no info
        step = wrap_angle(target - self.phi)
        self.phi = np.where(mag > 0.0, self.phi + step, self.phi)

    @property
    def theta(self) -> np.ndarray:
        """Internal dipole-phase estimate under the measurement condition."""
        return self.phi - 0.5 * np.pi


def make_controller(cfg: ControllerConfig, mode: ModeShape, batch: int = 1,
                    phi0: np.ndarray | None = None) -> Controller:
    return Controller(cfg, mode, batch=batch, phi0=phi0)


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a), 2.0 * np.pi)


def wrap_half_pi(a):
    """Wrap pi-periodically to [-pi/2, pi/2); quadrature phase distance."""
    return np.mod(np.asarray(a) + 0.5 * np.pi, np.pi) - 0.5 * np.pi


def phase_condition_error(phi: np.ndarray, oracle_theta: np.ndarray) -> np.ndarray:
    """Distance from the phase-measurement condition, on [-pi/2, pi/2).

    ``oracle_theta`` is the offline estimate arg(R(t)) computed from the
    full record with the phases actually emitted.
    """
    return wrap_half_pi(oracle_theta + 0.5 * np.pi - phi)

"""Decay-rate schedules, emitted mode shapes and the feedback gain profile.

A commanded decay rate ``gamma(t)`` determines the excited-state survival
``|c_plus(t)|^2 = exp(-int_0^t gamma)`` and the emitted intensity
``u(t) = gamma(t) * survival(t)``, which integrates to one over an infinite
record.  A flat emitted mode requires ``gamma(t) = 1/(tau - t)``; the
divergence at ``t = tau`` is capped at ``gamma_max`` so the tail decays
exponentially instead.

All quantities are sampled on the grid nodes (length ``n_steps + 1``) and
integrated with the trapezoid rule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .states import TimeGrid


@dataclass(frozen=True)
class GammaSchedule:
    """Time-sampled decay rate, one value per grid node."""

    grid: TimeGrid
    gamma: np.ndarray
    gamma_max: float
    tau: float

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.shape != (self.grid.n_steps + 1,):
            raise ValueError(
                f"gamma must have {self.grid.n_steps + 1} samples, got {g.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise ValueError("gamma contains non-finite entries")
        if np.any(g < 0.0) or np.any(g > self.gamma_max * (1.0 + 1e-12)):
            raise ValueError("gamma entries must lie in [0, gamma_max]")
        object.__setattr__(self, "gamma", g)


@dataclass(frozen=True)
class ModeShape:
    """Emitted intensity u(t), survival probability and integration caches."""

    grid: TimeGrid
    u: np.ndarray
    survival: np.ndarray
    residual: float
    # trapezoid cumulative integral of u, one value per node
    cum_u: np.ndarray = field(repr=False, default=None)


def flat_gamma(tau: float, gamma_max: float, grid: TimeGrid) -> GammaSchedule:
    """Schedule producing a flat emitted mode of duration ``tau``.

    ``gamma(t) = min(1/(tau - t), gamma_max)`` for ``t < tau`` and
    ``gamma_max`` afterwards; continuous at the crossover
    ``t* = tau - 1/gamma_max``.

    Raises
    ------
    ValueError
        If ``tau >= grid.total`` (photon would not fit the record) or
        ``gamma_max <= 1/tau`` (cap would bind from t = 0).
    """
    if tau >= grid.total:
        raise ValueError(f"tau={tau} must be smaller than the record T={grid.total}")
    if gamma_max <= 1.0 / tau:
        raise ValueError(f"gamma_max={gamma_max} must exceed 1/tau={1.0 / tau}")
    t = grid.times()
    with np.errstate(divide="ignore"):
        raw = np.where(t < tau, 1.0 / np.maximum(tau - t, 1e-300), np.inf)
    gamma = np.minimum(raw, gamma_max)
    return GammaSchedule(grid=grid, gamma=gamma, gamma_max=gamma_max, tau=tau)


def constant_gamma(rate: float, grid: TimeGrid, tau: float | None = None) -> GammaSchedule:
    """Constant-rate schedule, for exponential-mode comparisons."""
    if rate <= 0.0:
        raise ValueError("rate must be positive")
    gamma = np.full(grid.n_steps + 1, rate)
    return GammaSchedule(grid=grid, gamma=gamma, gamma_max=rate, tau=tau or 1.0 / rate)


def mode_shape_from_gamma(sched: GammaSchedule) -> ModeShape:
    """Derive survival and emitted intensity from a rate schedule."""
    t = sched.grid.times()
    cum_gamma = cumulative_trapezoid(sched.gamma, t, initial=0.0)
    survival = np.exp(-cum_gamma)
    u = sched.gamma * survival
    cum_u = cumulative_trapezoid(u, t, initial=0.0)
    return ModeShape(
        grid=sched.grid,
        u=u,
        survival=survival,
        residual=float(survival[-1]),
        cum_u=cum_u,
    )


def feedback_gain(mode: ModeShape, t_index: int, t_min: float | None = None) -> float:
    """Proportional gain ``P(t) = sqrt(u(t) / int_0^t u)`` at one grid node.

    The divergence at t -> 0 is clamped: below ``t_min`` (default 8*dt) the
    gain at ``t_min`` is returned.  Where u vanishes the gain is zero.
    """
    profile = gain_profile(mode, t_min)
    if not 0 <= t_index < profile.size:
        raise IndexError(f"t_index {t_index} outside grid")
    return float(profile[t_index])


def gain_profile(mode: ModeShape, t_min: float | None = None) -> np.ndarray:
    """Vectorized :func:`feedback_gain` over all grid nodes."""
    dt = mode.grid.dt
    if t_min is None:
        t_min = 8.0 * dt
    i_min = min(max(int(round(t_min / dt)), 1), mode.grid.n_steps)
    p = np.zeros_like(mode.u)
    valid = (mode.cum_u > 0.0) & (mode.u > 0.0)
    p[valid] = np.sqrt(mode.u[valid] / mode.cum_u[valid])
    p[:i_min] = p[i_min]
    return p


def export_mode_csv(mode: ModeShape, path) -> None:
    """Two-column CSV (time_s, u_per_s) of the emitted intensity."""
    t = mode.grid.times()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "u_per_s"])
        for ti, ui in zip(t, mode.u):
            writer.writerow([f"{ti:.12g}", f"{ui:.12g}"])

"""Ensemble reductions: phase estimates, circular statistics, back-action.

The single-shot phase estimate is the complex argument of

    R = sum_k exp(i*phi_k) * sqrt(u_k) * V_dt_k,

and dispersion is measured by the Holevo variance ``1/S^2 - 1`` with
sharpness ``S = |<exp(i*(theta_hat - theta_true))>|``.  The intrinsic
estimation efficiency normalizes the sharpness so that an ideal
single-photon phase measurement scores 1 (its posterior sharpness is 1/2).

All reductions over estimate ensembles use compensated summation so that
results are independent of reduction order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .controllers import wrap_angle
from .engine import TrajectoryRecord
from .modeshape import ModeShape

CANONICAL_SHARPNESS = 0.5  # posterior (1 + cos)/2pi of the one-photon state


@dataclass(frozen=True)
class PhaseEstimate:
    theta_hat: float
    r_mag: float
    theta_true: float
    scheme: str


@dataclass
class EnsembleResult:
    scheme: str
    n_total: int
    n_null: int  # shots with R exactly zero (estimate undefined)
    holevo: float
    sharpness: float
    efficiency: float
    holevo_ci: tuple | None = None


@dataclass
class WindowStats:
    t_center: float
    rms_dtheta: float
    rms_arc: float  # coherence-weighted azimuth increment (arc length)
    rms_dz: float
    n_pairs: int
    n_arc: int


@dataclass
class RingStats:
    radial_mean: float
    radial_std: float
    transverse_std: float
    z_std: float


def compute_R(record: TrajectoryRecord, mode: ModeShape) -> complex:
    """Discrete estimator integral of one stored record."""
    if record.grid != mode.grid:
        raise ValueError("record and mode shape are on different grids")
    n = record.grid.n_steps
    sqrt_u = np.sqrt(np.maximum(mode.u[:n], 0.0))
    return complex(np.sum(np.exp(1j * record.phi) * sqrt_u * record.v_dt))


def sharpness(deltas) -> float:
    """|<exp(i*delta)>| via compensated sums."""
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size == 0:
        raise ValueError("empty sample")
    c = math.fsum(np.cos(deltas).tolist())
    s = math.fsum(np.sin(deltas).tolist())
    return math.hypot(c, s) / deltas.size


def holevo_variance(deltas) -> float:
    """S^-2 - 1; returns +inf when the circular mean vanishes."""
    s = sharpness(deltas)
    if s == 0.0:
        return math.inf
    return 1.0 / (s * s) - 1.0


def intrinsic_efficiency(s: float) -> float:
    """Sharpness normalized to the ideal single-photon measurement."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"sharpness must lie in [0, 1], got {s}")
    return s / CANONICAL_SHARPNESS


def holevo_bootstrap_ci(deltas, n_boot: int = 1000, level: float = 0.68,
                        seed: int = 0) -> tuple:
    """Percentile bootstrap interval for the Holevo variance."""
    deltas = np.asarray(deltas, dtype=float)
    rng = np.random.default_rng(seed)
    z = np.exp(1j * deltas)
    vals = np.empty(n_boot)
    for i in range(n_boot):
        pick = rng.integers(0, deltas.size, deltas.size)
        s = abs(z[pick].mean())
        vals[i] = math.inf if s == 0.0 else 1.0 / (s * s) - 1.0
    lo, hi = np.quantile(vals, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def summarize(scheme: str, theta_hat, theta_true, r_mag,
              with_ci: bool = True, seed: int = 0) -> EnsembleResult:
    """Reduce per-shot estimates of one scheme to its figures of merit."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta_true = np.asarray(theta_true, dtype=float)
    r_mag = np.asarray(r_mag, dtype=float)
    null = r_mag == 0.0
    deltas = wrap_angle(theta_hat[~null] - theta_true[~null])
    s = sharpness(deltas)
    vh = math.inf if s == 0.0 else 1.0 / (s * s) - 1.0
    return EnsembleResult(
        scheme=scheme,
        n_total=int(theta_hat.size),
        n_null=int(null.sum()),
        holevo=vh,
        sharpness=s,
        efficiency=intrinsic_efficiency(s),
        holevo_ci=holevo_bootstrap_ci(deltas, seed=seed) if with_ci else None,
    )


# ---------------------------------------------------------------------------
# back-action and trajectory-geometry statistics
# ---------------------------------------------------------------------------

def backaction_stats(bloch_samples: np.ndarray, sample_times: np.ndarray,
                     windows, coherence_floor: float = 0.05) -> list:
    """Time-windowed RMS increments of dipole phase and of z.

    Parameters
    ----------
    bloch_samples : (B, S, 3) conditioned Bloch vectors at sample times.
    windows : iterable of (t_lo, t_hi) windows.
    coherence_floor : pairs where either endpoint has transverse coherence
        magnitude below this floor are excluded from the raw-azimuth RMS
        (azimuth undefined near the poles); sensitivity to the floor should
        be checked by the caller.

    Besides the raw azimuth increment, each window reports the
    coherence-weighted increment (the azimuthal arc length on the Bloch
    sphere, using the mid-pair coherence).  The arc measure stays finite
    where the azimuth degenerates, so it needs no floor and is the robust
    gauge of phase back-action for weakly coherent states.
    """
    x = bloch_samples[:, :, 0]
    y = bloch_samples[:, :, 1]
    z = bloch_samples[:, :, 2]
    ang = np.arctan2(y, x)
    coh = np.hypot(x, y)
    dtheta = wrap_angle(np.diff(ang, axis=1))
    arc = 0.5 * (coh[:, 1:] + coh[:, :-1]) * dtheta
    dz = np.diff(z, axis=1)
    ok = (coh[:, 1:] >= coherence_floor) & (coh[:, :-1] >= coherence_floor)
    mid = 0.5 * (sample_times[1:] + sample_times[:-1])

    out = []
    for t_lo, t_hi in windows:
        in_win = (mid >= t_lo) & (mid < t_hi)
        sel = ok[:, in_win]
        dth = dtheta[:, in_win][sel]
        dzz = dz[:, in_win][sel]
        arcs = arc[:, in_win].ravel()
        out.append(WindowStats(
            t_center=0.5 * (t_lo + t_hi),
            rms_dtheta=float(np.sqrt(np.mean(dth**2))) if dth.size else 0.0,
            rms_arc=float(np.sqrt(np.mean(arcs**2))) if arcs.size else 0.0,
            rms_dz=float(np.sqrt(np.mean(dzz**2))) if dzz.size else 0.0,
            n_pairs=int(dth.size),
            n_arc=int(arcs.size),
        ))
    return out


def ring_stats(bloch: np.ndarray) -> RingStats:
    """Radius and spread statistics of an ensemble of Bloch vectors."""
    r = np.linalg.norm(bloch, axis=1)
    transverse = np.hypot(bloch[:, 0], bloch[:, 1])
    return RingStats(
        radial_mean=float(r.mean()),
        radial_std=float(r.std()),
        transverse_std=float(transverse.std()),
        z_std=float(bloch[:, 2].std()),
    )


# ---------------------------------------------------------------------------
# conditional-tomography validation of the state filter
# ---------------------------------------------------------------------------

@dataclass
class AxisBin:
    axis: str
    center: float
    n: int
    mean_est: float
    mean_tomo: float
    z_score: float


@dataclass
class ValidationReport:
    bins: list
    n_skipped: int

    def max_abs_z(self) -> float:
        return max((abs(b.z_score) for b in self.bins), default=0.0)

    def passes(self, z_max: float = 3.0) -> bool:
        return all(abs(b.z_score) <= z_max for b in self.bins)


def validate_filter(true_bloch: np.ndarray, est_bloch: np.ndarray,
                    rng: np.random.Generator, n_bins: int = 5,
                    n_min: int = 100) -> ValidationReport:
    """Binned agreement between a state filter and simulated tomography.

    For every shot a projective tomography outcome (+/-1 per axis) is drawn
    from the true conditioned state.  Shots are binned by the filtered
    expectation value on each axis; in every populated bin the mean
    tomography outcome is compared with the mean filtered value through a
    z-score built from the binomial sampling error.  A correctly calibrated
    filter gives z ~ N(0, 1) in every bin.
    """
    axes = "xyz"
    outcomes = np.where(
        rng.random(true_bloch.shape) < 0.5 * (1.0 + true_bloch), 1.0, -1.0
    )
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    bins = []
    skipped = 0
    for j, axis in enumerate(axes):
        est = est_bloch[:, j]
        tomo = outcomes[:, j]
        which = np.clip(np.digitize(est, edges) - 1, 0, n_bins - 1)
        for b in range(n_bins):
            sel = which == b
            n = int(sel.sum())
            if n < n_min:
                if n > 0:
                    skipped += 1
                continue
            mean_est = float(est[sel].mean())
            mean_tomo = float(tomo[sel].mean())
            var = max(1.0 - mean_est**2, 1e-12)
            se = math.sqrt(var / n)
            bins.append(AxisBin(
                axis=axis,
                center=float(0.5 * (edges[b] + edges[b + 1])),
                n=n,
                mean_est=mean_est,
                mean_tomo=mean_tomo,
                z_score=(mean_tomo - mean_est) / se,
            ))
    return ValidationReport(bins=bins, n_skipped=skipped)


# ---------------------------------------------------------------------------
# distribution shape and auxiliary closed forms
# ---------------------------------------------------------------------------

def cosine_shape_chi2(deltas, n_bins: int = 64) -> tuple:
    """Chi-square fit of estimate errors to the (1 + cos)/2pi posterior.

    Returns ``(statistic, p_value)`` against a chi-square with
    ``n_bins - 1`` degrees of freedom.
    """
    deltas = wrap_angle(np.asarray(deltas, dtype=float))
    edges = np.linspace(-np.pi, np.pi, n_bins + 1)
    observed, _ = np.histogram(deltas, bins=edges)
    n = deltas.size
    expected = n * ((np.diff(edges) + np.diff(np.sin(edges))) / (2.0 * np.pi))
    stat = float(np.sum((observed - expected) ** 2 / expected))
    p = float(stats.chi2.sf(stat, df=n_bins - 1))
    return stat, p


def histogram_64(values, lo: float = -np.pi, hi: float = np.pi):
    """Fixed 64-bin histogram convention used by all distribution exports."""
    counts, edges = np.histogram(np.asarray(values), bins=64, range=(lo, hi))
    centers = 0.5 * (edges[1:] + edges[:-1])
    return centers, counts


def rabi_tracking_limits(n: int, t_rabi: float) -> tuple:
    """Frequency uncertainty and maximum tolerable drift of Rabi tracking."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if t_rabi <= 0.0:
        raise ValueError("t_rabi must be positive")
    return 1.0 / (2.0 * math.pi * math.sqrt(n) * t_rabi), 1.0 / (8.0 * t_rabi)

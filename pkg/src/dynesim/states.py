"""Qubit state containers and elementary algebra.

Conventions used throughout the package
---------------------------------------
Basis order is ``(|->, |+>)``; the emitter decays from ``|+>`` to ``|->``
through the lowering operator ``sigma = |-><+|``.  Stored density-matrix
components are the two real populations and the upper coherence
``rho_mp = <-|rho|+>``.

Bloch coordinates are fixed once here and used everywhere:

* ``z = <sigma_z> = rho_pp - rho_mm`` (decay drives ``z -> -1``),
* ``x + i*y = 2*<sigma> = 2*conj(rho_mp)``,

i.e. ``x = 2*Re(rho_mp)`` and ``y = -2*Im(rho_mp)``.  With this choice the
dipole phase of a state prepared as ``(|-> + exp(i*theta)|+>)/sqrt(2)``
satisfies ``arg(x + i*y) = theta``, so the azimuth of the Bloch vector is
directly the phase imprinted on the emitted field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TRACE_ATOL = 1e-9
POSITIVITY_ATOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid with step ``dt`` and ``n_steps`` steps."""

    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def total(self) -> float:
        return self.dt * self.n_steps

    def times(self):
        """Node times ``0, dt, ..., n_steps*dt`` (length ``n_steps + 1``)."""
        import numpy as np

        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    @property
    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


@dataclass(frozen=True)
class DensityMatrix:
    """2x2 Hermitian conditioned state; only the upper coherence is stored."""

    rho_mm: float
    rho_pp: float
    rho_mp: complex

    @property
    def trace(self) -> float:
        return self.rho_mm + self.rho_pp

    @property
    def det(self) -> float:
        return self.rho_mm * self.rho_pp - abs(self.rho_mp) ** 2

    def validate(self, atol: float = POSITIVITY_ATOL) -> None:
        if abs(self.trace - 1.0) > TRACE_ATOL:
            raise ValueError(f"trace {self.trace} deviates from 1")
        if self.det < -atol:
            raise ValueError(f"state not positive semidefinite, det={self.det}")


@dataclass(frozen=True)
class PureAmplitudes:
    """Possibly-unnormalized amplitudes ``c_minus|-> + c_plus|+>``."""

    c_minus: complex
    c_plus: complex

    @property
    def norm_sq(self) -> float:
        return abs(self.c_minus) ** 2 + abs(self.c_plus) ** 2

    def to_density(self) -> DensityMatrix:
        """Normalized projector onto the state."""
        n = self.norm_sq
        if n <= 0.0:
            raise ValueError("cannot normalize a null state")
        return DensityMatrix(
            rho_mm=abs(self.c_minus) ** 2 / n,
            rho_pp=abs(self.c_plus) ** 2 / n,
            rho_mp=self.c_minus * self.c_plus.conjugate() / n,
        )


def bloch_from_rho(rho: DensityMatrix) -> BlochVector:
    """Bloch vector of a valid state (sign conventions in the module docstring)."""
    return BlochVector(
        x=2.0 * rho.rho_mp.real,
        y=-2.0 * rho.rho_mp.imag,
        z=rho.rho_pp - rho.rho_mm,
    )


def rho_from_bloch(b: BlochVector) -> DensityMatrix:
    """Inverse of :func:`bloch_from_rho`."""
    return DensityMatrix(
        rho_mm=0.5 * (1.0 - b.z),
        rho_pp=0.5 * (1.0 + b.z),
        rho_mp=0.5 * (b.x - 1j * b.y),
    )


def purity(rho: DensityMatrix) -> float:
    """tr(rho^2); 0.5 for the maximally mixed qubit, 1 for any projector."""
    return rho.rho_mm**2 + rho.rho_pp**2 + 2.0 * abs(rho.rho_mp) ** 2


def dipole_phase(rho: DensityMatrix) -> float:
    """Azimuth arg(x + i*y) of the coherence; the phase the emitted field carries."""
    b = bloch_from_rho(rho)
    return math.atan2(b.y, b.x)


def superposition_state(theta: float) -> DensityMatrix:
    """Equatorial state ``(|-> + exp(i*theta)|+>)/sqrt(2)`` as a density matrix."""
    return PureAmplitudes(
        c_minus=1.0 / math.sqrt(2.0),
        c_plus=complex(math.cos(theta), math.sin(theta)) / math.sqrt(2.0),
    ).to_density()


MAXIMALLY_MIXED = DensityMatrix(rho_mm=0.5, rho_pp=0.5, rho_mp=0.0 + 0.0j)
GROUND = DensityMatrix(rho_mm=1.0, rho_pp=0.0, rho_mp=0.0 + 0.0j)
EXCITED = DensityMatrix(rho_mm=0.0, rho_pp=1.0, rho_mp=0.0 + 0.0j)

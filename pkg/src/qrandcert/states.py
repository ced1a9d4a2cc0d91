"""Energy-bounded BPSK signal states and their two-dimensional reduction.

A binary-input preparation emits one of two pure states whose mean photon
number is at most ``mu``.  That constraint lower-bounds the overlap of the
two states by ``1 - 2*mu``, and the extremal pair saturating the bound can
be written with real amplitudes in a fixed two-dimensional basis.  Every
certification routine downstream works with that reduced pair only.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EnergyBound",
    "ReducedStatePair",
    "reduced_states",
    "overlap",
    "coherent_amplitude",
]


@dataclass(frozen=True)
class EnergyBound:
    """Upper bound ``mu`` on the mean photon number of each prepared state.

    The physically interesting region is ``0 < mu <= 0.5`` (at 0.5 the
    reduced states become orthogonal); values up to 1 are accepted so the
    vacuous-overlap regime can be explored as well.
    """

    mu: float

    def __post_init__(self) -> None:
        mu = float(self.mu)
        if not math.isfinite(mu) or not 0.0 <= mu <= 1.0:
            raise ValueError(f"mean photon number must lie in [0, 1], got {self.mu}")
        object.__setattr__(self, "mu", mu)


@dataclass(frozen=True)
class ReducedStatePair:
    """Unit-norm real 2-vectors representing the two signal states."""

    psi0: np.ndarray
    psi1: np.ndarray

    def __post_init__(self) -> None:
        psi0 = np.asarray(self.psi0, dtype=float)
        psi1 = np.asarray(self.psi1, dtype=float)
        for name, psi in (("psi0", psi0), ("psi1", psi1)):
            if psi.shape != (2,):
                raise ValueError(f"{name} must be a 2-vector, got shape {psi.shape}")
            if abs(np.dot(psi, psi) - 1.0) > 1e-12:
                raise ValueError(f"{name} must have unit norm")
        psi0.setflags(write=False)
        psi1.setflags(write=False)
        object.__setattr__(self, "psi0", psi0)
        object.__setattr__(self, "psi1", psi1)

    @property
    def inner(self) -> float:
        """Scalar product of the two states."""
        return float(np.dot(self.psi0, self.psi1))

    def density(self, x: int) -> np.ndarray:
        """Rank-one density matrix of state ``x`` (0 or 1)."""
        psi = (self.psi0, self.psi1)[x]
        return np.outer(psi, psi)


def reduced_states(bound: EnergyBound) -> ReducedStatePair:
    """Extremal state pair saturating the overlap bound for ``bound.mu``.

    Returns the pair ``psi0 = (1, 0)`` and
    ``psi1 = (1 - 2*mu, 2*sqrt(mu*(1 - mu)))`` whose scalar product equals
    ``1 - 2*mu``; using this pair is without loss of generality for all
    guessing-probability optimizations.
    """
    mu = bound.mu
    psi0 = np.array([1.0, 0.0])
    psi1 = np.array([1.0 - 2.0 * mu, 2.0 * math.sqrt(mu * (1.0 - mu))])
    # Guard against rounding drift at the extreme ends of the range.
    psi1 /= math.hypot(psi1[0], psi1[1])
    return ReducedStatePair(psi0=psi0, psi1=psi1)


def overlap(bound: EnergyBound) -> float:
    """Minimal scalar product ``1 - 2*mu`` implied by the energy bound."""
    return 1.0 - 2.0 * bound.mu


def coherent_amplitude(mu: float, phi: float = 0.0) -> complex:
    """Coherent amplitude ``sqrt(mu) * exp(i*phi)`` of the signal field.

    ``phi`` is the relative phase between signal and local oscillator; the
    default 0 matches the convention used throughout the detection module.
    """
    if mu < 0.0:
        raise ValueError(f"mean photon number must be non-negative, got {mu}")
    return cmath.rect(math.sqrt(mu), phi)

"""Free-fermion results for the XX chain.

Two routes to the same site densities: the momentum-space sum for a uniform
periodic chain starting from the Neel state, and the single-particle
propagator ``exp(-i h t)`` which also covers open boundaries and bond disorder.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg as la
from scipy.optimize import brentq
from scipy.special import j0


@dataclass(frozen=True, eq=False)
class SingleParticleModel:
    L: int
    h: np.ndarray  # rad/ns
    boundary: str = "open"

    def __post_init__(self):
        h = np.asarray(self.h)
        if h.shape != (self.L, self.L) or not np.allclose(h, h.conj().T, atol=1e-14):
            raise ValueError("hopping matrix must be a Hermitian L x L matrix")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @classmethod
    def uniform(cls, L: int, J: float, boundary: str = "open") -> "SingleParticleModel":
        h = np.zeros((L, L))
        for n in range(L - 1):
            h[n, n + 1] = h[n + 1, n] = J
        if boundary == "periodic" and L > 2:
            h[0, L - 1] = h[L - 1, 0] = J
        elif boundary == "periodic":
            # two-site ring: the wrap bond coincides with the single bond
            h[0, 1] = h[1, 0] = 2 * J
        return cls(L, h, boundary)

    @classmethod
    def from_spin_model(cls, model) -> "SingleParticleModel":
        return cls(model.num_sites, model.hopping_matrix(), "open")


def dispersion(L: int, J: float) -> np.ndarray:
    """``2 J cos(2 pi k / L)`` for k = 1..L."""
    k = np.arange(1, L + 1)
    return 2 * J * np.cos(2 * np.pi * k / L)


def _momentum_sum(L: int, J: float, times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    lam = dispersion(L, J)
    return np.exp(-2j * np.outer(t, lam)).mean(axis=1).real


def densities_momentum(L: int, J: float, times) -> tuple[np.ndarray, np.ndarray]:
    """Group densities ``(n_1, n_0)`` of the initially occupied / empty sites."""
    s = _momentum_sum(L, J, times)
    return 0.5 + 0.5 * s, 0.5 - 0.5 * s


def single_particle_propagators(model: SingleParticleModel, times) -> np.ndarray:
    """``exp(-i h t)`` for each time, shape (T, L, L)."""
    evals, evecs = la.eigh(model.h)
    phases = np.exp(-1j * np.outer(np.asarray(times, dtype=float), evals))
    return np.einsum("ik,tk,jk->tij", evecs, phases, evecs.conj())


def densities_propagator(model: SingleParticleModel, occupied: Iterable[int], times) -> np.ndarray:
    """Site densities ``n_i(t) = sum_{j occupied} |U_ij(t)|^2``, shape (T, L)."""
    occupied = sorted(set(int(j) for j in occupied))
    if len(occupied) > model.L or any(not 0 <= j < model.L for j in occupied):
        raise ValueError("occupied sites out of range")
    U = single_particle_propagators(model, times)
    return (np.abs(U[:, :, occupied]) ** 2).sum(axis=2)


def bessel_limit(J: float, times) -> tuple[np.ndarray, np.ndarray]:
    """Infinite-chain limit: ``n_1 = 1/2 + J0(4 J t)/2``, ``n_0 = 1 - n_1``."""
    b = j0(-4 * J * np.asarray(times, dtype=float))
    return 0.5 + 0.5 * b, 0.5 - 0.5 * b


def first_half_filling_time(J: float) -> float:
    """First time at which ``n_1`` of the infinite chain reaches 1/2."""
    root = brentq(j0, 2.0, 3.0, xtol=1e-15)
    return root / (4 * J)


def envelope_exponent(J: float, t_start: float, t_stop: float, samples: int = 20000) -> float:
    """Log-log slope of the local maxima of ``|n_1 - 1/2|`` on ``[t_start, t_stop]``."""
    t = np.linspace(t_start, t_stop, samples)
    y = np.abs(bessel_limit(J, t)[0] - 0.5)
    peaks = np.nonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:]))[0] + 1
    slope, _ = np.polyfit(np.log(t[peaks]), np.log(y[peaks]), 1)
    return float(slope)

"""Dense Lindblad integration with dephasing (and optional relaxation) channels.

The master equation is

    drho/dt = -i[H, rho] + 1/2 sum_n (2 C rho C^+ - {C^+ C, rho})

with dephasing ``C_n = sigma^z_n / sqrt(2 T2*_n)``. For one qubit this gives
``rho_01(t) = rho_01(0) exp(-t / T2*)``, so coherence halves at ``T2* ln 2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as la
from scipy.integrate import solve_ivp

from ..hilbert import DensityMatrix
from ..model import hamiltonian_matrix

MAX_DENSE_SITES = 8

SIGMA_Z = np.diag([1.0, -1.0])  # |0> -> +1, |1> -> -1
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]])  # |1> -> |0>


@dataclass(frozen=True)
class NoiseModel:
    """Per-site T1 and T2* in ns; ``channels`` subset of {"dephasing", "relaxation"}."""

    t1: Optional[Sequence[float]] = None
    t2star: Optional[Sequence[float]] = None
    channels: tuple[str, ...] = ("dephasing",)

    def __post_init__(self):
        unknown = set(self.channels) - {"dephasing", "relaxation"}
        if unknown:
            raise ValueError(f"unknown noise channels {sorted(unknown)}")
        if "dephasing" in self.channels:
            if self.t2star is None or np.any(np.asarray(self.t2star) <= 0):
                raise ValueError("dephasing needs positive T2* values")
        if "relaxation" in self.channels:
            if self.t1 is None or np.any(np.asarray(self.t1) <= 0):
                raise ValueError("relaxation needs positive T1 values")

    @classmethod
    def off(cls) -> "NoiseModel":
        return cls(channels=())


def collapse_operators(noise: NoiseModel, num_sites: int) -> list[tuple[int, np.ndarray, float]]:
    """``(site, 2x2 operator, prefactor)``; the collapse operator is ``prefactor * operator``."""
    ops = []
    if "dephasing" in noise.channels:
        t2 = np.broadcast_to(np.asarray(noise.t2star, dtype=float), (num_sites,))
        ops += [(n, SIGMA_Z, 1.0 / np.sqrt(2.0 * t2[n])) for n in range(num_sites)]
    if "relaxation" in noise.channels:
        t1 = np.broadcast_to(np.asarray(noise.t1, dtype=float), (num_sites,))
        ops += [(n, SIGMA_MINUS, 1.0 / np.sqrt(t1[n])) for n in range(num_sites)]
    return ops


def site_operator(op: np.ndarray, site: int, num_sites: int) -> np.ndarray:
    """Embed a single-qubit operator; bit ``site`` of the basis index is its qubit."""
    return np.kron(np.kron(np.eye(1 << (num_sites - 1 - site)), op), np.eye(1 << site))


class _LindbladRHS:
    """Master-equation right-hand side in the interaction picture of ``H``.

    With ``rho = U rho_I U^+`` and ``U = exp(-iHt)``, only the dissipator drives
    ``rho_I``. The integrator then steps on the slow dephasing/relaxation scale,
    and without collapse operators ``rho_I`` is exactly constant.
    """

    def __init__(self, H: np.ndarray, collapse: list[np.ndarray]):
        self.dim = H.shape[0]
        self.evals, self.V = la.eigh(H)
        self.diag_c = [np.diag(c).copy() for c in collapse if _is_diagonal(c)]
        self.full_c = [c for c in collapse if not _is_diagonal(c)]
        L = sum((c.conj().T @ c for c in collapse), np.zeros_like(H))
        self.L = L
        # sum_k c_k c_k^* over diagonal operators, applied elementwise
        self.diag_weight = sum((np.outer(c, c.conj()) for c in self.diag_c), np.zeros_like(H))

    def unitary(self, t: float) -> np.ndarray:
        return (self.V * np.exp(-1j * self.evals * t)) @ self.V.conj().T

    def dissipator(self, rho: np.ndarray) -> np.ndarray:
        Lr = self.L @ rho
        out = self.diag_weight * rho - 0.5 * (Lr + Lr.conj().T)
        for c in self.full_c:
            out += c @ rho @ c.conj().T
        return out

    def __call__(self, t, y):
        U = self.unitary(t)
        rho = U @ y.reshape(self.dim, self.dim) @ U.conj().T
        return (U.conj().T @ self.dissipator(rho) @ U).ravel()


def _is_diagonal(m: np.ndarray) -> bool:
    return not np.any(m - np.diag(np.diag(m)))


def evolve_lindblad_dense(
    model,
    noise: NoiseModel,
    rho0: DensityMatrix,
    times,
    rtol: float = 1e-7,
    atol: float = 1e-9,
) -> list[DensityMatrix]:
    """Integrate the master equation with adaptive Dormand-Prince RK45.

    Note ``rho0`` is taken at ``times[0]`` and the Hamiltonian is time-independent.
    """
    n = model.num_sites
    if n > MAX_DENSE_SITES:
        raise ValueError(f"dense Lindblad integration is capped at {MAX_DENSE_SITES} sites")
    if tuple(rho0.sites) != tuple(range(n)):
        raise ValueError("rho0 must cover all model sites in order")
    times = np.asarray(times, dtype=float)
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted and non-negative")
    H = hamiltonian_matrix(model).toarray().astype(complex)
    collapse = [pref * site_operator(op, site, n) for site, op, pref in collapse_operators(noise, n)]
    rhs = _LindbladRHS(H, [c.astype(complex) for c in collapse])
    d = rhs.dim
    # interaction-picture state at the first grid time
    U0 = rhs.unitary(times[0])
    y0 = (U0.conj().T @ rho0.matrix.astype(complex) @ U0).ravel()
    if times[-1] == times[0] or not collapse:
        ys = np.repeat(y0[:, None], len(times), axis=1)
    else:
        sol = solve_ivp(rhs, (times[0], times[-1]), y0, method="RK45", t_eval=times, rtol=rtol, atol=atol)
        if not sol.success:
            raise FloatingPointError(f"Lindblad integration failed: {sol.message}")
        ys = sol.y
    out = []
    for k, t in enumerate(times):
        U = rhs.unitary(t)
        out.append(DensityMatrix(rho0.sites, U @ ys[:, k].reshape(d, d) @ U.conj().T))
    return out

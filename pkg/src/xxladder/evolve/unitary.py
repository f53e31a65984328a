"""Closed-system propagation, sector by sector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from ..hilbert import BasisSector, MultiSector, PureState, sector_decompose
from ..model import hamiltonian_matrix


class KrylovConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class Propagator:
    """Solver settings. Sectors up to ``dense_threshold`` are diagonalised exactly."""

    method: str = "auto"  # auto | dense-eig | krylov
    dense_threshold: int = 4096
    krylov_dim: int = 30
    krylov_tol: float = 1e-10
    max_step: float = 10.0  # ns

    def __post_init__(self):
        if self.method not in ("auto", "dense-eig", "krylov"):
            raise ValueError(f"unknown propagation method {self.method!r}")
        if self.krylov_dim < 4:
            raise ValueError("krylov_dim must be at least 4")
        if self.dense_threshold < 1:
            raise ValueError("dense_threshold must be at least 1")

    def use_dense(self, dim: int) -> bool:
        if self.method == "auto":
            return dim <= self.dense_threshold
        return self.method == "dense-eig"


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0:
        raise ValueError("times must be a non-empty 1-D grid")
    if times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted and non-negative")
    return times


def propagate_dense(H, psi0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Rows are exp(-i H t) psi0 for each t, via eigendecomposition."""
    H = H.toarray() if hasattr(H, "toarray") else np.asarray(H)
    evals, evecs = la.eigh(H)
    coeffs = evecs.conj().T @ psi0
    phases = np.exp(-1j * np.outer(times, evals))
    return (phases * coeffs) @ evecs.T


def lanczos(H, v: np.ndarray, m: int):
    """Lanczos with full reorthogonalisation.

    Returns (V, alpha, beta) with ``V`` of shape (k, dim), ``len(alpha) == k``
    and ``len(beta) == k``; ``beta[-1]`` is the residual norm coupling the
    subspace to the rest (zero on lucky breakdown).
    """
    dim = len(v)
    m = min(m, dim)
    V = np.zeros((m, dim), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v / np.linalg.norm(v)
    for j in range(m):
        w = H @ V[j]
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j] - (beta[j - 1] * V[j - 1] if j > 0 else 0)
        for _ in range(2):
            w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        if j + 1 == m:
            break
        if beta[j] < 1e-13:
            return V[: j + 1], alpha[: j + 1], np.append(beta[:j], 0.0)
        V[j + 1] = w / beta[j]
    return V, alpha, beta


def krylov_step(H, psi: np.ndarray, dt: float, settings: Propagator) -> np.ndarray:
    """Advance ``psi`` by ``exp(-i H dt)`` with adaptive substeps."""
    norm = np.linalg.norm(psi)
    t = 0.0
    h = min(dt, settings.max_step)
    while t < dt:
        V, alpha, beta = lanczos(H, psi, settings.krylov_dim)
        evals, evecs = la.eigh_tridiagonal(alpha, beta[:-1]) if len(alpha) > 1 else (alpha, np.ones((1, 1)))
        h = min(h, dt - t)
        while True:
            y = evecs @ (np.exp(-1j * evals * h) * evecs[0].conj())
            err = beta[-1] * abs(y[-1])
            if err <= settings.krylov_tol:
                break
            h *= 0.5
            if h < 1e-12 * max(dt, 1.0):
                raise KrylovConvergenceError(f"Krylov step underflow (residual {err:.2e})")
        psi = norm * (V.T @ y)
        t += h
        h *= 1.5
    if not np.all(np.isfinite(psi)):
        raise FloatingPointError("non-finite amplitudes in Krylov propagation")
    return psi


def propagate_krylov(H, psi0: np.ndarray, times: np.ndarray, settings: Propagator) -> np.ndarray:
    out = np.empty((len(times), len(psi0)), dtype=complex)
    psi, t_prev = np.asarray(psi0, dtype=complex), 0.0
    for k, t in enumerate(times):
        if t > t_prev:
            psi = krylov_step(H, psi, t - t_prev, settings)
            t_prev = t
        out[k] = psi
    return out


def propagate_sector(model, sector: BasisSector, block: np.ndarray, times, settings: Propagator = Propagator()) -> np.ndarray:
    """Time series (rows) of ``block`` evolved inside ``sector``."""
    times = _check_times(times)
    H = hamiltonian_matrix(model, sector)
    if settings.use_dense(sector.dim):
        out = propagate_dense(H, block, times)
    else:
        out = propagate_krylov(H, block, times, settings)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite amplitudes during propagation")
    return out


def evolve_unitary(model, psi0: PureState, times, settings: Propagator = Propagator()) -> list[PureState]:
    """``exp(-iHt)|psi0>`` at every grid time.

    Sector components are propagated independently and recombined, so the
    relative phase between sectors is exact. The result lives in the basis of
    ``psi0`` when that is a single sector, otherwise in the multi-sector basis
    of the populated sectors.
    """
    times = _check_times(times)
    parts = sector_decompose(psi0)
    series = [
        propagate_sector(model, sector, np.sqrt(w) * comp.amplitudes, times, settings)
        for sector, comp, w in parts
    ]
    if len(parts) == 1 and isinstance(psi0.basis, BasisSector):
        return [PureState(psi0.basis, row) for row in series[0]]
    basis = MultiSector(psi0.num_sites, tuple(p[0] for p in parts))
    stacked = np.concatenate(series, axis=1)
    return [PureState(basis, row) for row in stacked]


def evolve_bose_densities(model, occupations, times, settings: Propagator = Propagator()) -> np.ndarray:
    """Site densities ``<n_i(t)>`` (shape T x L) of a Bose-Hubbard quench from a Fock state."""
    from ..model import enumerate_boson_sector

    occ = np.asarray(occupations, dtype=np.int64)
    if occ.shape != (model.num_sites,) or occ.min() < 0 or occ.max() >= model.d:
        raise ValueError("initial occupations must be one entry per site within the truncation")
    sector = enumerate_boson_sector(model.num_sites, model.d, int(occ.sum()))
    code = int(occ @ (model.d ** np.arange(model.num_sites)))
    block = np.zeros(sector.dim, dtype=complex)
    block[np.searchsorted(sector.codes, code)] = 1.0
    series = propagate_sector(model, sector, block, times, settings)
    return (np.abs(series) ** 2) @ sector.occupations

"""Densities, thermal reference states, entropies and their time statistics (natural log)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np
import scipy.linalg as la

from .hilbert import DensityMatrix, PureState, partial_trace


def local_density(state: Union[PureState, DensityMatrix], group: Iterable[int]) -> float:
    """Mean single-site occupation over ``group``."""
    group = list(group)
    if not group:
        raise ValueError("density group must be non-empty")
    if isinstance(state, PureState):
        occ = state.occupations()
        return float(np.mean(occ[group]))
    occ = []
    for site in group:
        rho = partial_trace(state, [site]).matrix
        occ.append(rho[1, 1].real)
    return float(np.mean(occ))


# --- Gibbs ensemble ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GibbsState:
    beta: float
    state: DensityMatrix = field(repr=False)


def _spectrum(H):
    H = H.toarray() if hasattr(H, "toarray") else np.asarray(H)
    return la.eigh(H)


def gibbs_state(H, beta: float, sites: Sequence[int] = None) -> GibbsState:
    """``exp(-beta H) / Z`` over the full Hilbert space of ``H``."""
    evals, evecs = _spectrum(H)
    dim = len(evals)
    if sites is None:
        sites = tuple(range(int(round(math.log2(dim)))))
    if beta == 0:
        return GibbsState(0.0, DensityMatrix(tuple(sites), np.eye(dim, dtype=complex) / dim))
    w = np.exp(-beta * (evals - evals.min() if beta > 0 else evals - evals.max()))
    w /= w.sum()
    rho = (evecs * w) @ evecs.conj().T
    return GibbsState(float(beta), DensityMatrix(tuple(sites), rho))


def _thermal_energy(evals: np.ndarray, beta: float) -> float:
    shifted = -beta * evals
    shifted -= shifted.max()
    w = np.exp(shifted)
    return float(np.dot(w, evals) / w.sum())


def solve_beta(H, psi0: Union[PureState, np.ndarray], max_iter: int = 400) -> float:
    """Inverse temperature at which the thermal energy equals ``<psi0|H|psi0>`` (bisection)."""
    H_dense = H.toarray() if hasattr(H, "toarray") else np.asarray(H)
    vec = psi0.to_full() if isinstance(psi0, PureState) else np.asarray(psi0, dtype=complex)
    if len(vec) != H_dense.shape[0]:
        raise ValueError("state and Hamiltonian dimensions differ")
    target = float(np.vdot(vec, H_dense @ vec).real)
    return beta_for_energy(la.eigvalsh(H_dense), target, max_iter)


def operator_distance(rho_a: DensityMatrix, rho_eq: DensityMatrix) -> float:
    """Largest eigenvalue of ``rho_a - rho_eq`` (non-negative for trace-equal arguments)."""
    a = rho_a.matrix if isinstance(rho_a, DensityMatrix) else np.asarray(rho_a)
    b = rho_eq.matrix if isinstance(rho_eq, DensityMatrix) else np.asarray(rho_eq)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch {a.shape} vs {b.shape}")
    diff = a - b
    diff = 0.5 * (diff + diff.conj().T)
    return max(float(la.eigvalsh(diff)[-1]), 0.0)


def site_averaged_distance(state: PureState, reference: Sequence[DensityMatrix] = None) -> float:
    """Mean single-site distance to ``reference`` (infinite-temperature ``I/2`` by default)."""
    n = state.num_sites
    eq = np.eye(2) / 2
    total = 0.0
    for site in range(n):
        ref = eq if reference is None else reference[site]
        total += operator_distance(partial_trace(state, [site]), ref)
    return total / n


# --- entropies ----------------------------------------------------------------


def von_neumann_entropy(rho: Union[DensityMatrix, np.ndarray]) -> float:
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    p = la.eigvalsh(0.5 * (m + m.conj().T))
    p = p[p > 0]
    return float(-np.sum(p * np.log(p))) if len(p) else 0.0


def page_value(l: int, N: int) -> float:
    """Mean entropy of ``l`` qubits in a Haar-random pure state of ``N``: ln m - m/(2n)."""
    if not 1 <= l <= N:
        raise ValueError("need 1 <= l <= N")
    m, n = 2.0**l, 2.0 ** (N - l)
    return l * math.log(2) - m / (2 * n)


def tripartite_mi(rho_abc: Union[DensityMatrix, PureState], A: Sequence[int], B: Sequence[int], C: Sequence[int]) -> float:
    """S_A + S_B + S_C + S_ABC - S_AB - S_AC - S_BC."""
    A, B, C = (set(int(x) for x in part) for part in (A, B, C))
    if not A or not B or not C or A & B or A & C or B & C:
        raise ValueError("A, B, C must be non-empty and disjoint")
    abc = A | B | C
    if isinstance(rho_abc, DensityMatrix):
        if set(rho_abc.sites) != abc:
            raise ValueError("partition must cover exactly the sites of rho_abc")
        base = rho_abc
    else:
        base = partial_trace(rho_abc, abc)
    S = lambda sites: von_neumann_entropy(partial_trace(base, sites))
    return S(A) + S(B) + S(C) + S(abc) - S(A | B) - S(A | C) - S(B | C)


# --- time series ---------------------------------------------------------------


@dataclass
class TimeSeries:
    times: np.ndarray
    values: dict[str, np.ndarray]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) < 0):
            raise ValueError("times must be sorted")
        self.values = {k: np.asarray(v, dtype=float) for k, v in self.values.items()}
        for k, v in self.values.items():
            if len(v) != len(self.times):
                raise ValueError(f"series {k!r} has {len(v)} samples for {len(self.times)} times")

    @property
    def labels(self) -> list[str]:
        return list(self.values)


def time_average(series: TimeSeries, t_min: float) -> dict[str, float]:
    mask = series.times >= t_min
    if not np.any(mask):
        raise ValueError(f"no samples at or after t = {t_min} ns")
    return {k: float(np.mean(v[mask])) for k, v in series.values.items()}


@dataclass(frozen=True)
class VolumeLawFit:
    sizes: np.ndarray
    entropies: np.ndarray
    slope: float
    intercept: float
    residual_norm: float


def volume_law_fit(sizes, entropies) -> VolumeLawFit:
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(entropies, dtype=float)
    if len(x) < 2 or len(x) != len(y):
        raise ValueError("need at least two (l, S) points")
    if np.ptp(x) == 0:
        raise ValueError("subsystem sizes are degenerate")
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.linalg.norm(A @ [slope, intercept] - y))
    return VolumeLawFit(x, y, float(slope), float(intercept), resid)


# --- thermal reference for a lattice model ---------------------------------------


def beta_for_energy(evals, target: float, max_iter: int = 400) -> float:
    """Bisection for ``E(beta) = target`` on a known spectrum."""
    evals = np.sort(np.asarray(evals, dtype=float))
    scale = max(float(np.max(np.abs(evals))), 1e-300)
    tol = 1e-9 * scale
    if target < evals[0] - tol or target > evals[-1] + tol:
        raise ValueError("target energy outside the spectral range")
    mean = float(evals.mean())
    if abs(target - mean) <= 1e-12 * scale:
        return 0.0
    sign = 1.0 if target < mean else -1.0
    lo, hi = 0.0, sign / scale
    while (_thermal_energy(evals, hi) - target) * sign > tol:
        lo, hi = hi, hi * 2
        if abs(hi) > 1e12 / scale:
            raise ValueError("failed to bracket beta")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        e = _thermal_energy(evals, mid)
        if abs(e - target) < tol:
            return mid
        if (e - target) * sign > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


MAX_THERMAL_SITES = 16


@dataclass(frozen=True)
class ThermalReference:
    beta: float
    energy: float  # <psi0|H|psi0>, rad/ns
    site_occupations: np.ndarray

    def site_states(self) -> list[np.ndarray]:
        """Single-site Gibbs marginals; diagonal because H conserves excitation number."""
        return [np.diag([1.0 - n, n]).astype(complex) for n in self.site_occupations]


def thermal_reference(model, psi0: PureState) -> ThermalReference:
    """Gibbs ensemble of a spin model matched to the energy of ``psi0``.

    The spectral mean is ``sum(detunings)/2`` in closed form, so when the state
    energy equals it no diagonalisation is needed (``beta = 0``). Otherwise all
    sectors are diagonalised.
    """
    from .hilbert import enumerate_sector, sector_decompose
    from .model import hamiltonian_matrix

    n = model.num_sites
    energy = 0.0
    for sector, comp, w in sector_decompose(psi0):
        H = hamiltonian_matrix(model, sector)
        energy += w * float(np.vdot(comp.amplitudes, H @ comp.amplitudes).real)
    mean = 0.5 * float(np.sum(model.detunings))
    scale = max(float(np.max(np.abs(model.detunings), initial=0.0)), model.mean_coupling, 1e-300) * n
    if abs(energy - mean) <= 1e-12 * scale:
        return ThermalReference(0.0, energy, np.full(n, 0.5))
    if n > MAX_THERMAL_SITES:
        raise ValueError(f"finite-temperature reference is limited to {MAX_THERMAL_SITES} sites")
    spectra = []
    for k in range(n + 1):
        sector = enumerate_sector(n, k)
        evals, V = la.eigh(hamiltonian_matrix(model, sector).toarray())
        bits = (sector.states[:, None] >> np.arange(n)) & 1
        spectra.append((evals, (np.abs(V) ** 2).T @ bits))  # (dim, n) occupations per eigenstate
    all_e = np.concatenate([e for e, _ in spectra])
    beta = beta_for_energy(all_e, energy)
    shift = -beta * all_e
    shift = shift.max()
    Z, occ = 0.0, np.zeros(n)
    for evals, occ_e in spectra:
        w = np.exp(-beta * evals - shift)
        Z += w.sum()
        occ += w @ occ_e
    return ThermalReference(float(beta), energy, occ / Z)

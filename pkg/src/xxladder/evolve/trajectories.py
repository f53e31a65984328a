"""Monte Carlo wave-function unravelling of the Lindblad equation.

States are kept as per-sector blocks. The effective Hamiltonian
``H - (i/2) sum C^+ C`` is diagonal-damped and number conserving, so each
sector block evolves on its own; relaxation jumps move amplitude one sector down.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as la
from scipy.optimize import brentq

from ..hilbert import DensityMatrix, PureState, enumerate_sector, sector_decompose
from ..model import hamiltonian_matrix
from .lindblad import NoiseModel, collapse_operators

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrajectoryPlan:
    num_trajectories: int = 500
    seed: int = 0
    jump_tol: float = 1e-10  # ns, bracket width when locating a jump time

    def __post_init__(self):
        if self.num_trajectories < 1:
            raise ValueError("num_trajectories must be >= 1")


@dataclass
class TrajectoryResult:
    times: np.ndarray
    densities: np.ndarray  # (T, N) trajectory mean of <n_i>
    densities_stderr: np.ndarray
    rho: Optional[list[DensityMatrix]]  # averaged reduced states on ``keep``
    keep: Optional[tuple[int, ...]]
    site_rho: np.ndarray = None  # (T, N, 2, 2) averaged single-site states
    num_jumps: int = 0
    resampled: int = 0


class _SectorPropagator:
    """exp(-i K t) restricted to one sector, K = H - (i/2) diag(damping)."""

    def __init__(self, model, sector, damping: np.ndarray):
        self.sector = sector
        H = hamiltonian_matrix(model, sector).toarray()
        self.uniform = np.ptp(damping) == 0.0 if len(damping) else True
        if self.uniform:
            self.gamma = float(damping[0]) if len(damping) else 0.0
            self.evals, self.V = la.eigh(H)
            self.Vinv = self.V.conj().T
        else:
            self.gamma = 0.0
            K = H - 0.5j * np.diag(damping)
            self.evals, self.V = la.eig(K)
            self.Vinv = la.inv(self.V)

    def coefficients(self, block: np.ndarray) -> np.ndarray:
        return self.Vinv @ block

    def evaluate(self, coeffs: np.ndarray, dts: np.ndarray) -> np.ndarray:
        """Rows are the (unnormalised) block after each elapsed time in ``dts``."""
        phase = np.exp(-1j * np.outer(dts, self.evals))
        if self.uniform:
            phase *= np.exp(-0.5 * self.gamma * dts)[:, None]
        return (phase * coeffs) @ self.V.T


class _Unraveling:
    def __init__(self, model, noise: NoiseModel):
        self.model = model
        self.n = model.num_sites
        self.ops = collapse_operators(noise, self.n)
        self._props: dict[int, _SectorPropagator] = {}

    def damping(self, sector) -> np.ndarray:
        states = sector.states
        total = np.zeros(len(states))
        for site, op, pref in self.ops:
            bit = (states >> site) & 1
            # C^+ C is diagonal for both channels: sigma_z^2 = 1, sigma^+ sigma^- = n
            diag = np.ones(len(states)) if op[0, 0] != 0 else bit.astype(float)
            total += pref**2 * diag
        return total

    def prop(self, k: int) -> _SectorPropagator:
        if k not in self._props:
            sector = enumerate_sector(self.n, k)
            self._props[k] = _SectorPropagator(self.model, sector, self.damping(sector))
        return self._props[k]

    def apply_jump(self, blocks: dict[int, np.ndarray], site: int, op: np.ndarray) -> dict[int, np.ndarray]:
        out: dict[int, np.ndarray] = {}
        if op[0, 0] != 0:  # sigma_z
            for k, b in blocks.items():
                states = self.prop(k).sector.states
                out[k] = b * np.where((states >> site) & 1, -1.0, 1.0)
            return out
        for k, b in blocks.items():  # sigma^-: |..1_site..> -> |..0_site..>
            if k == 0:
                continue
            src = self.prop(k).sector
            dst = self.prop(k - 1).sector
            sel = ((src.states >> site) & 1) == 1
            new = np.zeros(dst.dim, dtype=complex)
            new[dst.indices(src.states[sel] ^ (1 << site))] = b[sel]
            out[k - 1] = out.get(k - 1, 0) + new
        return out

    def jump_weights(self, blocks: dict[int, np.ndarray]) -> np.ndarray:
        w = np.empty(len(self.ops))
        for idx, (site, op, pref) in enumerate(self.ops):
            total = 0.0
            for k, b in blocks.items():
                states = self.prop(k).sector.states
                p = np.abs(b) ** 2
                total += p.sum() if op[0, 0] != 0 else p[((states >> site) & 1) == 1].sum()
            w[idx] = pref**2 * total
        return w


def _blocks_of(psi: PureState) -> dict[int, np.ndarray]:
    return {s.num_excitations: np.sqrt(w) * c.amplitudes for s, c, w in sector_decompose(psi)}


def _occupation_matrix(states: np.ndarray, n: int) -> np.ndarray:
    return ((states[:, None] >> np.arange(n)) & 1).astype(float)


def _reduced_batch(full: np.ndarray, n: int, keep: Sequence[int]) -> np.ndarray:
    """Batched partial trace of rows of ``full`` (each a 2**n state vector)."""
    T = full.shape[0]
    rest = [s for s in range(n) if s not in keep]
    order = [0] + [1 + n - 1 - s for s in reversed(keep)] + [1 + n - 1 - s for s in reversed(rest)]
    m = full.reshape((T,) + (2,) * n).transpose(order).reshape(T, 1 << len(keep), -1)
    return np.einsum("tar,tbr->tab", m, m.conj())


def _run_one(unr: _Unraveling, blocks0, times, rng, jump_tol, record):
    """One trajectory; calls ``record(grid_slice, block_series, norm2)`` for each no-jump stretch."""
    blocks = {k: b.copy() for k, b in blocks0.items()}
    t0 = times[0]
    start = 0
    r = rng.random()
    jumps = 0
    while start < len(times):
        coeffs = {k: unr.prop(k).coefficients(b) for k, b in blocks.items()}
        dts = times[start:] - t0
        series = {k: unr.prop(k).evaluate(c, dts) for k, c in coeffs.items()}
        norm2 = sum(np.sum(np.abs(s) ** 2, axis=1) for s in series.values())
        if not unr.ops:
            below = np.array([], dtype=int)
        else:
            below = np.nonzero(norm2 < r)[0]
        stop = len(dts) if len(below) == 0 else below[0]
        if stop > 0:
            record(slice(start, start + stop), {k: s[:stop] for k, s in series.items()}, norm2[:stop])
        if stop == len(dts):
            break
        if norm2[stop] <= 1e-300 or not np.isfinite(norm2[stop]):
            raise FloatingPointError("trajectory norm underflow")
        lo = 0.0 if stop == 0 else dts[stop - 1]
        hi = dts[stop]

        def f(dt):
            return sum(np.sum(np.abs(unr.prop(k).evaluate(c, np.array([dt]))) ** 2) for k, c in coeffs.items()) - r

        tau = brentq(f, lo, hi, xtol=jump_tol) if f(lo) > 0 else lo
        state = {k: unr.prop(k).evaluate(c, np.array([tau]))[0] for k, c in coeffs.items()}
        weights = unr.jump_weights(state)
        channel = rng.choice(len(weights), p=weights / weights.sum())
        site, op, _ = unr.ops[channel]
        state = unr.apply_jump(state, site, op)
        nrm = np.sqrt(sum(np.vdot(b, b).real for b in state.values()))
        blocks = {k: b / nrm for k, b in state.items() if np.any(b != 0)}
        t0 = t0 + tau
        start += stop
        r = rng.random()
        jumps += 1
    return jumps


def evolve_trajectories(
    model,
    noise: NoiseModel,
    psi0: PureState,
    times,
    plan: TrajectoryPlan = TrajectoryPlan(),
    keep: Optional[Sequence[int]] = None,
) -> TrajectoryResult:
    """Trajectory-averaged site densities (with standard errors) and reduced states on ``keep``.

    ``keep`` defaults to all sites when the system has at most 8 sites.
    Trajectory ``i`` draws from a generator spawned deterministically from ``plan.seed``.
    """
    times = np.asarray(times, dtype=float)
    n = model.num_sites
    if keep is None and n <= 8:
        keep = tuple(range(n))
    keep = tuple(sorted(keep)) if keep is not None else None
    unr = _Unraveling(model, noise)
    blocks0 = _blocks_of(psi0)

    T = len(times)
    dens_sum = np.zeros((T, n))
    dens_sq = np.zeros((T, n))
    rho_sum = np.zeros((T, 1 << len(keep), 1 << len(keep)), dtype=complex) if keep else None
    site_sum = np.zeros((T, n, 2, 2), dtype=complex)
    pending: list = []

    def record(sl, series, norm2):
        occ = 0.0
        full = np.zeros((sl.stop - sl.start, 1 << n), dtype=complex)
        for k, s in series.items():
            states = unr.prop(k).sector.states
            normed = s / np.sqrt(norm2)[:, None]
            occ = occ + (np.abs(normed) ** 2) @ _occupation_matrix(states, n)
            full[:, states] = normed
        sites = np.stack([_reduced_batch(full, n, [i]) for i in range(n)], axis=1)
        pending.append((sl, occ, sites, _reduced_batch(full, n, keep) if keep else None))

    children = np.random.SeedSequence(plan.seed).spawn(plan.num_trajectories)
    total_jumps = 0
    resampled = 0
    occ_one = np.zeros((T, n))
    ref = None  # first trajectory; variances accumulate around it to avoid cancellation
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        while True:
            pending.clear()
            try:
                total_jumps += _run_one(unr, blocks0, times, rng, plan.jump_tol, record)
                break
            except FloatingPointError:
                log.warning("trajectory %d hit norm underflow; resampling", i)
                resampled += 1
        for sl, occ, sites, rho_batch in pending:
            occ_one[sl] = occ
            site_sum[sl] += sites
            if rho_batch is not None:
                rho_sum[sl] += rho_batch
        if ref is None:
            ref = occ_one.copy()
        dens_sum += occ_one
        dens_sq += (occ_one - ref) ** 2

    M = plan.num_trajectories
    mean = dens_sum / M
    var = np.maximum(dens_sq / M - (mean - ref) ** 2, 0.0)
    stderr = np.sqrt(var / max(M - 1, 1))
    rho = None
    if keep:
        rho = [DensityMatrix(keep, rho_sum[t] / M) for t in range(T)]
    return TrajectoryResult(times, mean, stderr, rho, keep, site_sum / M, total_jumps, resampled)

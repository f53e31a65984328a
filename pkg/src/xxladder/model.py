"""Lattice models: XX chain/ladder spin models and the truncated Bose-Hubbard model.

Inputs are ordinary frequencies in MHz (J/2pi, detunings/2pi); the stored
model parameters are angular frequencies in rad/ns, so ``H t`` with ``t`` in ns
is dimensionless.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from . import device
from .hilbert import MAX_SITES, BasisSector, FullSpace, MultiSector

MHZ_TO_RAD_PER_NS = 2 * math.pi * 1e-3
MAX_AMPLITUDES = 1 << 24


def mhz(value):
    """Convert MHz (ordinary frequency) to rad/ns."""
    if np.ndim(value) == 0:
        return float(value) * MHZ_TO_RAD_PER_NS
    return np.asarray(value, dtype=float) * MHZ_TO_RAD_PER_NS


@dataclass(frozen=True, eq=False)
class SpinModel:
    num_sites: int
    bonds: tuple[tuple[int, int, float], ...]
    detunings: np.ndarray = field(repr=False)
    topology: str = "custom"

    def __post_init__(self):
        det = np.zeros(self.num_sites) if self.detunings is None else np.asarray(self.detunings, dtype=float)
        if det.shape != (self.num_sites,):
            raise ValueError("detunings must have one entry per site")
        seen = set()
        for i, j, _ in self.bonds:
            if i == j:
                raise ValueError(f"self-bond on site {i}")
            if not (0 <= i < self.num_sites and 0 <= j < self.num_sites):
                raise ValueError(f"bond ({i}, {j}) references a missing site")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate bond {key}")
            seen.add(key)
        det.setflags(write=False)
        object.__setattr__(self, "detunings", det)
        object.__setattr__(self, "bonds", tuple((int(i), int(j), float(J)) for i, j, J in self.bonds))

    @property
    def mean_coupling(self) -> float:
        return float(np.mean([abs(J) for _, _, J in self.bonds]))

    def hopping_matrix(self) -> np.ndarray:
        """Single-particle hopping matrix including detunings on the diagonal."""
        h = np.diag(self.detunings.astype(float))
        for i, j, J in self.bonds:
            h[i, j] += J
            h[j, i] += J
        return h


@dataclass(frozen=True)
class CouplingTable:
    """J/2pi in MHz keyed by unordered qubit-name pairs."""

    values: Mapping[tuple[str, str], float]

    def __post_init__(self):
        norm = {}
        for (a, b), v in dict(self.values).items():
            if v <= 0:
                raise ValueError(f"coupling {a}-{b} must be positive, got {v}")
            norm[tuple(sorted((a, b)))] = float(v)
        object.__setattr__(self, "values", norm)

    def get(self, a: str, b: str) -> float:
        try:
            return self.values[tuple(sorted((a, b)))]
        except KeyError:
            raise KeyError(f"coupling table has no entry for {a}-{b}") from None

    @classmethod
    def device(cls) -> "CouplingTable":
        return cls(device.all_couplings_mhz())


Couplings = Union[CouplingTable, float, Sequence[float]]


def _coupling_values(couplings: Couplings, pairs: list[tuple[str, str]]) -> list[float]:
    if isinstance(couplings, CouplingTable):
        return [couplings.get(a, b) for a, b in pairs]
    if np.ndim(couplings) == 0:
        return [float(couplings)] * len(pairs)
    values = [float(v) for v in couplings]
    if len(values) != len(pairs):
        raise ValueError(f"expected {len(pairs)} coupling values, got {len(values)}")
    return values


def build_xx_chain(L: int, couplings: Couplings) -> SpinModel:
    """Open XX chain on sites ``0..L-1``; ``couplings`` is a table, a uniform J/2pi, or one value per bond."""
    if L < 2:
        raise ValueError("chain needs at least two sites")
    pairs = [(device.chain_qubit(n), device.chain_qubit(n + 1)) for n in range(L - 1)]
    values = _coupling_values(couplings, pairs)
    bonds = tuple((n, n + 1, mhz(v)) for n, v in enumerate(values))
    return SpinModel(L, bonds, np.zeros(L), topology="chain")


def build_xx_ladder(W: int, intrachain: Couplings, rung: Couplings) -> SpinModel:
    """Two-leg open ladder; site (leg m, rung n) sits at index ``m*W + n``.

    A sequence for ``intrachain`` lists leg 0 bonds then leg 1 bonds.
    """
    if W < 2:
        raise ValueError("ladder needs at least two rungs")
    name = lambda s: device.ladder_qubit(s, W)
    leg_pairs = [(m * W + n, m * W + n + 1) for m in (0, 1) for n in range(W - 1)]
    rung_pairs = [(n, W + n) for n in range(W)]
    leg_vals = _coupling_values(intrachain, [(name(i), name(j)) for i, j in leg_pairs])
    rung_vals = _coupling_values(rung, [(name(i), name(j)) for i, j in rung_pairs])
    bonds = tuple((i, j, mhz(v)) for (i, j), v in zip(leg_pairs + rung_pairs, leg_vals + rung_vals))
    return SpinModel(2 * W, bonds, np.zeros(2 * W), topology="ladder")


def calibration_ramp_mhz(num_sites: int, s: float, topology: str) -> np.ndarray:
    """Deliberate alignment offsets: ``(n+1)*s`` on a chain, ``s*(m+1+2n)`` on a ladder."""
    if topology == "chain":
        return s * np.arange(1, num_sites + 1, dtype=float)
    if topology == "ladder":
        W = num_sites // 2
        return np.array([s * (m + 1 + 2 * n) for m in (0, 1) for n in range(W)], dtype=float)
    raise ValueError(f"unknown topology {topology!r}")


def apply_calibration_detunings(model: SpinModel, s: float, delta_f, topology: Optional[str] = None) -> SpinModel:
    """Add the alignment ramp and drift vector (both MHz) to the site detunings.

    The identity part of ``(Delta/2)(1 - 2 sigma^- sigma^+) = Delta n - Delta/2``
    only shifts the global phase and is dropped.
    """
    topology = topology or model.topology
    delta_f = np.asarray(delta_f, dtype=float)
    if delta_f.shape != (model.num_sites,):
        raise ValueError(f"delta_f must have {model.num_sites} entries, got {delta_f.shape}")
    extra = calibration_ramp_mhz(model.num_sites, s, topology) + delta_f
    return replace(model, detunings=model.detunings + mhz(extra))


def default_initial_bits(topology: str, num_sites: int) -> int:
    """Chain: 1010...; ladder: checkerboard with rung partners anti-aligned (site 0 excited)."""
    if topology == "chain":
        return sum(1 << i for i in range(0, num_sites, 2))
    if topology == "ladder":
        W = num_sites // 2
        return sum(1 << (m * W + n) for m in (0, 1) for n in range(W) if (m + n) % 2 == 0)
    raise ValueError(f"unknown topology {topology!r}")


def _check_dim(dim: int) -> None:
    if dim > MAX_AMPLITUDES:
        raise MemoryError(f"basis dimension {dim} exceeds the {MAX_AMPLITUDES} amplitude guard")


def _spin_hamiltonian(model: SpinModel, states: np.ndarray) -> sp.csr_matrix:
    dim = len(states)
    rows, cols, vals = [], [], []
    diag = np.zeros(dim)
    for site, d in enumerate(model.detunings):
        if d != 0.0:
            diag += d * ((states >> site) & 1)
    for i, j, J in model.bonds:
        flip = (1 << i) | (1 << j)
        mask = ((states >> i) & 1) != ((states >> j) & 1)
        src = np.nonzero(mask)[0]
        dst = np.searchsorted(states, states[src] ^ flip)
        rows.append(dst)
        cols.append(src)
        vals.append(np.full(len(src), J))
    rows.append(np.arange(dim))
    cols.append(np.arange(dim))
    vals.append(diag)
    H = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    ).tocsr()
    H.eliminate_zeros()
    return H


# --- truncated Bose-Hubbard -------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoseModel:
    num_sites: int
    bonds: tuple[tuple[int, int, float], ...]
    U: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    d: int = 3

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("local truncation d must be at least 2")
        object.__setattr__(self, "U", np.broadcast_to(np.asarray(self.U, dtype=float), (self.num_sites,)).copy())
        object.__setattr__(self, "mu", np.broadcast_to(np.asarray(self.mu, dtype=float), (self.num_sites,)).copy())

    @property
    def interaction_ratio(self) -> float:
        """|mean U| / mean |J|."""
        return abs(float(np.mean(self.U))) / float(np.mean([abs(J) for _, _, J in self.bonds]))


@dataclass(frozen=True, eq=False)
class BosonSector:
    """Occupation configurations with fixed total particle number and max ``d-1`` per site."""

    num_sites: int
    d: int
    num_particles: int
    occupations: np.ndarray = field(repr=False)  # shape (dim, num_sites)

    @property
    def dim(self) -> int:
        return len(self.occupations)

    @property
    def codes(self) -> np.ndarray:
        return self.occupations @ (self.d ** np.arange(self.num_sites))


def enumerate_boson_sector(num_sites: int, d: int, num_particles: int) -> BosonSector:
    if num_sites > MAX_SITES:
        raise ValueError("too many sites")
    configs = [c for c in itertools.product(range(d), repeat=num_sites) if sum(c) == num_particles]
    occ = np.array(configs, dtype=np.int64).reshape(-1, num_sites)
    sector = BosonSector(num_sites, d, num_particles, occ)
    order = np.argsort(sector.codes)
    return BosonSector(num_sites, d, num_particles, occ[order])


def build_bose_hubbard(topology: SpinModel, U_mhz, d: int, mu_mhz=None) -> BoseModel:
    """Bose-Hubbard model on the bonds of ``topology`` (its detunings become chemical potentials)."""
    mu = topology.detunings if mu_mhz is None else mhz(np.broadcast_to(mu_mhz, (topology.num_sites,)))
    return BoseModel(topology.num_sites, topology.bonds, mhz(np.broadcast_to(U_mhz, (topology.num_sites,))), mu, d)


def _bose_hamiltonian(model: BoseModel, sector: BosonSector) -> sp.csr_matrix:
    occ = sector.occupations
    codes = sector.codes
    dim = sector.dim
    _check_dim(dim)
    diag = occ @ model.mu + 0.5 * (occ * (occ - 1)) @ model.U
    rows, cols, vals = [np.arange(dim)], [np.arange(dim)], [diag.astype(float)]
    powers = model.d ** np.arange(model.num_sites)
    for i, j, J in model.bonds:
        for a, b in ((i, j), (j, i)):
            # a^dagger_a a_b
            ok = (occ[:, b] > 0) & (occ[:, a] < model.d - 1)
            src = np.nonzero(ok)[0]
            amp = J * np.sqrt((occ[src, a] + 1) * occ[src, b])
            target = codes[src] + powers[a] - powers[b]
            dst = np.searchsorted(codes, target)
            rows.append(dst)
            cols.append(src)
            vals.append(amp)
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    ).tocsr()


def hamiltonian_matrix(model, sector=None) -> sp.csr_matrix:
    """Sparse Hamiltonian of ``model`` restricted to ``sector`` (full space when ``None``)."""
    if isinstance(model, BoseModel):
        if not isinstance(sector, BosonSector):
            raise TypeError("Bose-Hubbard Hamiltonians need a BosonSector")
        if sector.num_sites != model.num_sites or sector.d != model.d:
            raise ValueError("sector incompatible with model")
        return _bose_hamiltonian(model, sector)
    if sector is None or sector == "full":
        sector = FullSpace(model.num_sites)
    if isinstance(sector, MultiSector):
        raise TypeError("build one Hamiltonian block per sector; MultiSector is a direct sum")
    if sector.num_sites != model.num_sites:
        raise ValueError(f"sector has {sector.num_sites} sites, model has {model.num_sites}")
    _check_dim(sector.dim)
    return _spin_hamiltonian(model, sector.states)

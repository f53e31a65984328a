"""Computational-basis bookkeeping: sectors, states, density matrices, partial traces.

Bit ``i`` of a basis-state integer is the occupation of site ``i`` (site 0 is the
least significant bit). Density matrices over a site subset use the same rule
locally: bit ``j`` of a row index is the occupation of ``sites[j]``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

MAX_SITES = 24


def popcount(masks: np.ndarray) -> np.ndarray:
    """Vectorised Hamming weight of non-negative integers below 2**32."""
    x = np.asarray(masks, dtype=np.int64)
    x = x - ((x >> 1) & 0x55555555)
    x = (x & 0x33333333) + ((x >> 2) & 0x33333333)
    x = (x + (x >> 4)) & 0x0F0F0F0F
    return ((x * 0x01010101) & 0xFFFFFFFF) >> 24


def _check_sites(num_sites: int) -> None:
    if not 1 <= num_sites <= MAX_SITES:
        raise ValueError(f"num_sites must lie in [1, {MAX_SITES}], got {num_sites}")


@dataclass(frozen=True, eq=False)
class BasisSector:
    """All basis states with a fixed number of excitations, sorted by integer value."""

    num_sites: int
    num_excitations: int
    states: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def index_of(self) -> dict[int, int]:
        return {int(s): i for i, s in enumerate(self.states)}

    def indices(self, masks) -> np.ndarray:
        """Ordinals of ``masks`` inside the sector; raises if any mask is absent."""
        masks = np.asarray(masks, dtype=np.int64)
        idx = np.searchsorted(self.states, masks)
        idx_clipped = np.minimum(idx, self.dim - 1)
        if np.any(self.states[idx_clipped] != masks):
            raise KeyError("bitmask not in sector")
        return idx_clipped


@dataclass(frozen=True, eq=False)
class FullSpace:
    """The whole 2**N computational basis in natural order."""

    num_sites: int

    @property
    def dim(self) -> int:
        return 1 << self.num_sites

    @property
    def states(self) -> np.ndarray:
        return np.arange(self.dim, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class MultiSector:
    """Direct sum of several sectors, amplitudes stored block after block."""

    num_sites: int
    sectors: tuple[BasisSector, ...]

    @property
    def dim(self) -> int:
        return sum(s.dim for s in self.sectors)

    @property
    def states(self) -> np.ndarray:
        return np.concatenate([s.states for s in self.sectors])


Basis = Union[FullSpace, BasisSector, MultiSector]


_SECTOR_CACHE: dict[tuple[int, int], BasisSector] = {}


def enumerate_sector(num_sites: int, num_excitations: int) -> BasisSector:
    """Enumerate the fixed-excitation sector ``(num_sites, num_excitations)``.

    >>> enumerate_sector(2, 1).states.tolist()
    [1, 2]
    """
    if not isinstance(num_sites, (int, np.integer)) or not isinstance(num_excitations, (int, np.integer)):
        raise TypeError("sector arguments must be integers")
    if not 0 <= num_excitations <= num_sites <= MAX_SITES:
        raise ValueError(
            f"need 0 <= num_excitations <= num_sites <= {MAX_SITES}, "
            f"got ({num_sites}, {num_excitations})"
        )
    key = (int(num_sites), int(num_excitations))
    cached = _SECTOR_CACHE.get(key)
    if cached is not None:
        return cached
    count = math.comb(num_sites, num_excitations)
    masks = np.fromiter(
        (sum(1 << i for i in combo) for combo in itertools.combinations(range(num_sites), num_excitations)),
        dtype=np.int64,
        count=count,
    )
    masks.sort()
    masks.setflags(write=False)
    sector = BasisSector(key[0], key[1], masks)
    _SECTOR_CACHE[key] = sector
    return sector


@dataclass(frozen=True, eq=False)
class PureState:
    basis: Basis
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.basis.dim,):
            raise ValueError(f"amplitude length {amps.shape} does not match basis dim {self.basis.dim}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def num_sites(self) -> int:
        return self.basis.num_sites

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_full(self) -> np.ndarray:
        if isinstance(self.basis, FullSpace):
            return self.amplitudes.copy()
        out = np.zeros(1 << self.num_sites, dtype=complex)
        out[self.basis.states] = self.amplitudes
        return out

    def occupations(self) -> np.ndarray:
        """Per-site <n_i> without leaving the stored basis."""
        probs = np.abs(self.amplitudes) ** 2
        states = self.basis.states
        return np.array([probs[(states >> i) & 1 == 1].sum() for i in range(self.num_sites)])

    @classmethod
    def from_full(cls, vector) -> "PureState":
        vector = np.asarray(vector, dtype=complex)
        n = int(round(math.log2(len(vector))))
        if 1 << n != len(vector):
            raise ValueError("full-space vector length must be a power of two")
        return cls(FullSpace(n), vector)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    sites: tuple[int, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = 1 << len(self.sites)
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match {len(self.sites)} sites")
        if len(set(self.sites)) != len(self.sites):
            raise ValueError("duplicate site labels")
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def validate(self, herm_tol: float = 1e-10, trace_tol: float = 1e-10, eig_tol: float = 1e-8) -> None:
        m = self.matrix
        if np.max(np.abs(m - m.conj().T), initial=0.0) > herm_tol:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > trace_tol:
            raise ValueError(f"density matrix trace {np.trace(m)} != 1")
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -eig_tol:
            raise ValueError("density matrix has negative eigenvalues")

    @classmethod
    def from_pure(cls, state: PureState) -> "DensityMatrix":
        v = state.to_full()
        return cls(tuple(range(state.num_sites)), np.outer(v, v.conj()))


def product_state(bits: int, num_sites: int) -> PureState:
    _check_sites(num_sites)
    if bits < 0 or bits >> num_sites:
        raise ValueError(f"bitmask {bits:#b} does not fit in {num_sites} sites")
    sector = enumerate_sector(num_sites, bin(bits).count("1"))
    amps = np.zeros(sector.dim, dtype=complex)
    amps[sector.indices([bits])[0]] = 1.0
    return PureState(sector, amps)


def bits_from_string(pattern: str) -> int:
    """``"1010"`` -> bitmask with site 0 taken from the leftmost character."""
    pattern = pattern.strip()
    if not pattern or set(pattern) - {"0", "1"}:
        raise ValueError(f"bit pattern must be a non-empty 0/1 string, got {pattern!r}")
    return sum(1 << i for i, c in enumerate(pattern) if c == "1")


def epr_seeded_state(pair: tuple[int, int], rest_bits: int, num_sites: int) -> PureState:
    """(|00> + |11>)/sqrt(2) on ``pair`` times the product state ``rest_bits``."""
    _check_sites(num_sites)
    a, b = (int(p) for p in pair)
    if a == b or not (0 <= a < num_sites and 0 <= b < num_sites):
        raise ValueError(f"invalid EPR pair {pair}")
    pair_mask = (1 << a) | (1 << b)
    if rest_bits & pair_mask:
        raise ValueError("EPR pair overlaps the product-state support")
    if rest_bits < 0 or rest_bits >> num_sites:
        raise ValueError("rest_bits does not fit in num_sites")
    k = bin(rest_bits).count("1")
    low, high = enumerate_sector(num_sites, k), enumerate_sector(num_sites, k + 2)
    basis = MultiSector(num_sites, (low, high))
    amps = np.zeros(basis.dim, dtype=complex)
    amps[low.indices([rest_bits])[0]] = 1 / math.sqrt(2)
    amps[low.dim + high.indices([rest_bits | pair_mask])[0]] = 1 / math.sqrt(2)
    return PureState(basis, amps)


def sector_decompose(state: PureState) -> list[tuple[BasisSector, PureState, float]]:
    """Split a state by excitation number into normalised components and weights.

    Sectors with exactly zero weight are omitted.
    """
    n = state.num_sites
    states = state.basis.states
    amps = state.amplitudes
    counts = popcount(states)
    out = []
    for k in np.unique(counts):
        sector = enumerate_sector(n, int(k))
        sel = counts == k
        block = np.zeros(sector.dim, dtype=complex)
        block[sector.indices(states[sel])] = amps[sel]
        weight = float(np.vdot(block, block).real)
        if weight == 0.0:
            continue
        out.append((sector, PureState(sector, block / math.sqrt(weight)), weight))
    return out


def embed(components: Iterable[tuple[BasisSector, PureState, float]]) -> PureState:
    """Inverse of :func:`sector_decompose`."""
    components = sorted(components, key=lambda c: c[0].num_excitations)
    if not components:
        raise ValueError("nothing to embed")
    sectors = tuple(c[0] for c in components)
    amps = np.concatenate([math.sqrt(w) * comp.amplitudes for _, comp, w in components])
    return PureState(MultiSector(sectors[0].num_sites, sectors), amps)


def _ptrace_vector(vec: np.ndarray, num_sites: int, keep: Sequence[int]) -> np.ndarray:
    keep = list(keep)
    rest = [s for s in range(num_sites) if s not in keep]
    tensor = vec.reshape((2,) * num_sites)
    # reshape axis a holds site num_sites-1-a; most significant local bit first
    order = [num_sites - 1 - s for s in reversed(keep)] + [num_sites - 1 - s for s in reversed(rest)]
    m = tensor.transpose(order).reshape(1 << len(keep), -1)
    return m @ m.conj().T


def _trace_out_local(matrix: np.ndarray, n: int, j: int) -> np.ndarray:
    """Trace out local qubit ``j`` of an ``n``-qubit density matrix."""
    hi, lo = 1 << (n - 1 - j), 1 << j
    t = matrix.reshape(hi, 2, lo, hi, 2, lo)
    return np.einsum("aibcid->abcd", t).reshape(hi * lo, hi * lo)


def partial_trace(state_or_dm: Union[PureState, DensityMatrix], keep: Iterable[int]) -> DensityMatrix:
    """Reduced density matrix on ``keep`` (returned with sites sorted ascending)."""
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set must be non-empty")
    if isinstance(state_or_dm, PureState):
        n = state_or_dm.num_sites
        if keep[0] < 0 or keep[-1] >= n:
            raise ValueError(f"keep {keep} outside system of {n} sites")
        return DensityMatrix(tuple(keep), _ptrace_vector(state_or_dm.to_full(), n, keep))
    sites = list(state_or_dm.sites)
    missing = set(keep) - set(sites)
    if missing:
        raise ValueError(f"sites {sorted(missing)} not in density matrix")
    matrix = state_or_dm.matrix
    # trace out from the highest local index down so lower indices stay valid
    for j in sorted((sites.index(s) for s in sites if s not in keep), reverse=True):
        matrix = _trace_out_local(matrix, len(sites), j)
        sites.pop(j)
    if sites != keep:
        perm = [sites.index(s) for s in keep]
        matrix = permute_sites(matrix, perm)
    return DensityMatrix(tuple(keep), matrix)


def permute_sites(matrix: np.ndarray, perm: Sequence[int]) -> np.ndarray:
    """Reorder qubits: new local qubit ``j`` is old local qubit ``perm[j]``."""
    n = len(perm)
    t = matrix.reshape((2,) * (2 * n))
    axes_row = [n - 1 - perm[n - 1 - a] for a in range(n)]
    axes = axes_row + [a + n for a in axes_row]
    return t.transpose(axes).reshape(1 << n, 1 << n)

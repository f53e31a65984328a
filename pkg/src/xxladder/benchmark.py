"""Linear cross-entropy benchmarking (XEB) and speckle purity benchmarking (SPB)."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .hilbert import PureState
from .optimize import NelderMeadOptions, nelder_mead


@dataclass
class CircuitEnsembleRecord:
    """Ideal and measured bitstring probabilities for an ensemble at cycle count ``m``.

    ``p_s`` and ``p_m`` have shape (circuits, D).
    """

    m: int
    D: int
    p_s: np.ndarray
    p_m: np.ndarray

    def __post_init__(self):
        self.p_s = np.atleast_2d(np.asarray(self.p_s, dtype=float))
        self.p_m = np.atleast_2d(np.asarray(self.p_m, dtype=float))
        if self.p_s.shape != self.p_m.shape or self.p_s.shape[1] != self.D:
            raise ValueError(f"probability arrays must both have shape (circuits, {self.D})")
        if len(self.p_s) < 1:
            raise ValueError("ensemble needs at least one circuit")
        for name, p in (("p_s", self.p_s), ("p_m", self.p_m)):
            if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-9:
                raise ValueError(f"{name} rows must sum to 1")

    def to_dict(self) -> dict:
        return {"m": self.m, "D": self.D, "p_s": self.p_s.tolist(), "p_m": self.p_m.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CircuitEnsembleRecord":
        return cls(int(d["m"]), int(d["D"]), d["p_s"], d["p_m"])


def save_records(records: Sequence[CircuitEnsembleRecord], path) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in records], fh)


def load_records(path) -> list[CircuitEnsembleRecord]:
    with open(path) as fh:
        return [CircuitEnsembleRecord.from_dict(d) for d in json.load(fh)]


def xeb_alpha(record: CircuitEnsembleRecord, pairing: str = "circuit") -> float:
    """Sequence fidelity ``sum_q avg[p_m (D p_s - 1)] / (D sum_q avg[p_s^2] - 1)``.

    Averages run over circuits. With ``pairing="circuit"`` (default) measured
    and ideal probabilities are paired circuit by circuit. ``"ensemble"``
    multiplies the ensemble means instead, ``sum_q avg[p_m] avg[D p_s - 1]``;
    that variant is not unbiased for mixtures and is kept for comparison.
    """
    D = record.D
    if pairing == "circuit":
        num = np.mean(np.sum(record.p_m * (D * record.p_s - 1.0), axis=1))
    elif pairing == "ensemble":
        num = np.sum(record.p_m.mean(axis=0) * (D * record.p_s.mean(axis=0) - 1.0))
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    den = D * np.sum(np.mean(record.p_s**2, axis=0)) - 1.0
    if abs(den) < 1e-14:
        raise ZeroDivisionError("ideal distributions are uniform; XEB is undefined")
    return float(num / den)


@dataclass(frozen=True)
class DecayFit:
    A: float
    p: float
    B: float
    covariance: np.ndarray
    converged: bool = True

    def __call__(self, m):
        return self.A * self.p ** np.asarray(m, dtype=float) + self.B

    @property
    def unphysical(self) -> bool:
        return not 0.0 <= self.p <= 1.0


def _linear_ab(m: np.ndarray, y: np.ndarray, p: float):
    X = np.column_stack([p**m, np.ones_like(m)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef, float(np.sum((X @ coef - y) ** 2))


def fit_decay(points, options: NelderMeadOptions = NelderMeadOptions(max_iter=2000, xtol=1e-13, ftol=1e-20, initial_scale=0.01)) -> DecayFit:
    """Least-squares fit of ``A p^m + B``.

    ``A`` and ``B`` enter linearly and are eliminated, so the simplex search
    runs over ``p`` alone.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need at least three (m, alpha) points")
    m, y = pts[:, 0], pts[:, 1]

    def cost(x):
        return _linear_ab(m, y, float(x[0]))[1]

    # coarse scan for a starting point, then simplex refinement
    grid = np.linspace(0.5, 1.0, 501)
    p0 = grid[np.argmin([cost([g]) for g in grid])]
    res = nelder_mead(cost, [p0], options)
    p = float(res.x[0])
    (A, B), sse = _linear_ab(m, y, p)

    J = np.column_stack([p**m, A * m * p ** (m - 1), np.ones_like(m)])
    dof = max(len(m) - 3, 1)
    try:
        cov = np.linalg.inv(J.T @ J) * sse / dof
    except np.linalg.LinAlgError:
        cov = np.full((3, 3), np.nan)
    return DecayFit(float(A), p, float(B), cov, res.converged)


def error_rate(fit, D: int) -> float:
    """Average gate error ``(1 - p)(D - 1)/D``; ``fit`` may be a DecayFit or ``p`` itself."""
    p = fit.p if isinstance(fit, DecayFit) else float(fit)
    return (1.0 - p) * (D - 1) / D


def probability_variance(record: CircuitEnsembleRecord, axis: str = "circuits") -> float:
    """Variance of measured probabilities.

    ``circuits`` (default): variance over circuits for each bitstring, pooled
    (averaged) over bitstrings. ``pooled``: one variance over every
    (circuit, bitstring) entry. ``bitstrings``: variance over bitstrings within
    each circuit, averaged over circuits.
    """
    p = record.p_m
    if axis == "pooled":
        return float(np.var(p))
    if axis == "circuits":
        return float(np.mean(np.var(p, axis=0)))
    if axis == "bitstrings":
        return float(np.mean(np.var(p, axis=1)))
    raise ValueError(f"unknown variance axis {axis!r}")


def spb_purity(variances, D: int) -> np.ndarray:
    """``Var(P_m) D^2 (D+1)/(D-1)`` elementwise."""
    v = np.asarray(variances, dtype=float)
    if D < 2:
        raise ValueError("D must be at least 2")
    if np.any(v < 0):
        raise ValueError("variances must be non-negative")
    return v * D**2 * (D + 1) / (D - 1)


def sample_bitstrings(state: PureState, shots: int, seed: Optional[int] = None) -> np.ndarray:
    """Empirical probabilities over the full 2**N basis from ``shots`` measurements."""
    if shots < 1:
        raise ValueError("shots must be positive")
    probs = np.abs(state.to_full()) ** 2
    probs /= probs.sum()
    counts = np.random.default_rng(seed).multinomial(shots, probs)
    return counts / shots


# --- synthetic single-qubit XEB ------------------------------------------------

_PAULI = (np.array([[0, 1], [1, 0]], complex), np.array([[0, -1j], [1j, 0]], complex))
GATE_AXES = tuple(
    np.array(a, dtype=float) / np.linalg.norm(a)
    for a in ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1))
)


def half_pi_rotation(axis) -> np.ndarray:
    """pi/2 rotation about an axis in the Bloch equator."""
    n_sigma = axis[0] * _PAULI[0] + axis[1] * _PAULI[1]
    return np.cos(np.pi / 4) * np.eye(2) - 1j * np.sin(np.pi / 4) * n_sigma


GATES = tuple(half_pi_rotation(a) for a in GATE_AXES)


def simulate_xeb(
    cycles: Sequence[int],
    num_circuits: int = 80,
    depolarization: float = 0.0,
    shots: Optional[int] = None,
    seed: int = 0,
) -> list[CircuitEnsembleRecord]:
    """Random single-qubit circuits: ``m`` random gates plus a final random gate.

    Each gate is followed by a depolarising channel of strength
    ``depolarization``. ``p_m`` is exact unless ``shots`` is given.
    """
    rng = np.random.default_rng(seed)
    records = []
    for m in cycles:
        p_s = np.empty((num_circuits, 2))
        p_m = np.empty((num_circuits, 2))
        for c in range(num_circuits):
            psi = np.array([1, 0], complex)
            rho = np.outer(psi, psi.conj())
            for g in rng.integers(0, len(GATES), size=m + 1):
                U = GATES[g]
                psi = U @ psi
                rho = (1 - depolarization) * (U @ rho @ U.conj().T) + depolarization * np.eye(2) / 2
            p_s[c] = np.abs(psi) ** 2
            probs = np.clip(np.real(np.diag(rho)), 0, None)
            probs /= probs.sum()
            p_m[c] = probs if shots is None else rng.multinomial(shots, probs) / shots
        records.append(CircuitEnsembleRecord(int(m), 2, p_s, p_m))
    return records

"""Frequency-drift calibration from single-excitation propagation patterns.

One qubit is excited, every qubit is detuned by a deliberate ramp ``s`` plus
its unknown drift, and the population pattern is compared with simulation.
The drift vector minimising the summed squared mismatch over all
(excited site, ramp) runs is found with Nelder-Mead.

A uniform drift on every site only adds ``c * N_total``, a constant in the
single-excitation sector, so the objective is flat along the all-ones
direction. :func:`calibration_round` checks this numerically and, if so, pins
the drift of site 0 to zero; drifts are then recovered relative to site 0.
"""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as la

from .model import CouplingTable, SpinModel, build_xx_chain, build_xx_ladder, calibration_ramp_mhz, mhz
from .optimize import NelderMeadOptions, nelder_mead


@dataclass(frozen=True, eq=False)
class CalibrationPlan:
    model: SpinModel  # bare couplings, zero detunings
    s_values: tuple[float, ...] = (3.0, -3.0)  # MHz
    times: np.ndarray = field(default_factory=lambda: np.arange(0.0, 100.0 + 1e-9, 2.0))
    excited_sites: Optional[tuple[int, ...]] = None
    working_frequency_mhz: float = 4863.0

    def __post_init__(self):
        if any(s == 0 for s in self.s_values):
            raise ValueError("ramp values s must be non-zero")
        sites = tuple(range(self.model.num_sites)) if self.excited_sites is None else tuple(self.excited_sites)
        if sorted(sites) != list(range(self.model.num_sites)):
            raise ValueError("excited-site schedule must cover every site exactly once")
        object.__setattr__(self, "excited_sites", sites)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))

    @property
    def topology(self) -> str:
        return self.model.topology

    @property
    def num_sites(self) -> int:
        return self.model.num_sites

    @property
    def runs(self) -> list[tuple[int, float]]:
        return [(m, s) for s in self.s_values for m in self.excited_sites]

    def target_frequencies_mhz(self, s: float) -> np.ndarray:
        """Chain alignment targets ``f_c + s (m - (N-1)/2)``; ladder uses the zig-zag ramp."""
        N = self.num_sites
        if self.topology == "chain":
            return self.working_frequency_mhz + s * (np.arange(N) - (N - 1) / 2)
        ramp = calibration_ramp_mhz(N, s, "ladder")
        return self.working_frequency_mhz + ramp - ramp.mean()

    @classmethod
    def device_default(cls, topology: str, **kw) -> "CalibrationPlan":
        table = CouplingTable.device()
        model = build_xx_chain(12, table) if topology == "chain" else build_xx_ladder(6, table, table)
        return cls(model, **kw)


@dataclass
class PropagationDataset:
    """Populations ``Z[run, time, site]`` for the plan's runs, in ``plan.runs`` order."""

    runs: list[tuple[int, float]]
    times: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        if self.Z.shape[:2] != (len(self.runs), len(self.times)):
            raise ValueError("population array does not match runs x times")

    def check(self, atol: float = 1e-10) -> None:
        if self.Z.min() < -atol or self.Z.max() > 1 + atol:
            raise ValueError("populations outside [0, 1]")
        if np.max(np.abs(self.Z.sum(axis=2) - 1.0)) > atol:
            raise ValueError("populations do not sum to one at every time")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(dataset_to_csv(self))

    @classmethod
    def from_csv(cls, path) -> "PropagationDataset":
        return dataset_from_csv(Path(path).read_text())


@dataclass
class DriftEstimate:
    delta_f: np.ndarray  # MHz
    objective: float
    iterations: int
    converged: bool
    pinned_site: Optional[int] = None
    history: list = field(default_factory=list)


def _run_id(site: int, s: float) -> str:
    return f"e{site}s{s:+g}"


_RUN_RE = re.compile(r"^e(\d+)s([+-][0-9.eE+-]+)$")


def dataset_to_csv(dataset: PropagationDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run_id", "t_ns", "site", "population"])
    for r, (m, s) in enumerate(dataset.runs):
        rid = _run_id(m, s)
        for k, t in enumerate(dataset.times):
            for i in range(dataset.Z.shape[2]):
                w.writerow([rid, f"{t:.6g}", i, f"{dataset.Z[r, k, i]:.15e}"])
    return buf.getvalue()


def dataset_from_csv(text: str) -> PropagationDataset:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or set(rows[0]) != {"run_id", "t_ns", "site", "population"}:
        raise ValueError("dataset CSV needs columns run_id,t_ns,site,population")
    runs, times, sites = [], [], set()
    for row in rows:
        match = _RUN_RE.match(row["run_id"])
        if not match:
            raise ValueError(f"malformed run_id {row['run_id']!r}")
        run = (int(match.group(1)), float(match.group(2)))
        if run not in runs:
            runs.append(run)
        t = float(row["t_ns"])
        if t not in times:
            times.append(t)
        sites.add(int(row["site"]))
    Z = np.full((len(runs), len(times), len(sites)), np.nan)
    r_index = {r: i for i, r in enumerate(runs)}
    t_index = {t: i for i, t in enumerate(times)}
    for row in rows:
        match = _RUN_RE.match(row["run_id"])
        run = (int(match.group(1)), float(match.group(2)))
        Z[r_index[run], t_index[float(row["t_ns"])], int(row["site"])] = float(row["population"])
    if np.isnan(Z).any():
        raise ValueError("dataset CSV is missing entries")
    return PropagationDataset(runs, np.array(times), Z)


class PropagationSimulator:
    """Single-excitation dynamics: the N x N hopping problem, one eigendecomposition per ramp."""

    def __init__(self, plan: CalibrationPlan):
        self.plan = plan
        self.h0 = plan.model.hopping_matrix()
        self.ramps = {s: mhz(calibration_ramp_mhz(plan.num_sites, s, plan.topology)) for s in plan.s_values}
        self.excited = np.array(plan.excited_sites)

    def populations(self, delta_f, s: float) -> np.ndarray:
        """``Z[excited, time, site]`` for every excited site at ramp ``s``."""
        h = self.h0 + np.diag(self.ramps[s] + mhz(np.asarray(delta_f, dtype=float)))
        evals, V = la.eigh(h)
        phases = np.exp(-1j * np.outer(self.plan.times, evals))  # (T, k)
        # U(t)[i, m] = sum_k V[i,k] e^{-i l_k t} V[m,k]
        amp = np.einsum("ik,tk,mk->mti", V, phases, V[self.excited])
        return np.abs(amp) ** 2

    def all_runs(self, delta_f) -> np.ndarray:
        return np.concatenate([self.populations(delta_f, s) for s in self.plan.s_values], axis=0)


def simulate_propagation(plan: CalibrationPlan, delta_f, excited_site: int, s: float) -> np.ndarray:
    """Populations ``Z[time, site]`` after exciting ``excited_site`` under ramp ``s`` and drifts ``delta_f``."""
    if not 0 <= excited_site < plan.num_sites:
        raise ValueError("excited site out of range")
    sim = PropagationSimulator(replace(plan, s_values=(s,)))
    return sim.populations(delta_f, s)[plan.excited_sites.index(excited_site)]


def synthetic_dataset(plan: CalibrationPlan, delta_f, noise_sigma: float = 0.0, seed: int = 0) -> PropagationDataset:
    Z = PropagationSimulator(plan).all_runs(delta_f)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        Z = np.clip(Z + rng.normal(0.0, noise_sigma, Z.shape), 0.0, 1.0)
        Z /= Z.sum(axis=2, keepdims=True)
    return PropagationDataset(plan.runs, plan.times, Z)


def _aligned(plan: CalibrationPlan, dataset: PropagationDataset) -> np.ndarray:
    if not np.allclose(dataset.times, plan.times):
        raise ValueError("dataset time grid differs from the plan")
    if dataset.Z.shape[2] != plan.num_sites:
        raise ValueError("dataset site count differs from the plan")
    index = {run: i for i, run in enumerate(dataset.runs)}
    try:
        return dataset.Z[[index[run] for run in plan.runs]]
    except KeyError as exc:
        raise ValueError(f"dataset lacks run {exc.args[0]}") from None


def objective(delta_f, dataset: PropagationDataset, plan: CalibrationPlan, simulator: PropagationSimulator = None) -> float:
    """Summed squared population mismatch across all runs, times and sites."""
    simulator = simulator or PropagationSimulator(plan)
    target = _aligned(plan, dataset)
    return float(np.sum((simulator.all_runs(delta_f) - target) ** 2))


def is_gauge_flat(plan: CalibrationPlan, dataset: PropagationDataset, x, shift: float = 1.0, rtol: float = 1e-9) -> bool:
    """Whether a uniform drift shift leaves the objective unchanged at ``x``."""
    sim = PropagationSimulator(plan)
    x = np.asarray(x, dtype=float)
    f0 = objective(x, dataset, plan, sim)
    f1 = objective(x + shift, dataset, plan, sim)
    return abs(f1 - f0) <= rtol * max(f0, 1e-12) + 1e-20


def calibration_round(
    plan: CalibrationPlan,
    dataset: PropagationDataset,
    x0=None,
    options: NelderMeadOptions = NelderMeadOptions(max_iter=40000, xtol=1e-5, ftol=1e-16),
) -> DriftEstimate:
    """One Nelder-Mead fit of the drift vector (MHz) to ``dataset``."""
    N = plan.num_sites
    sim = PropagationSimulator(plan)
    target = _aligned(plan, dataset)
    x0 = np.zeros(N) if x0 is None else np.asarray(x0, dtype=float)
    pinned = 0 if is_gauge_flat(plan, dataset, x0) else None

    def full(y):
        if pinned is None:
            return y
        return np.insert(y, pinned, 0.0)

    def f(y):
        return float(np.sum((sim.all_runs(full(y)) - target) ** 2))

    if pinned is None:
        start = x0
    else:
        start = np.delete(x0 - x0[pinned], pinned)
    res = nelder_mead(f, start, options)
    return DriftEstimate(full(res.x), res.fun, res.iterations, res.converged, pinned)


def gauge_fix(delta_f, site: int = 0) -> np.ndarray:
    delta_f = np.asarray(delta_f, dtype=float)
    return delta_f - delta_f[site]


def iterated_calibration(
    plan: CalibrationPlan,
    planted_drift,
    max_rounds: int = 2,
    stop_below: float = 0.01,
    noise_sigma: float = 0.0,
    seed: int = 0,
    options: NelderMeadOptions = NelderMeadOptions(max_iter=40000, xtol=1e-5, ftol=1e-16),
) -> DriftEstimate:
    """Synthetic closed loop: measure, fit, correct the targets, repeat.

    Each round regenerates data with the residual drift ``planted - correction``
    and fits it from zero. Stops when every fitted residual is below
    ``stop_below`` MHz or after ``max_rounds``. The returned ``delta_f`` is the
    accumulated correction.
    """
    planted = np.asarray(planted_drift, dtype=float)
    correction = np.zeros_like(planted)
    history = []
    est = None
    for r in range(max_rounds):
        data = synthetic_dataset(plan, planted - correction, noise_sigma, seed + r)
        est = calibration_round(plan, data, options=options)
        correction = correction + est.delta_f
        history.append({"round": r + 1, "objective": est.objective, "iterations": est.iterations,
                        "max_abs_residual_fit": float(np.max(np.abs(est.delta_f)))})
        if np.max(np.abs(est.delta_f)) < stop_below:
            break
    return DriftEstimate(correction, est.objective, sum(h["iterations"] for h in history),
                         est.converged, est.pinned_site, history)

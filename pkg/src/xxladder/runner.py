"""Experiment pipelines behind the CLI subcommands.

Each ``run_*`` function takes a validated :class:`ExperimentSpec` and returns a
:class:`RunOutput`: named CSV tables plus a JSON-ready summary. Nothing here
touches the filesystem except reading input datasets named in the spec.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import device
from .benchmark import (
    error_rate,
    fit_decay,
    load_records,
    probability_variance,
    simulate_xeb,
    spb_purity,
    xeb_alpha,
)
from .calibrate import CalibrationPlan, PropagationDataset, calibration_round, gauge_fix, iterated_calibration, objective, synthetic_dataset
from .config import ConfigError, ExperimentSpec
from .evolve import NoiseModel, Propagator, TrajectoryPlan, evolve_lindblad_dense, evolve_trajectories, evolve_unitary
from .evolve.lindblad import MAX_DENSE_SITES
from .freefermion import SingleParticleModel, densities_propagator
from .hilbert import DensityMatrix, PureState, bits_from_string, epr_seeded_state, partial_trace, product_state
from .model import CouplingTable, SpinModel, build_xx_chain, build_xx_ladder, default_initial_bits
from .observables import (
    TimeSeries,
    operator_distance,
    page_value,
    thermal_reference,
    time_average,
    volume_law_fit,
    von_neumann_entropy,
)

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """A run finished its numerics but a correctness check failed."""

    def __init__(self, message: str, details: Optional[dict] = None):
        super().__init__(message)
        self.details = details or {}


@dataclass
class Table:
    header: tuple[str, ...]
    rows: list[tuple]


@dataclass
class RunOutput:
    tables: dict[str, Table] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    extra_files: dict[str, str] = field(default_factory=dict)
    failure: Optional[NumericalError] = None


# --- building blocks -------------------------------------------------------------


def build_model(spec: ExperimentSpec) -> SpinModel:
    c = spec.couplings
    if c.source == "table":
        table = CouplingTable.device()
        intra, rung = table, table
    else:
        intra, rung = c.intrachain_mhz, c.rung_mhz
    if spec.topology == "chain":
        return build_xx_chain(spec.size, intra)
    return build_xx_ladder(spec.size // 2, intra, rung)


def initial_state(spec: ExperimentSpec, prefer_epr: bool = False) -> PureState:
    init = spec.initial_state
    kind = init.kind
    if kind == "auto":
        kind = "epr" if prefer_epr else "bits"
    N = spec.size
    if kind == "bits":
        bits = bits_from_string(init.bits) if init.bits else default_initial_bits(spec.topology, N)
        return product_state(bits, N)
    rest = bits_from_string(init.rest) if init.rest else 0
    return epr_seeded_state(tuple(init.pair), rest, N)


def propagator_settings(spec: ExperimentSpec) -> Propagator:
    s = spec.solver
    return Propagator(method=s.method, dense_threshold=s.dense_threshold, krylov_dim=s.krylov_dim, krylov_tol=s.krylov_tol)


def noise_model(spec: ExperimentSpec) -> NoiseModel:
    nz = spec.noise
    if nz.mode == "off":
        return NoiseModel.off()
    qubits = device.site_qubits(spec.topology, spec.size)
    t2 = nz.t2star_us or [device.T2STAR_US[q] for q in qubits]
    t1 = nz.t1_us or [device.T1_US[q] for q in qubits]
    channels = ("dephasing",) if nz.mode == "dephasing" else ("dephasing", "relaxation")
    return NoiseModel(t1=np.asarray(t1) * 1e3, t2star=np.asarray(t2) * 1e3, channels=channels)


class _Snapshots:
    """Reduced states per grid time, from whichever solver produced the run."""

    def __init__(self, times, site_rho: Callable[[int, int], np.ndarray], reduced: Callable[[int, Sequence[int]], DensityMatrix], occupations: np.ndarray):
        self.times = times
        self.site_rho = site_rho
        self.reduced = reduced
        self.occupations = occupations  # (T, N)


def _pure_snapshots(times, states: list[PureState]) -> _Snapshots:
    occ = np.array([s.occupations() for s in states])
    return _Snapshots(times, lambda k, i: partial_trace(states[k], [i]).matrix, lambda k, sites: partial_trace(states[k], sites), occ)


def _dense_snapshots(times, rhos: list[DensityMatrix]) -> _Snapshots:
    occ = np.array([[partial_trace(r, [i]).matrix[1, 1].real for i in range(len(r.sites))] for r in rhos])
    return _Snapshots(times, lambda k, i: partial_trace(rhos[k], [i]).matrix, lambda k, sites: partial_trace(rhos[k], sites), occ)


def _trajectory_snapshots(result) -> _Snapshots:
    def reduced(k, sites):
        missing = set(sites) - set(result.keep or ())
        if missing:
            raise ValueError(f"sites {sorted(missing)} were not tracked by the trajectory run")
        return partial_trace(result.rho[k], sites)

    return _Snapshots(result.times, lambda k, i: result.site_rho[k, i], reduced, result.densities)


def evolve_spec(spec: ExperimentSpec, psi0: PureState, times: np.ndarray, keep: Sequence[int]) -> tuple[_Snapshots, dict]:
    """Run the requested solver; ``keep`` lists sites whose joint reduced state is needed."""
    model = build_model(spec)
    noise = noise_model(spec)
    info: dict = {"noise": spec.noise.mode}
    if not noise.channels:
        states = evolve_unitary(model, psi0, times, propagator_settings(spec))
        info["solver"] = "unitary"
        return _pure_snapshots(times, states), info
    method = spec.noise.method
    if method == "auto":
        method = "dense" if spec.size <= MAX_DENSE_SITES else "trajectories"
    if method == "dense":
        if spec.size > MAX_DENSE_SITES:
            raise ConfigError(f"dense Lindblad integration supports at most {MAX_DENSE_SITES} sites")
        rhos = evolve_lindblad_dense(model, noise, DensityMatrix.from_pure(psi0), times)
        info["solver"] = "lindblad-dense"
        info["max_trace_error"] = float(max(abs(np.trace(r.matrix) - 1) for r in rhos))
        return _dense_snapshots(times, rhos), info
    plan = TrajectoryPlan(num_trajectories=spec.noise.trajectories, seed=spec.seed)
    result = evolve_trajectories(model, noise, psi0, times, plan, keep=sorted(set(keep)) or None)
    info.update(solver="trajectories", trajectories=plan.num_trajectories, jumps=int(result.num_jumps), resampled=int(result.resampled))
    return _trajectory_snapshots(result), info


def _pmap(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _groups(psi0: PureState) -> tuple[list[int], list[int]]:
    occ0 = psi0.occupations()
    up = [i for i, n in enumerate(occ0) if n > 0.5 + 1e-12]
    down = [i for i, n in enumerate(occ0) if n < 0.5 - 1e-12]
    return up, down


def _group_mean(occ: np.ndarray, group: list[int]) -> np.ndarray:
    if not group:
        return np.full(len(occ), np.nan)
    return occ[:, group].mean(axis=1)


def _avg(times, values, t_min: float) -> float:
    return time_average(TimeSeries(times, {"v": values}), t_min)["v"]


# --- subcommands -------------------------------------------------------------------


def run_quench(spec: ExperimentSpec, threads: int = 1) -> RunOutput:
    times = spec.time_grid()
    psi0 = initial_state(spec)
    obs = spec.observables
    sizes = spec.entropy_sizes()
    keep = range(max(sizes)) if sizes else ()
    snaps, info = evolve_spec(spec, psi0, times, keep)
    out = RunOutput()
    N = spec.size
    T = len(times)
    summary = {"command": "quench", "topology": spec.topology, "num_sites": N, "num_times": T, **info}

    occ = snaps.occupations
    up, down = _groups(psi0)
    n_up, n_down = _group_mean(occ, up), _group_mean(occ, down)
    if obs.densities:
        out.tables["densities.csv"] = Table(("t_ns", "n_up", "n_down"), list(zip(times, n_up, n_down)))
        out.tables["site_densities.csv"] = Table(("t_ns",) + tuple(f"n_{i}" for i in range(N)), [(t, *row) for t, row in zip(times, occ)])
        w = obs.density_window_ns
        summary["density_avg_after_ns"] = w
        summary["n_up_avg"] = _avg(times, n_up, w) if up else None
        summary["n_down_avg"] = _avg(times, n_down, w) if down else None
        summary["density_deviation_avg"] = _avg(times, np.abs(n_up - 0.5), w) if up else None

    if obs.distance:
        ref = thermal_reference(build_model(spec), psi0)
        eq = ref.site_states()
        summary["beta"] = ref.beta
        summary["initial_energy_rad_per_ns"] = ref.energy

        def dist(k):
            return float(np.mean([operator_distance(snaps.site_rho(k, i), eq[i]) for i in range(N)]))

        d = np.array(_pmap(dist, range(T), threads))
        out.tables["distance.csv"] = Table(("t_ns", "distance"), list(zip(times, d)))
        summary["distance_avg_after_ns"] = obs.density_window_ns
        summary["distance_avg"] = _avg(times, d, obs.density_window_ns)

    if sizes:
        def entropies(k):
            return [von_neumann_entropy(snaps.reduced(k, range(l))) for l in sizes]

        S = np.array(_pmap(entropies, range(T), threads)).reshape(T, len(sizes))
        w = obs.entropy_window_ns
        averages = {}
        for j, l in enumerate(sizes):
            out.tables[f"entropy_l{l}.csv"] = Table(("t_ns", "entropy"), list(zip(times, S[:, j])))
            averages[l] = _avg(times, S[:, j], w)
        pages = {l: page_value(l, N) for l in sizes}
        out.tables["entropy_profile.csv"] = Table(("l", "entropy_avg", "page_value"), [(l, averages[l], pages[l]) for l in sizes])
        summary["entropy_avg_after_ns"] = w
        summary["entropy_avg"] = {str(l): v for l, v in averages.items()}
        summary["page_value"] = {str(l): v for l, v in pages.items()}
        if obs.volume_law and len(sizes) >= 2:
            fit = volume_law_fit(sizes, [averages[l] for l in sizes])
            summary["volume_law"] = {"slope": fit.slope, "intercept": fit.intercept, "residual_norm": fit.residual_norm}
    out.summary = summary
    return out


TMI_COLUMNS = ("S_A", "S_B", "S_C", "S_AB", "S_AC", "S_BC", "S_ABC")


def run_tmi(spec: ExperimentSpec, threads: int = 1) -> RunOutput:
    times = spec.time_grid()
    try:
        spec.check_tmi_sites()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    psi0 = initial_state(spec, prefer_epr=True)
    part = spec.observables.tmi
    subset = sorted(part.subset)
    snaps, info = evolve_spec(spec, psi0, times, subset)
    A, B, C = set(part.A), set(part.B), set(part.C)
    groups = [A, B, C, A | B, A | C, B | C, A | B | C]

    def row(k):
        base = snaps.reduced(k, subset)
        S = [von_neumann_entropy(partial_trace(base, g)) for g in groups]
        tmi = S[0] + S[1] + S[2] + S[6] - S[3] - S[4] - S[5]
        return [tmi] + S

    rows = np.array(_pmap(row, range(len(times)), threads))
    out = RunOutput()
    out.tables["tmi.csv"] = Table(("t_ns", "tmi") + TMI_COLUMNS, [(t, *r) for t, r in zip(times, rows)])
    w = spec.observables.entropy_window_ns
    out.summary = {
        "command": "tmi",
        "topology": spec.topology,
        "num_sites": spec.size,
        "partition": {"A": sorted(A), "B": sorted(B), "C": sorted(C)},
        **info,
        "tmi_initial": float(rows[0, 0]),
        "tmi_avg_after_ns": float(w),
        "tmi_avg": _avg(times, rows[:, 0], w),
    }
    return out


def run_oracle_check(spec: ExperimentSpec, threads: int = 1) -> RunOutput:
    if spec.topology != "chain":
        raise ConfigError("oracle-check needs a chain: the ladder does not map to free fermions")
    if spec.initial_state.kind == "epr":
        raise ConfigError("oracle-check needs a computational-basis initial state")
    times = spec.time_grid()
    model = build_model(spec)
    psi0 = initial_state(spec)
    states = evolve_unitary(model, psi0, times, propagator_settings(spec))
    many_body = np.array([s.occupations() for s in states])
    occupied = [i for i, n in enumerate(psi0.occupations()) if n > 0.5]
    free = densities_propagator(SingleParticleModel.from_spin_model(model), occupied, times)
    dev = np.max(np.abs(many_body - free), axis=1)
    worst = float(dev.max())
    tol = spec.oracle.tolerance
    out = RunOutput()
    out.tables["oracle.csv"] = Table(("t_ns", "max_abs_deviation"), list(zip(times, dev)))
    out.summary = {
        "command": "oracle-check",
        "num_sites": spec.size,
        "max_density_deviation": worst,
        "tolerance": tol,
        "passed": worst <= tol,
    }
    if worst > tol:
        out.failure = NumericalError(f"many-body and free-fermion densities differ by {worst:.3e} > {tol:.1e}", {"max_density_deviation": worst})
    return out


def calibration_plan(spec: ExperimentSpec) -> CalibrationPlan:
    cal = spec.calibration
    return CalibrationPlan(build_model(spec), s_values=tuple(cal.s_values_mhz), times=cal.times.grid(100.0), working_frequency_mhz=cal.working_frequency_mhz)


def default_planted_drift(spec: ExperimentSpec) -> np.ndarray:
    if spec.calibration.planted_drift_mhz is not None:
        return np.asarray(spec.calibration.planted_drift_mhz, dtype=float)
    table = device.CHAIN_DRIFT_MHZ if spec.topology == "chain" else device.LADDER_DRIFT_MHZ
    if spec.size > len(table):
        raise ConfigError("device drift table covers 12 sites; set calibration.planted_drift_mhz")
    return np.asarray(table[: spec.size], dtype=float)


def run_calibrate(spec: ExperimentSpec, threads: int = 1) -> RunOutput:
    cal = spec.calibration
    plan = calibration_plan(spec)
    qubits = device.site_qubits(spec.topology, spec.size)
    out = RunOutput()
    summary = {"command": "calibrate", "topology": spec.topology, "num_sites": spec.size, "s_values_mhz": list(cal.s_values_mhz)}
    if cal.dataset:
        try:
            data = PropagationDataset.from_csv(cal.dataset)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load calibration dataset {cal.dataset}: {exc}") from None
        est = calibration_round(plan, data)
        fitted = gauge_fix(est.delta_f, est.pinned_site or 0)
        out.tables["drift.csv"] = Table(("site", "qubit", "delta_f_mhz"), [(i, qubits[i], fitted[i]) for i in range(spec.size)])
        summary.update(source="dataset", objective=est.objective, iterations=est.iterations, converged=est.converged, pinned_site=est.pinned_site)
    else:
        planted = default_planted_drift(spec)
        first = synthetic_dataset(plan, planted, cal.noise_sigma, spec.seed)
        est = iterated_calibration(plan, planted, cal.max_rounds, cal.stop_below_mhz, cal.noise_sigma, spec.seed)
        ref = 0 if est.pinned_site is None else est.pinned_site
        fitted, truth = gauge_fix(est.delta_f, ref), gauge_fix(planted, ref)
        err = fitted - truth
        out.tables["dataset.csv"] = Table(("run_id", "t_ns", "site", "population"), _dataset_rows(first))
        out.tables["drift.csv"] = Table(
            ("site", "qubit", "delta_f_mhz", "planted_mhz", "error_mhz"),
            [(i, qubits[i], fitted[i], truth[i], err[i]) for i in range(spec.size)],
        )
        out.tables["calibration_rounds.csv"] = Table(
            ("round", "objective", "iterations", "max_abs_residual_fit_mhz"),
            [(h["round"], h["objective"], h["iterations"], h["max_abs_residual_fit"]) for h in est.history],
        )
        summary.update(
            source="synthetic",
            rounds=len(est.history),
            objective_at_planted=objective(planted, first, plan),
            final_objective=est.objective,
            max_abs_error_mhz=float(np.max(np.abs(err))),
            converged=est.converged,
            pinned_site=est.pinned_site,
        )
    out.summary = summary
    return out


def _dataset_rows(data: PropagationDataset) -> list[tuple]:
    rows = []
    for r, (m, s) in enumerate(data.runs):
        rid = f"e{m}s{s:+g}"
        for k, t in enumerate(data.times):
            rows.extend((rid, t, i, data.Z[r, k, i]) for i in range(data.Z.shape[2]))
    return rows


def run_benchmark(spec: ExperimentSpec, threads: int = 1) -> RunOutput:
    bm = spec.benchmark
    out = RunOutput()
    if bm.records:
        try:
            records = load_records(bm.records)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load benchmark records {bm.records}: {exc}") from None
        source = "records"
    else:
        records = simulate_xeb(bm.cycles, bm.num_circuits, bm.depolarization, bm.shots, spec.seed)
        source = "simulated"
    records = sorted(records, key=lambda r: r.m)
    if len({r.D for r in records}) != 1:
        raise ConfigError("benchmark records mix different Hilbert-space dimensions")
    D = records[0].D
    alphas = [xeb_alpha(r, bm.pairing) for r in records]
    variances = [probability_variance(r, bm.variance_axis) for r in records]
    purity = spb_purity(variances, D)
    out.tables["xeb.csv"] = Table(("m", "alpha", "variance", "purity"), [(r.m, a, v, p) for r, a, v, p in zip(records, alphas, variances, purity)])
    fit = fit_decay([(r.m, a) for r, a in zip(records, alphas)])
    out.summary = {
        "command": "benchmark",
        "source": source,
        "D": D,
        "num_ensembles": len(records),
        "fit": {"A": fit.A, "p": fit.p, "B": fit.B, "converged": fit.converged, "unphysical": fit.unphysical},
        "error_rate": error_rate(fit, D),
        "variance_axis": bm.variance_axis,
        "pairing": bm.pairing,
    }
    if not bm.records:
        out.summary["depolarization"] = bm.depolarization
    return out


def run_page_table(spec: ExperimentSpec, threads: int = 1) -> RunOutput:
    N = spec.size
    out = RunOutput()
    out.tables["page_table.csv"] = Table(("l", "page_value"), [(l, page_value(l, N)) for l in range(1, N + 1)])
    out.summary = {"command": "page-table", "num_sites": N, "page_value": {str(l): page_value(l, N) for l in range(1, N + 1)}}
    return out


COMMANDS = {
    "quench": run_quench,
    "tmi": run_tmi,
    "oracle-check": run_oracle_check,
    "calibrate": run_calibrate,
    "benchmark": run_benchmark,
    "page-table": run_page_table,
}

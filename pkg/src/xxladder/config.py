"""Experiment specification files (YAML) and their validation.

A spec is one YAML mapping. Every section is optional; see ``README.md`` for
the full schema and ``specs/`` for ready-made files. Sites are
0-based indices (chain site ``i`` is qubit ``Q{i+1}``; ladder site ``m*W + n``
is rung ``n`` of leg ``m``).
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import device
from .hilbert import MAX_SITES


class ConfigError(ValueError):
    """Raised for unreadable or invalid spec files; ``details`` is machine-readable."""

    def __init__(self, message: str, details: Optional[list] = None):
        super().__init__(message)
        self.details = details or []


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CouplingSpec(_Section):
    source: Literal["table", "uniform"] = "table"
    intrachain_mhz: float = Field(12.3, gt=0)
    rung_mhz: float = Field(13.6, gt=0)


class InitialStateSpec(_Section):
    # "auto": default bit pattern for quench-type runs, EPR seed for tmi
    kind: Literal["auto", "bits", "epr"] = "auto"
    bits: Optional[str] = None
    pair: tuple[int, int] = (0, 1)
    rest: Optional[str] = None  # remainder pattern for the EPR seed; all zeros by default

    @field_validator("bits", "rest")
    @classmethod
    def _binary(cls, v):
        if v is not None and (not v or set(v) - {"0", "1"}):
            raise ValueError("bit patterns are strings of 0 and 1")
        return v


class TimeGrid(_Section):
    start_ns: float = Field(0.0, ge=0)
    stop_ns: Optional[float] = None  # default by topology
    step_ns: float = Field(2.0, gt=0)

    def grid(self, default_stop: float) -> np.ndarray:
        stop = self.stop_ns if self.stop_ns is not None else default_stop
        n = int(np.floor((stop - self.start_ns) / self.step_ns + 1e-9)) + 1
        return self.start_ns + self.step_ns * np.arange(n)


class TMIPartition(_Section):
    subset: list[int] = [0, 1, 2, 3, 4]
    A: list[int] = [0]
    B: list[int] = [1]
    C: list[int] = [2, 3, 4]

    @model_validator(mode="after")
    def _disjoint_cover(self):
        parts = [set(self.A), set(self.B), set(self.C)]
        if any(not p for p in parts):
            raise ValueError("TMI parts A, B, C must be non-empty")
        if len(self.A) + len(self.B) + len(self.C) != len(parts[0] | parts[1] | parts[2]):
            raise ValueError("TMI parts A, B, C must be disjoint")
        if parts[0] | parts[1] | parts[2] != set(self.subset) or len(set(self.subset)) != len(self.subset):
            raise ValueError("TMI parts must exactly cover the tomography subset")
        return self


class ObservableSpec(_Section):
    densities: bool = True
    distance: bool = True
    entropy_subsystems: Optional[list[int]] = None  # l -> sites 0..l-1; default 1..min(6, N)
    volume_law: bool = True
    tmi: TMIPartition = TMIPartition()
    density_window_ns: float = 30.0
    entropy_window_ns: float = 60.0


class NoiseSpec(_Section):
    mode: Literal["off", "dephasing", "dephasing+relaxation"] = "off"
    t2star_us: Optional[list[float]] = None  # device table by default
    t1_us: Optional[list[float]] = None
    method: Literal["auto", "dense", "trajectories"] = "auto"
    trajectories: int = Field(500, ge=2)

    @field_validator("mode", mode="before")
    @classmethod
    def _yaml_off(cls, v):
        return "off" if v is False else v  # YAML 1.1 reads a bare ``off`` as false


class SolverSpec(_Section):
    method: Literal["auto", "dense-eig", "krylov"] = "auto"
    dense_threshold: int = Field(4096, ge=1)
    krylov_dim: int = Field(30, ge=4)
    krylov_tol: float = Field(1e-10, gt=0)


class CalibrationSpec(_Section):
    s_values_mhz: list[float] = [3.0, -3.0]
    planted_drift_mhz: Optional[list[float]] = None  # device drift table by default
    dataset: Optional[str] = None  # CSV of measured populations; replaces the synthetic loop
    noise_sigma: float = Field(0.0, ge=0)
    max_rounds: int = Field(2, ge=1)
    stop_below_mhz: float = Field(0.01, gt=0)
    times: TimeGrid = TimeGrid(stop_ns=100.0)
    working_frequency_mhz: float = device.WORKING_FREQUENCY_MHZ

    @field_validator("s_values_mhz")
    @classmethod
    def _nonzero(cls, v):
        if not v or any(s == 0 for s in v):
            raise ValueError("ramp values must be non-zero")
        return v


class BenchmarkSpec(_Section):
    records: Optional[str] = None  # JSON ensemble records; simulated when absent
    cycles: list[int] = [1, 5, 10, 20, 30, 40, 60, 80, 100]
    num_circuits: int = Field(80, ge=1)
    depolarization: float = Field(0.0016, ge=0, le=1)
    shots: Optional[int] = Field(None, ge=1)
    variance_axis: Literal["circuits", "pooled", "bitstrings"] = "circuits"
    pairing: Literal["circuit", "ensemble"] = "circuit"


class OracleSpec(_Section):
    tolerance: float = Field(1e-8, gt=0)


class ExperimentSpec(_Section):
    topology: Literal["chain", "ladder"] = "chain"
    size: int = 12
    couplings: CouplingSpec = CouplingSpec()
    initial_state: InitialStateSpec = InitialStateSpec()
    times: TimeGrid = TimeGrid()
    observables: ObservableSpec = ObservableSpec()
    noise: NoiseSpec = NoiseSpec()
    solver: SolverSpec = SolverSpec()
    seed: int = Field(0, ge=0, lt=2**64)
    threads: Optional[int] = Field(None, ge=1)
    output: Optional[str] = None
    calibration: CalibrationSpec = CalibrationSpec()
    benchmark: BenchmarkSpec = BenchmarkSpec()
    oracle: OracleSpec = OracleSpec()

    @model_validator(mode="after")
    def _consistent(self):
        N = self.size
        if not 2 <= N <= MAX_SITES:
            raise ValueError(f"size must be between 2 and {MAX_SITES}")
        if self.topology == "ladder" and (N % 2 or N < 4):
            raise ValueError("ladder size must be even and at least 4")
        if self.couplings.source == "table" and N > 12:
            raise ValueError("the device coupling table covers at most 12 sites")
        self._check_sites(self.initial_state.pair, "initial_state.pair")
        if self.initial_state.pair[0] == self.initial_state.pair[1]:
            raise ValueError("initial_state.pair needs two distinct sites")
        for name in ("bits", "rest"):
            pattern = getattr(self.initial_state, name)
            if pattern is not None and len(pattern) != N:
                raise ValueError(f"initial_state.{name} must have {N} characters")
        rest = self.initial_state.rest
        if rest is not None and any(rest[p] == "1" for p in self.initial_state.pair):
            raise ValueError("initial_state.rest must leave the EPR pair empty")
        for l in self.entropy_sizes():
            if not 1 <= l <= N:
                raise ValueError(f"entropy subsystem size {l} outside 1..{N}")
        if "tmi" in self.observables.model_fields_set:
            self.check_tmi_sites()
        stop = self.default_stop_ns if self.times.stop_ns is None else self.times.stop_ns
        if stop < self.times.start_ns:
            raise ValueError("time grid is empty (stop before start)")
        last = self.time_grid()[-1]
        for name in ("density_window_ns", "entropy_window_ns"):
            if getattr(self.observables, name) > last:
                raise ValueError(f"observables.{name} starts after the last time point ({last:g} ns)")
        cal = self.calibration
        if cal.times.stop_ns is not None and cal.times.stop_ns < cal.times.start_ns:
            raise ValueError("calibration time grid is empty")
        for name in ("t2star_us", "t1_us"):
            v = getattr(self.noise, name)
            if v is not None and (len(v) != N or min(v) <= 0):
                raise ValueError(f"noise.{name} needs {N} positive values")
        if cal.planted_drift_mhz is not None and len(cal.planted_drift_mhz) != N:
            raise ValueError(f"calibration.planted_drift_mhz needs {N} values")
        if any(m < 0 for m in self.benchmark.cycles) or len(set(self.benchmark.cycles)) < 3:
            raise ValueError("benchmark.cycles needs at least three distinct non-negative values")
        return self

    def check_tmi_sites(self) -> None:
        self._check_sites(self.observables.tmi.subset, "observables.tmi.subset")

    def _check_sites(self, sites, where: str) -> None:
        bad = [s for s in sites if not 0 <= s < self.size]
        if bad:
            raise ValueError(f"{where} references missing sites {bad}")

    def entropy_sizes(self) -> list[int]:
        sizes = self.observables.entropy_subsystems
        return sorted(set(sizes)) if sizes is not None else list(range(1, min(6, self.size) + 1))

    @property
    def default_stop_ns(self) -> float:
        return 300.0 if self.topology == "chain" else 200.0

    def time_grid(self) -> np.ndarray:
        return self.times.grid(self.default_stop_ns)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def spec_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _error_details(exc: ValidationError) -> list[dict]:
    return [
        {"loc": ".".join(str(p) for p in e["loc"]), "msg": e["msg"], "type": e["type"]}
        for e in exc.errors()
    ]


def parse_spec(data) -> ExperimentSpec:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("spec must be a mapping at the top level")
    try:
        return ExperimentSpec.model_validate(data)
    except ValidationError as exc:
        details = _error_details(exc)
        raise ConfigError(f"invalid spec: {details[0]['loc'] or '<root>'}: {details[0]['msg']}", details) from None


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read spec {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"spec {path} is not valid YAML: {exc}") from None
    return parse_spec(data)


def dump_spec(spec: ExperimentSpec) -> str:
    return yaml.safe_dump(spec.model_dump(mode="json"), sort_keys=False)

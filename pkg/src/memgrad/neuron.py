"""Conductance-based neurons built from an element bank, and the spike experiment.

A neuron here is a memRC circuit with up to three branches: a gateless leak,
an excitatory branch (sodium, ``m^3 h``) and an inhibitory branch (potassium,
``n^4``). :func:`run_experiment` drives it with a current pulse and solves it
twice, once with the coupled ODE and once by waveform relaxation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from ._schema import ConfigError, fields, integer, number
from .circuits import (
    MemRCCircuit,
    Segment,
    SolveReport,
    SolverConfig,
    ode_solve,
    stimulus,
    waveform_relax,
)
from .elements import BANK_ROLES, ElementBank, load_bank
from .trajectory import TimeGrid, Trajectory, norm

DEFAULT_GRID = TimeGrid(0.0, 50.0, 500)
SPIKE_THRESHOLD = 0.0  # mV
SPIKE_HYSTERESIS = 10.0  # mV


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to build and drive one circuit.

    ``bank`` is a preset name or a path to a bank file. ``branches`` picks
    elements from the bank by name; left empty it takes the bank's role
    elements in leak, excitatory, inhibitory order. ``capacitance`` overrides
    the bank's value when given.
    """

    bank: str = "hh1952"
    grid: TimeGrid = DEFAULT_GRID
    segments: tuple[Segment, ...] = ()
    solver: SolverConfig = SolverConfig()
    branches: tuple[str, ...] = ()
    capacitance: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(sorted(self.segments, key=lambda s: s.start)))
        object.__setattr__(self, "branches", tuple(self.branches))
        for a, b in zip(self.segments[:-1], self.segments[1:]):
            if b.start < a.end:
                raise ValueError("stimulus segments overlap")
        for s in self.segments:
            if s.start < self.grid.t_start or s.end > self.grid.t_end:
                raise ValueError(f"segment [{s.start}, {s.end}] leaves the grid window")
        if self.capacitance is not None and not self.capacitance > 0:
            raise ValueError("capacitance must be positive")

    def to_dict(self) -> dict:
        circuit: dict[str, Any] = {"bank": self.bank}
        if self.branches:
            circuit["branches"] = list(self.branches)
        if self.capacitance is not None:
            circuit["capacitance"] = self.capacitance
        return {
            "circuit": circuit,
            "grid": {"t_start": self.grid.t_start, "t_end": self.grid.t_end, "n_samples": self.grid.n_samples},
            "stimulus": [{"start": s.start, "end": s.end, "amplitude": s.amplitude} for s in self.segments],
            "solver": {"tol": self.solver.tol, "max_iter": self.solver.max_iter},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentSpec":
        d = fields(data, "config", ("circuit", "grid"), ("stimulus", "solver"))
        c = fields(d["circuit"], "circuit", ("bank",), ("branches", "capacitance"))
        branches = c.get("branches") or []
        if not isinstance(branches, list) or not all(isinstance(b, str) for b in branches):
            raise ConfigError("circuit.branches: expected a list of element names")
        cap = c.get("capacitance")
        cap = None if cap is None else number(cap, "circuit.capacitance")
        if cap is not None and not cap > 0:
            raise ConfigError("circuit.capacitance: must be positive")

        g = fields(d["grid"], "grid", ("t_start", "t_end", "n_samples"))
        try:
            grid = TimeGrid(
                number(g["t_start"], "grid.t_start"),
                number(g["t_end"], "grid.t_end"),
                integer(g["n_samples"], "grid.n_samples"),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"grid: {exc}") from None
        if grid.n_samples < 2:
            raise ConfigError("grid.n_samples: need at least 2 samples")

        raw_segments = d.get("stimulus") or []
        if not isinstance(raw_segments, list):
            raise ConfigError("stimulus: expected a list of segments")
        segments = []
        for k, raw in enumerate(raw_segments):
            where = f"stimulus[{k}]"
            s = fields(raw, where, ("start", "end", "amplitude"))
            try:
                segments.append(
                    Segment(
                        number(s["start"], f"{where}.start"),
                        number(s["end"], f"{where}.end"),
                        number(s["amplitude"], f"{where}.amplitude"),
                    )
                )
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"{where}: {exc}") from None

        sv = fields(d.get("solver") or {}, "solver", (), ("tol", "max_iter"))
        try:
            solver = SolverConfig(
                number(sv.get("tol", 1e-6), "solver.tol"),
                integer(sv.get("max_iter", 50), "solver.max_iter"),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"solver: {exc}") from None

        try:
            return cls(str(c["bank"]), grid, tuple(segments), solver, tuple(branches), cap)
        except ValueError as exc:
            raise ConfigError(f"stimulus: {exc}") from None

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text: str) -> "ExperimentSpec":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(str(exc)) from None
        return cls.from_dict(data)


def spike_experiment(amplitude: float = 10.0, n_samples: int = 500) -> ExperimentSpec:
    """HH 1952 neuron on [0, 50] ms with a 2 ms current pulse starting at 20 ms."""
    return ExperimentSpec("hh1952", TimeGrid(0.0, 50.0, n_samples), (Segment(20.0, 22.0, amplitude),))


def _resolve_bank(bank: str, base_dir: str | Path | None) -> ElementBank:
    path = Path(bank)
    if base_dir is not None and path.suffix in (".yaml", ".yml") and not path.is_absolute():
        path = Path(base_dir) / path
        return load_bank(path)
    return load_bank(bank)


def role_branches(bank: ElementBank) -> tuple[str, ...]:
    """Element names in leak, excitatory, inhibitory order; all elements if the bank has no roles."""
    if not bank.roles:
        return tuple(bank.elements)
    return tuple(bank.roles[r] for r in BANK_ROLES if r in bank.roles)


def _check_battery_order(bank: ElementBank) -> None:
    if not all(r in bank.roles for r in BANK_ROLES):
        return
    b = {r: bank[bank.roles[r]].battery for r in BANK_ROLES}
    if not b["inhibitory"] < b["leak"] < b["excitatory"]:
        raise ConfigError(
            f"bank {bank.name!r}: batteries must satisfy inhibitory < leak < excitatory, got "
            f"{b['inhibitory']} / {b['leak']} / {b['excitatory']} mV"
        )


def build_circuit(spec: ExperimentSpec, base_dir: str | Path | None = None) -> MemRCCircuit:
    """Assemble the circuit of ``spec`` with its stimulus on its grid."""
    bank = _resolve_bank(spec.bank, base_dir)
    _check_battery_order(bank)
    names = spec.branches or role_branches(bank)
    branches = []
    for name in names:
        try:
            branches.append(bank[name])
        except KeyError as exc:
            raise ConfigError(f"circuit.branches: {exc.args[0]}") from None
    C = bank.capacitance if spec.capacitance is None else spec.capacitance
    return MemRCCircuit(C, tuple(branches), stimulus(spec.grid, spec.segments))


def build_hh(preset: str = "hh1952", grid: TimeGrid = DEFAULT_GRID, segments: Sequence[Segment] = ()) -> MemRCCircuit:
    """Neuron circuit from a shipped preset, one branch per role present in the bank."""
    return build_circuit(ExperimentSpec(preset, grid, tuple(segments)))


def count_spikes(v: Trajectory, threshold: float = SPIKE_THRESHOLD, hysteresis: float = SPIKE_HYSTERESIS) -> int:
    """Upward crossings of ``threshold``; the detector re-arms below ``threshold - hysteresis``."""
    armed = True
    n = 0
    for x in v.samples:
        if armed and x > threshold:
            n += 1
            armed = False
        elif not armed and x < threshold - hysteresis:
            armed = True
    return n


@dataclass(frozen=True)
class ComparisonMetrics:
    """Relaxation result against the ODE reference."""

    rel_l2: float
    peak_time_delta: float  # ms
    peak_value_delta: float  # mV
    n_iter: int
    spikes_ode: int = 0
    spikes_relax: int = 0
    status: str = field(default="converged")

    def to_dict(self) -> dict:
        return {
            "rel_l2": self.rel_l2,
            "peak_time_delta": self.peak_time_delta,
            "peak_value_delta": self.peak_value_delta,
            "n_iter": self.n_iter,
            "spikes_ode": self.spikes_ode,
            "spikes_relax": self.spikes_relax,
            "relax_status": self.status,
        }


def compare(reference: SolveReport, candidate: SolveReport) -> ComparisonMetrics:
    """Metrics of ``candidate`` relative to ``reference`` (both on one grid)."""
    v_ref, v = reference.voltage, candidate.voltage
    t = v_ref.times
    k_ref, k = int(np.argmax(v_ref.samples)), int(np.argmax(v.samples))
    return ComparisonMetrics(
        rel_l2=norm(v - v_ref) / max(norm(v_ref), 1.0),
        peak_time_delta=abs(float(t[k] - t[k_ref])),
        peak_value_delta=abs(float(v.samples[k] - v_ref.samples[k_ref])),
        n_iter=candidate.n_iter,
        spikes_ode=count_spikes(v_ref),
        spikes_relax=count_spikes(v),
        status=candidate.status,
    )


def run_experiment(
    spec: ExperimentSpec, base_dir: str | Path | None = None
) -> tuple[SolveReport, SolveReport, ComparisonMetrics]:
    """Solve ``spec`` with both solvers on the same grid and stimulus and compare them.

    The relaxation result is compared even when it did not converge.
    """
    circuit = build_circuit(spec, base_dir)
    ode = ode_solve(circuit)
    relax = waveform_relax(circuit, spec.solver)
    return ode, relax, compare(ode, relax)


__all__ = [
    "DEFAULT_GRID",
    "SPIKE_THRESHOLD",
    "SPIKE_HYSTERESIS",
    "ExperimentSpec",
    "ComparisonMetrics",
    "spike_experiment",
    "role_branches",
    "build_circuit",
    "build_hh",
    "count_spikes",
    "compare",
    "run_experiment",
]

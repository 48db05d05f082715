"""memRC circuits: a capacitor, a bank of memristive branches and a current source.

    C dv/dt = -sum_k g_k(v)(t) (v(t) - battery_k) + i(t)

Two solvers are provided. :func:`ode_solve` integrates voltage and gates
together. :func:`waveform_relax` alternates between whole trajectories:
conductances along a fixed voltage (:func:`compute_g`), then the voltage of
the resulting linear time-varying circuit (:func:`compute_v`).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _rk4
from .elements import (
    PHYSIOLOGICAL_RANGE,
    ElementState,
    IntegrationError,
    MemristiveElement,
    gate_steady_state,
    integrate_gates,
)
from .gradient import HopfieldNet, StaticConductance, cocontent_resistive
from .trajectory import TimeGrid, Trajectory, VectorTrajectory, inner, integrate, norm


class EquilibriumError(RuntimeError):
    """No rest state could be bracketed."""


@dataclass(frozen=True)
class Segment:
    """Constant current ``amplitude`` for ``start <= t <= end``."""

    start: float
    end: float
    amplitude: float

    def __post_init__(self):
        if not self.end >= self.start:
            raise ValueError(f"segment end {self.end} precedes start {self.start}")


def stimulus(grid: TimeGrid, segments: Sequence[Segment] = ()) -> Trajectory:
    """Sample piecewise-constant current segments on ``grid`` (endpoints inclusive)."""
    segs = sorted(segments, key=lambda s: s.start)
    for a, b in zip(segs[:-1], segs[1:]):
        if b.start < a.end:
            raise ValueError("stimulus segments overlap")
    t = grid.times
    i = np.zeros_like(t)
    for s in segs:
        if s.start < grid.t_start or s.end > grid.t_end:
            raise ValueError(f"segment [{s.start}, {s.end}] leaves the grid window")
        i[(t >= s.start - 1e-12) & (t <= s.end + 1e-12)] += s.amplitude
    return Trajectory(grid, i)


@dataclass(frozen=True)
class MemRCCircuit:
    C: float
    branches: tuple[MemristiveElement, ...]
    input: Trajectory

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if not self.C > 0:
            raise ValueError("capacitance must be positive")
        if not self.branches:
            raise ValueError("a memRC circuit needs at least one branch")
        for b in self.branches:
            if b.needs_presynaptic:
                raise ValueError(f"branch {b.name!r} needs a presynaptic voltage; not a single-port branch")

    @property
    def grid(self) -> TimeGrid:
        return self.input.grid

    @property
    def branch_names(self) -> tuple[str, ...]:
        return tuple(b.name for b in self.branches)

    def with_input(self, input: Trajectory) -> "MemRCCircuit":
        return MemRCCircuit(self.C, self.branches, input)


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-6
    max_iter: int = 50
    store_iterates: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Outcome of a circuit solve.

    ``status`` is ``"converged"``, ``"not_converged"`` or ``"diverged"``;
    ``ode_solve`` always reports ``"converged"`` after one pass.
    """

    method: str
    voltage: Trajectory
    gate_trajectories: tuple[tuple[Trajectory, ...], ...]
    conductances: tuple[Trajectory, ...]
    branch_names: tuple[str, ...]
    n_iter: int
    residual_history: tuple[float, ...]
    status: str
    iterate_snapshots: tuple[Trajectory, ...] | None = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def branch_currents(self, circuit: MemRCCircuit) -> tuple[Trajectory, ...]:
        v = self.voltage.samples
        return tuple(
            Trajectory(self.voltage.grid, g.samples * (v - b.battery))
            for g, b in zip(self.conductances, circuit.branches)
        )


def _default_states(c: MemRCCircuit, v0: float, x0) -> list[ElementState]:
    if x0 is None:
        return [gate_steady_state(b, v0) for b in c.branches]
    if len(x0) != len(c.branches):
        raise ValueError("need one initial state per branch")
    return list(x0)


def circuit_stiffness(c: MemRCCircuit) -> float:
    """Upper bound (1/ms) on the decay rates of the voltage and gate equations."""
    probe = np.linspace(*PHYSIOLOGICAL_RANGE, 1801)
    rates = [sum(b.g_max for b in c.branches) / c.C]
    for b in c.branches:
        for gate in b.gates:
            a, bb = gate.rates(probe)
            rates.append(float(np.max(a + bb)))
    return max(rates)


def ode_solve(
    c: MemRCCircuit,
    v0: float | None = None,
    x0: Sequence[ElementState] | None = None,
    substeps: int | None = None,
) -> SolveReport:
    """Reference solution: RK4 on voltage and all gates together.

    Each grid interval is split into ``substeps`` equal RK4 steps, by default
    the fewest that keep the step inside RK4's stability region for
    :func:`circuit_stiffness`. Defaults to the rest state. The input current
    is linearly interpolated between samples.
    """
    if v0 is None:
        v0, rest_states = rest_state(c)
        x0 = rest_states if x0 is None else x0
    if not math.isfinite(v0):
        raise ValueError("v0 must be finite")
    states = _default_states(c, v0, x0)
    grid = c.grid
    times = grid.times
    m = substeps or _rk4.substeps_for(grid.dt, circuit_stiffness(c))
    current = c.input.samples.tolist()
    gates = [(gate.alpha.scalar, gate.beta.scalar) for b in c.branches for gate in b.gates]
    layout = []  # per branch: g_max, battery, [(gate index, exponent)]
    pos = 0
    for b in c.branches:
        layout.append((b.g_max, b.battery, [(pos + j, gate.exponent) for j, gate in enumerate(b.gates)]))
        pos += len(b.gates)
    inv_C = 1.0 / c.C

    def rhs(y, i_in):
        v = y[0]
        total = 0.0
        for g_max, battery, members in layout:
            g = g_max
            for idx, p in members:
                g *= y[idx + 1] ** p
            total += g * (v - battery)
        dy = [(i_in - total) * inv_C]
        for j, (alpha, beta) in enumerate(gates):
            x = y[j + 1]
            dy.append(alpha(v) * (1.0 - x) - beta(v) * x)
        return dy

    y = [float(v0)] + [x for st in states for x in st.values]
    n = len(y)
    out = np.empty((grid.n_samples, n))
    out[0] = y
    h = grid.dt / m
    try:
        for k in range(grid.n_samples - 1):
            i0, i1 = current[k], current[k + 1]
            for j in range(m):
                ia = i0 + (i1 - i0) * (j / m)
                im = i0 + (i1 - i0) * ((j + 0.5) / m)
                ib = i0 + (i1 - i0) * ((j + 1.0) / m)
                k1 = rhs(y, ia)
                k2 = rhs([y[q] + 0.5 * h * k1[q] for q in range(n)], im)
                k3 = rhs([y[q] + 0.5 * h * k2[q] for q in range(n)], im)
                k4 = rhs([y[q] + h * k3[q] for q in range(n)], ib)
                y = [y[q] + h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]) for q in range(n)]
                for q in range(1, n):
                    y[q] = min(max(y[q], 0.0), 1.0)
            if not all(math.isfinite(x) for x in y):
                raise OverflowError
            out[k + 1] = y
    except (OverflowError, ZeroDivisionError):
        raise IntegrationError("ode_solve: non-finite state", float(times[k + 1])) from None
    voltage = Trajectory(grid, out[:, 0])
    gate_trajs, conds = [], []
    for b, (_, _, members) in zip(c.branches, layout):
        gt = tuple(Trajectory(grid, out[:, idx + 1]) for idx, _ in members)
        gate_trajs.append(gt)
        g = b.conductance_from_gates([x.samples for x in gt])
        conds.append(Trajectory(grid, np.broadcast_to(g, (grid.n_samples,))))
    return SolveReport("ode", voltage, tuple(gate_trajs), tuple(conds), c.branch_names, 1, (), "converged")


def compute_g(c: MemRCCircuit, v: Trajectory) -> tuple[tuple[Trajectory, ...], tuple[Trajectory, ...]]:
    """Gate and conductance trajectories of every branch along the voltage ``v``.

    Gates start from steady state at ``v(t_start)``. Returns ``(gates, conductances)``.
    """
    if v.grid != c.grid:
        raise ValueError("voltage must live on the circuit grid")
    gates, conds = [], []
    for b in c.branches:
        gt = integrate_gates(b, v)
        gates.append(gt)
        if b.is_memoryless:
            conds.append(Trajectory.constant(v.grid, b.g_max))
        else:
            conds.append(Trajectory(v.grid, b.conductance_from_gates([g.samples for g in gt])))
    return tuple(gates), tuple(conds)


def compute_v(c: MemRCCircuit, g_frozen: Sequence[Trajectory], v0: float, substeps: int | None = None) -> Trajectory:
    """Voltage of the linear time-varying circuit with conductances frozen to ``g_frozen``.

    RK4 with conductances and input linearly interpolated inside each grid
    interval; ``substeps`` per interval default to the fewest that keep
    ``h * sum_k g_k / C`` inside RK4's stability region.
    """
    if len(g_frozen) != len(c.branches):
        raise ValueError("need one conductance trajectory per branch")
    grid = c.grid
    G = np.stack([g.samples for g in g_frozen])
    battery = np.array([b.battery for b in c.branches])
    a = (battery @ G + c.input.samples) / c.C
    k = G.sum(axis=0) / c.C
    m = substeps or _rk4.substeps_for(grid.dt, float(np.max(np.abs(k))))
    a0, da = a[:-1], np.diff(a)
    k0, dk = k[:-1], np.diff(k)
    P, Q = _rk4.composed_affine_coefficients(lambda th: (a0 + th * da, k0 + th * dk), grid.dt, m)
    with np.errstate(over="ignore", invalid="ignore"):
        v = _rk4.iterate_affine(P, Q, v0)
    if not np.all(np.isfinite(v)):
        bad = int(np.argmax(~np.isfinite(v)))
        raise IntegrationError("compute_v: non-finite voltage", grid.times[bad])
    return Trajectory(grid, v)


def _diverging(history: Sequence[float]) -> bool:
    if len(history) < 4:
        return False
    r = history[-4:]
    return r[3] > r[2] > r[1] > r[0] and r[3] >= 10.0 * r[0]


def waveform_relax(c: MemRCCircuit, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Two-step alternate iteration started from the rest state.

    Each sweep computes conductances along the current voltage iterate and
    then the voltage they produce, always starting from the rest voltage.
    The residual of sweep k is ``|v_k - v_{k-1}| / max(|v_{k-1}|, 1)``.
    """
    v_rest, _ = rest_state(c)
    v = Trajectory.constant(c.grid, v_rest)
    history: list[float] = []
    snapshots: list[Trajectory] = [v] if cfg.store_iterates else []
    status = "not_converged"
    feedback = any(not b.is_memoryless for b in c.branches)
    gates = conds = None
    for _ in range(cfg.max_iter):
        gates, conds = compute_g(c, v)
        v_new = compute_v(c, conds, v_rest)
        r = norm(v_new - v) / max(norm(v), 1.0)
        v = v_new
        if cfg.store_iterates:
            snapshots.append(v)
        if not feedback:
            # conductances do not depend on v, so the next sweep reproduces v exactly
            r = 0.0
        history.append(r)
        if r < cfg.tol:
            status = "converged"
            break
        if _diverging(history):
            status = "diverged"
            break
    # gates and conductances consistent with the returned voltage
    gates, conds = compute_g(c, v)
    return SolveReport(
        "relax",
        v,
        gates,
        conds,
        c.branch_names,
        len(history),
        tuple(history),
        status,
        tuple(snapshots) if cfg.store_iterates else None,
    )


def steady_current(c: MemRCCircuit, v: float) -> float:
    """Total branch current at constant voltage ``v`` with every gate at steady state."""
    total = 0.0
    for b in c.branches:
        x = gate_steady_state(b, v)
        total += float(b.conductance_from_gates(x.values)) * (v - b.battery)
    return total


def rest_state(c: MemRCCircuit, bracket: tuple[float, float] = (-100.0, 60.0)) -> tuple[float, list[ElementState]]:
    """Zero of the steady-state current: bisection on ``bracket`` then secant polish."""
    lo, hi = bracket
    f_lo, f_hi = steady_current(c, lo), steady_current(c, hi)
    if f_lo == 0.0:
        root = lo
    elif f_hi == 0.0:
        root = hi
    else:
        if np.sign(f_lo) == np.sign(f_hi):
            raise EquilibriumError(
                f"no sign change of the steady-state current on [{lo}, {hi}] mV: F={f_lo:.4g}, {f_hi:.4g}"
            )
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            f_mid = steady_current(c, mid)
            if f_mid == 0.0 or hi - lo < 1e-6:
                break
            if np.sign(f_mid) == np.sign(f_lo):
                lo, f_lo = mid, f_mid
            else:
                hi, f_hi = mid, f_mid
        # secant polish from the bracket ends
        x0, x1, f0, f1 = lo, hi, f_lo, f_hi
        best, f_best = (x0, f0) if abs(f0) < abs(f1) else (x1, f1)
        for _ in range(50):
            if abs(f_best) < 1e-12 or f1 == f0:
                break
            x2 = x1 - f1 * (x1 - x0) / (f1 - f0)
            f2 = steady_current(c, x2)
            x0, f0, x1, f1 = x1, f1, x2, f2
            if abs(f2) < abs(f_best):
                best, f_best = x2, f2
        root = best
    return float(root), [gate_steady_state(b, root) for b in c.branches]


@dataclass(frozen=True)
class EnergyBalance:
    capacitive_delta: float  # C (v(T)^2 - v(t0)^2) / 2
    capacitive_inner: float  # <v, C dv/dt>
    residual_open: float  # <v, C dv/dt + sum_k i_k - i>
    residual_closed: float  # <v, sum_k i_k - i>
    per_branch_dissipation: tuple[float, ...]  # <v - battery_k, i_k>
    branch_power_scale: float  # int |v sum_k i_k| dt
    supplied: float  # <v, i>
    branch_names: tuple[str, ...] = field(default=())


def time_derivative(v: Trajectory) -> Trajectory:
    """Central differences inside, second-order one-sided differences at the ends."""
    return Trajectory(v.grid, np.gradient(v.samples, v.grid.dt, edge_order=2))


def energy_balance(c: MemRCCircuit, r: SolveReport) -> EnergyBalance:
    v = r.voltage
    currents = r.branch_currents(c)
    total = Trajectory(v.grid, np.sum([i.samples for i in currents], axis=0))
    cap = c.C * time_derivative(v)
    closed = total - c.input
    s = v.samples
    return EnergyBalance(
        capacitive_delta=0.5 * c.C * (s[-1] ** 2 - s[0] ** 2),
        capacitive_inner=inner(v, cap),
        residual_open=inner(v, cap + closed),
        residual_closed=inner(v, closed),
        per_branch_dissipation=tuple(inner(v - b.battery, i) for b, i in zip(c.branches, currents)),
        branch_power_scale=integrate(Trajectory(v.grid, np.abs(s * total.samples))),
        supplied=inner(v, c.input),
        branch_names=c.branch_names,
    )


def capacitive_coenergy(C, v) -> float:
    """Stored capacitive co-energy ``sum_j C_j v_j**2 / 2``; ``C`` may be a circuit."""
    if isinstance(C, MemRCCircuit):
        C = C.C
    C = np.asarray(C, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(np.sum(0.5 * C * v * v))


def rc_gradient_flow(
    g: StaticConductance, C: float, i: float, v0: float, grid: TimeGrid
) -> tuple[Trajectory, Trajectory]:
    """RK4 of ``C dv/dt = -g(v) v + i`` and the potential ``E(v) - v i`` along it."""
    if not C > 0:
        raise ValueError("capacitance must be positive")

    def rhs(t, y):
        return (-g(y) * y + i) / C

    try:
        v = _rk4.solve(rhs, [v0], grid.times)[:, 0]
    except FloatingPointError as exc:
        raise IntegrationError("rc_gradient_flow: non-finite state", getattr(exc, "time", math.nan)) from None
    potential = cocontent_resistive(g, v) - v * i
    return Trajectory(grid, v), Trajectory(grid, potential)


def hopfield_flow(net: HopfieldNet, I, V0, grid: TimeGrid) -> tuple[VectorTrajectory, Trajectory]:
    """RK4 of ``C dV/dt = -W phi(V) + I`` and the potential ``E(V) - I^T phi(V)``."""
    I = np.asarray(I, dtype=float).reshape(-1)
    V0 = np.asarray(V0, dtype=float).reshape(-1)
    if I.size != net.n or V0.size != net.n:
        raise ValueError("I and V0 must have one entry per unit")

    def rhs(t, V):
        return (-net.W @ net.phi(V) + I) / net.C

    try:
        V = _rk4.solve(rhs, V0, grid.times)
    except FloatingPointError as exc:
        raise IntegrationError("hopfield_flow: non-finite state", getattr(exc, "time", math.nan)) from None
    potential = np.array([net.potential(Vk, I) for Vk in V])
    return VectorTrajectory(grid, V.T), Trajectory(grid, potential)


# --- export -----------------------------------------------------------------

def write_report_csv(report: SolveReport, circuit: MemRCCircuit, path: str | Path) -> None:
    """Columns ``time,v,g_<branch>...,i_in`` at full precision."""
    cols = [report.voltage.times, report.voltage.samples]
    cols += [g.samples for g in report.conductances]
    cols.append(circuit.input.samples)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "v", *[f"g_{n}" for n in report.branch_names], "i_in"])
        for row in zip(*cols):
            w.writerow([format(float(x), ".17g") for x in row])


def read_report_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, k] for k, name in enumerate(header)}


def report_summary(report: SolveReport, balance: EnergyBalance | None = None) -> dict:
    out = {
        "method": report.method,
        "status": report.status,
        "converged": report.converged,
        "n_iter": report.n_iter,
        "residuals": list(report.residual_history),
        "n_samples": report.voltage.grid.n_samples,
    }
    if balance is not None:
        out.update(
            capacitive_delta=balance.capacitive_delta,
            residual_open=balance.residual_open,
            residual_closed=balance.residual_closed,
            branch_power_scale=balance.branch_power_scale,
            per_branch_dissipation=dict(zip(balance.branch_names, balance.per_branch_dissipation)),
        )
    return out


__all__ = [
    "EquilibriumError",
    "Segment",
    "stimulus",
    "MemRCCircuit",
    "SolverConfig",
    "SolveReport",
    "EnergyBalance",
    "circuit_stiffness",
    "ode_solve",
    "compute_g",
    "compute_v",
    "waveform_relax",
    "steady_current",
    "rest_state",
    "time_derivative",
    "energy_balance",
    "capacitive_coenergy",
    "rc_gradient_flow",
    "hopfield_flow",
    "write_report_csv",
    "read_report_csv",
    "report_summary",
]

"""Identity and property suites run by ``memgrad verify``.

Each suite takes the configured circuit and a random generator and returns
:class:`IdentityCheck` records; the driver prints one line per record.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .circuits import (
    MemRCCircuit,
    compute_g,
    compute_v,
    energy_balance,
    ode_solve,
    rest_state,
    steady_current,
    waveform_relax,
    SolverConfig,
)
from .elements import fading_memory_gap, gate_steady_state, memconductance, synapse_element, synapse_matrices
from .gradient import (
    Activation,
    HopfieldNet,
    IdentityCheck,
    NetworkMetric,
    StaticConductance,
    cocontent_path,
    dissipation_memristive,
    grad_memristive,
    grad_resistive_weighted,
    gradient_identity_checks,
    hopfield_identity_check,
    network_metric_check,
    port_conductance,
)
from .trajectory import TimeGrid, Trajectory, inner, norm

N_TRAJECTORIES = 5
N_DIRECTIONS = 4


def smooth_signal(rng: np.random.Generator, grid: TimeGrid, center: float = 0.0, spread: float = 1.0, modes: int = 4) -> Trajectory:
    """Random sum of a few slow sinusoids, centred on ``center`` with peak deviation ``spread``."""
    t = grid.times - grid.t_start
    f = rng.uniform(0.01, 0.3, modes)  # 1/ms
    phase = rng.uniform(0.0, 2 * math.pi, modes)
    amp = rng.normal(size=modes)
    x = np.sum(amp[:, None] * np.sin(2 * math.pi * f[:, None] * t + phase[:, None]), axis=0)
    peak = np.max(np.abs(x))
    if peak > 0:
        x *= spread / peak
    return Trajectory(grid, center + x)


def spike_shape(grid: TimeGrid, peak: float = 100.0, t_peak: float | None = None, width: float = 1.0) -> Trajectory:
    """Narrow asymmetric bump resembling an action potential above rest."""
    if t_peak is None:
        t_peak = grid.t_start + 0.45 * grid.duration
    s = (grid.times - t_peak) / width
    bump = np.where(s < 0, np.exp(-0.5 * s * s), np.exp(-0.5 * (s / 2.5) ** 2) * 1.1 - 0.1 * np.exp(-0.5 * (s / 6) ** 2))
    return Trajectory(grid, peak * bump)


def _membrane(rng, grid) -> Trajectory:
    return smooth_signal(rng, grid, center=-60.0, spread=25.0)


def suite_dissipation(c: MemRCCircuit, rng, offset: float = 0.0) -> list[IdentityCheck]:
    """``<i, v>_{1/g} = <v, v>`` for currents produced by each branch; ``offset`` corrupts ``i``."""
    out = []
    for b in c.branches:
        for k in range(N_TRAJECTORIES):
            v = _membrane(rng, c.grid)
            u = v - b.battery
            g = port_conductance(b, u)
            i = grad_memristive(b, u, g=g) + offset
            lhs, rhs = dissipation_memristive(i, u, g)
            out.append(IdentityCheck(f"dissipation[{b.name}][{k}]", lhs, rhs, 1e-12))
    return out


def suite_gradient(c: MemRCCircuit, rng) -> list[IdentityCheck]:
    """Gradient identity ``<grad, w>_{1/g} = <u, w>`` along random directions."""
    out = []
    for b in c.branches:
        for _ in range(N_TRAJECTORIES):
            u = _membrane(rng, c.grid) - b.battery
            dirs = [smooth_signal(rng, c.grid, 0.0, 1.0) for _ in range(N_DIRECTIONS)]
            out.extend(gradient_identity_checks(b, u, dirs, tol=1e-10))
    return out


def suite_memoryless(c: MemRCCircuit, rng) -> list[IdentityCheck]:
    """Gateless branches through the memristive pipeline against a static resistor."""
    out = []
    for b in c.branches:
        if not b.is_memoryless:
            continue
        static = StaticConductance.constant(b.g_max)
        u = _membrane(rng, c.grid) - b.battery
        i_mem = grad_memristive(b, u)
        i_static = np.array([grad_resistive_weighted(static, x) for x in u.samples])
        err = float(np.max(np.abs(i_mem.samples - i_static)))
        out.append(IdentityCheck(f"memoryless[{b.name}]", err, 0.0, 1e-15, float(np.max(np.abs(i_static)))))
    return out


def suite_cocontent(c: MemRCCircuit, rng) -> list[IdentityCheck]:
    """Path-integral co-content equals ``<v, v>/2`` along straight and bent paths."""
    out = []
    v_bar = spike_shape(c.grid)
    half = 0.5 * inner(v_bar, v_bar)
    bend = smooth_signal(rng, c.grid, 0.0, 30.0)
    for b in c.branches:
        straight = cocontent_path(b, v_bar)
        bent = cocontent_path(b, v_bar, waypoints=[bend])
        out.append(IdentityCheck(f"cocontent[{b.name}][straight]", straight, half, 1e-6))
        out.append(IdentityCheck(f"cocontent[{b.name}][two-segment]", bent, straight, 1e-6))
    return out


def suite_fading_memory(c: MemRCCircuit, rng) -> list[IdentityCheck]:
    """Terminal conductance gap bounded by ``2 g_max exp(-delta / tau)`` for pasts agreeing on ``delta``."""
    out = []
    grid = TimeGrid(0.0, 40.0, 4001)
    v_hold = -65.0
    for b in c.branches:
        if b.is_memoryless:
            continue
        tau = max(float(gs.time_constant(v_hold)) for gs in b.gates)
        gaps = []
        other_past = smooth_signal(rng, grid, -40.0, 30.0).samples
        v1 = Trajectory.constant(grid, v_hold)
        for delta in (2.0, 4.0, 8.0, 16.0):
            early = grid.times < grid.t_end - delta - 1e-9
            v2 = Trajectory(grid, np.where(early, other_past, v_hold))
            gap = fading_memory_gap(b, v1, v2, delta, None, gate_steady_state(b, -20.0))
            bound = 2.0 * b.g_max * math.exp(-delta / tau)
            # excess of the gap over its bound; zero when the bound holds
            out.append(IdentityCheck(f"fading_memory[{b.name}][delta={delta:g}]", max(gap - bound, 0.0), 0.0, 0.0, bound))
            gaps.append(gap)
        rises = sum(max(b2 - b1, 0.0) for b1, b2 in zip(gaps[:-1], gaps[1:]))
        out.append(IdentityCheck(f"fading_memory[{b.name}][monotone]", rises, 0.0, 0.0, 1.0))
    return out


def suite_network(c: MemRCCircuit, rng) -> list[IdentityCheck]:
    """Synapse metric is flagged semidefinite; random positive definite metrics are certified."""
    grid = c.grid
    syn = synapse_element()
    v_pre = smooth_signal(rng, grid, -50.0, 40.0)
    s = memconductance(syn, Trajectory.constant(grid, -65.0), presynaptic=v_pre)
    report = network_metric_check(NetworkMetric(grid, synapse_matrices(s)))
    out = [IdentityCheck("network[synapse][psd_not_pd]", float(report.psd_not_pd), 1.0, 0.0, 1.0)]
    for n in (2, 3, 4):
        A = rng.normal(size=(grid.n_samples, n, n))
        mats = A @ np.swapaxes(A, 1, 2) + 0.1 * np.eye(n)
        rep = network_metric_check(NetworkMetric(grid, mats))
        brute = np.linalg.eigvalsh(mats)[:, 0]
        err = float(np.max(np.abs(rep.min_eigenvalue - brute)))
        out.append(IdentityCheck(f"network[random{n}][certified]", float(rep.certified), 1.0, 0.0, 1.0))
        out.append(IdentityCheck(f"network[random{n}][min_eigenvalue]", err, 0.0, 1e-10, 1.0))
    return out


def suite_hopfield(c: MemRCCircuit, rng) -> list[IdentityCheck]:
    n = 8
    A = rng.normal(size=(n, n))
    net = HopfieldNet(np.ones(n), A @ A.T + n * np.eye(n), Activation("tanh"))
    return [
        hopfield_identity_check(net, rng.normal(size=n), rng.normal(size=n))
        for _ in range(N_TRAJECTORIES)
    ]


def suite_rest(c: MemRCCircuit, rng) -> list[IdentityCheck]:
    v_rest, _ = rest_state(c)
    f = steady_current(c, v_rest)
    return [IdentityCheck("rest[total_current]", f, 0.0, 1e-10, 1.0)]


def suite_energy(c: MemRCCircuit, rng) -> list[IdentityCheck]:
    """Open-trajectory balance and per-branch passivity on the ODE solution."""
    report = ode_solve(c)
    eb = energy_balance(c, report)
    scale = max(abs(eb.capacitive_delta), abs(eb.capacitive_inner), 1e-300)
    out = [IdentityCheck("energy[open_balance]", eb.capacitive_inner, eb.capacitive_delta, 1e-3, scale)]
    for name, d in zip(eb.branch_names, eb.per_branch_dissipation):
        out.append(IdentityCheck(f"energy[passivity][{name}]", min(d, 0.0), 0.0, 1e-9, 1.0))
    return out


def suite_fixed_point(c: MemRCCircuit, rng) -> list[IdentityCheck]:
    """A converged relaxation reproduces itself under one more sweep."""
    cfg = SolverConfig()
    r = waveform_relax(c, cfg)
    v_rest, _ = rest_state(c)
    _, conds = compute_g(c, r.voltage)
    again = compute_v(c, conds, v_rest)
    err = norm(again - r.voltage) / max(norm(r.voltage), 1.0)
    return [
        IdentityCheck("relax[converged]", float(r.converged), 1.0, 0.0, 1.0),
        IdentityCheck("relax[fixed_point]", err, 0.0, cfg.tol, 1.0),
    ]


SUITES: dict[str, Callable] = {
    "dissipation": suite_dissipation,
    "gradient": suite_gradient,
    "memoryless": suite_memoryless,
    "cocontent": suite_cocontent,
    "fading_memory": suite_fading_memory,
    "network": suite_network,
    "hopfield": suite_hopfield,
    "rest": suite_rest,
    "energy": suite_energy,
    "fixed_point": suite_fixed_point,
}


def run_suites(
    c: MemRCCircuit, names, seed: int = 0, corrupt_dissipation_offset: float = 0.0
) -> list[IdentityCheck]:
    rng = np.random.default_rng(seed)
    checks: list[IdentityCheck] = []
    for name in names:
        if name == "dissipation":
            checks.extend(suite_dissipation(c, rng, corrupt_dissipation_offset))
        else:
            checks.extend(SUITES[name](c, rng))
    return checks

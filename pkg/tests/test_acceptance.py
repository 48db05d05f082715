"""The ten acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line (shown in the terminal summary) and
then asserts the same verdict.
"""
import math
import time

import numpy as np

from memgrad.circuits import (
    energy_balance,
    hopfield_flow,
    ode_solve,
    rc_gradient_flow,
    rest_state,
    steady_current,
)
from memgrad.elements import (
    fading_memory_gap,
    gate_steady_state,
    load_bank,
    memconductance,
    synapse_element,
    synapse_matrices,
)
from memgrad.gradient import (
    Activation,
    HopfieldNet,
    MetricWeight,
    NetworkMetric,
    StaticConductance,
    cocontent_path,
    dissipation_memristive,
    grad_memristive,
    grad_resistive_weighted,
    hopfield_identity_check,
    network_metric_check,
    port_conductance,
)
from memgrad.neuron import build_circuit, build_hh, run_experiment, spike_experiment
from memgrad.trajectory import TimeGrid, Trajectory, inner, inner_weighted
from memgrad._suites import smooth_signal, spike_shape

import oracles

HH = load_bank("hh1952")
ELEMENTS = [HH["leak"], HH["sodium"], HH["potassium"]]
GRID = TimeGrid(0.0, 50.0, 500)


def test_c01_gradient_identity(verdict):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for e in ELEMENTS:
        for _ in range(100):
            u = smooth_signal(rng, GRID, -60.0, 35.0) - e.battery
            g = port_conductance(e, u)
            grad = grad_memristive(e, u, g=g)
            metric = MetricWeight.reciprocal_of(g)
            nu = math.sqrt(inner(u, u))
            for _ in range(20):
                w = smooth_signal(rng, GRID, 0.0, 1.0)
                err = abs(inner_weighted(grad, w, metric) - inner(u, w)) / (nu * math.sqrt(inner(w, w)))
                worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 10.0
    assert verdict(1, "gradient identity", ok, f"max rel err {worst:.2e} (tol 1e-10), {elapsed:.2f} s (< 10 s)")


def test_c02_dissipation_identity(verdict):
    rng = np.random.default_rng(102)
    worst = 0.0
    fired = True
    for e in ELEMENTS:
        for _ in range(20):
            u = smooth_signal(rng, GRID, -60.0, 35.0) - e.battery
            g = port_conductance(e, u)
            i = grad_memristive(e, u, g=g)
            lhs, rhs = dissipation_memristive(i, u, g)
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
            lhs_bad, _ = dissipation_memristive(i + 0.5, u, g)
            fired = fired and abs(lhs_bad - rhs) / abs(rhs) > 1e-12
    ok = worst <= 1e-12 and fired
    assert verdict(2, "dissipation identity", ok, f"max rel err {worst:.2e} (tol 1e-12), corrupted pair detected: {fired}")


def test_c03_cocontent_path(verdict):
    rng = np.random.default_rng(103)
    v_bar = spike_shape(GRID)
    half = 0.5 * inner(v_bar, v_bar)
    bend = smooth_signal(rng, GRID, 0.0, 30.0)
    worst_exact = worst_paths = 0.0
    for e in ELEMENTS:
        straight = cocontent_path(e, v_bar, n_path_nodes=33)
        bent = cocontent_path(e, v_bar, n_path_nodes=33, waypoints=[bend])
        worst_exact = max(worst_exact, abs(straight - half) / half)
        worst_paths = max(worst_paths, abs(straight - bent) / abs(straight))
    ok = worst_exact <= 1e-6 and worst_paths <= 1e-6
    assert verdict(
        3, "co-content path integral", ok,
        f"vs <v,v>/2 {worst_exact:.2e}, straight vs two-segment {worst_paths:.2e} (tol 1e-6)",
    )


def test_c04_spike_experiment(verdict):
    t0 = time.perf_counter()
    ode, relax, m = run_experiment(spike_experiment())
    elapsed = time.perf_counter() - t0
    ok = (
        relax.converged
        and m.n_iter <= 10
        and m.spikes_relax == 1
        and m.rel_l2 <= 2e-2
        and m.peak_time_delta <= 0.5
        and elapsed < 5.0
    )
    assert verdict(
        4, "spike experiment", ok,
        f"{m.status} in {m.n_iter} iterations (gate <= 10), spikes {m.spikes_relax}, "
        f"rel L2 {m.rel_l2:.2e} (<= 2e-2), peak offset {m.peak_time_delta:.3f} ms (<= 0.5), {elapsed:.2f} s (< 5 s)",
    )


def test_c05_energy_balance(verdict):
    spec = spike_experiment()
    ode, relax, _ = run_experiment(spec)
    c = build_circuit(spec)
    eb = energy_balance(c, relax)
    closed = abs(eb.residual_closed) / eb.branch_power_scale
    eb_ode = energy_balance(c, ode)
    closed_ode = abs(eb_ode.residual_closed) / eb_ode.branch_power_scale
    passive = min(eb.per_branch_dissipation)
    ok = relax.converged and closed <= 1e-2 and passive >= -1e-9
    assert verdict(
        5, "energy balance", ok,
        f"closed residual {closed:.2e} of branch power (<= 1e-2; ODE solution {closed_ode:.2e}), "
        f"min branch dissipation {passive:.3g} (>= -1e-9)",
    )


def test_c06_memoryless_reduction(verdict):
    rng = np.random.default_rng(106)
    leak = HH["leak"]
    static = StaticConductance.constant(leak.g_max)
    worst_pipe = worst_grad = 0.0
    for _ in range(20):
        v = smooth_signal(rng, GRID, -60.0, 35.0)
        u = v - leak.battery
        i_static = static(u.samples) * u.samples
        g = memconductance(leak, v)
        i_pipe = g.samples * u.samples
        worst_pipe = max(worst_pipe, float(np.max(np.abs(i_pipe - i_static)) / np.max(np.abs(i_static))))
        grad = grad_memristive(leak, u).samples
        resistive = np.array([grad_resistive_weighted(static, x) for x in u.samples])
        worst_grad = max(worst_grad, float(np.max(np.abs(grad - resistive)) / np.max(np.abs(resistive))))
    ok = worst_pipe <= 1e-15 and worst_grad <= 1e-15
    assert verdict(
        6, "memoryless reduction", ok,
        f"pipeline vs static {worst_pipe:.1e}, gradient vs resistive {worst_grad:.1e} (tol 1e-15)",
    )


def test_c07_fading_memory(verdict):
    k = HH["potassium"]
    grid = TimeGrid(0.0, 40.0, 4001)
    v_hold = -65.0
    tau = float(oracles.tau("n", v_hold))
    v1 = Trajectory.constant(grid, v_hold)
    other = smooth_signal(np.random.default_rng(107), grid, -40.0, 30.0).samples
    gaps, bounds = [], []
    for delta in (2.0, 4.0, 8.0, 16.0):
        early = grid.times < grid.t_end - delta - 1e-9
        v2 = Trajectory(grid, np.where(early, other, v_hold))
        gaps.append(fading_memory_gap(k, v1, v2, delta, None, gate_steady_state(k, -20.0)))
        bounds.append(2.0 * k.g_max * math.exp(-delta / tau))
    monotone = all(b < a for a, b in zip(gaps[:-1], gaps[1:]))
    bounded = all(g <= b for g, b in zip(gaps, bounds))
    ok = monotone and bounded
    detail = ", ".join(f"{g:.2e}<={b:.2e}" for g, b in zip(gaps, bounds))
    assert verdict(7, "fading memory", ok, f"gaps {detail}, tau_n {tau:.3f} ms, decreasing: {monotone}")


def test_c08_gradient_flows(verdict):
    rng = np.random.default_rng(108)
    grid = TimeGrid(0.0, 20.0, 401)
    g = StaticConductance.polynomial(0.3, 0.0, 2e-4, domain=(-150.0, 150.0))
    worst_rc = -math.inf
    for _ in range(100):
        _, pot = rc_gradient_flow(g, 1.0, rng.uniform(-5, 5), rng.uniform(-60, 60), grid)
        worst_rc = max(worst_rc, float(np.max(np.diff(pot.samples))))
    n = 8
    A = rng.normal(size=(n, n))
    net = HopfieldNet(np.ones(n), A @ A.T / n + 0.1 * np.eye(n), Activation("tanh"))
    I = rng.normal(size=n)
    worst_hop = -math.inf
    for _ in range(100):
        _, pot = hopfield_flow(net, I, rng.normal(scale=2.0, size=n), grid)
        worst_hop = max(worst_hop, float(np.max(np.diff(pot.samples))))
    worst_id = max(
        hopfield_identity_check(net, rng.normal(size=n), rng.normal(size=n)).rel_err for _ in range(100)
    )
    ok = worst_rc <= 1e-9 and worst_hop <= 1e-9 and worst_id <= 1e-12
    assert verdict(
        8, "gradient flows", ok,
        f"max potential rise rc {worst_rc:.1e}, hopfield {worst_hop:.1e} (slack 1e-9), identity {worst_id:.1e} (tol 1e-12)",
    )


def test_c09_rest_state(verdict):
    c = build_hh()
    v_rest, _ = rest_state(c)
    f = steady_current(c, v_rest)
    v = ode_solve(c).voltage.samples
    drift = float(np.max(np.abs(v - v[0])))
    ok = abs(v_rest + 65.0) <= 1.0 and abs(f) < 1e-10 and drift < 1e-6
    assert verdict(
        9, "rest state", ok,
        f"v_rest {v_rest:.6f} mV (oracle {float(oracles.hh_rest()):.6f}), current {f:.1e} (< 1e-10), drift {drift:.1e} mV (< 1e-6)",
    )


def test_c10_network_metric(verdict):
    rng = np.random.default_rng(110)
    syn = synapse_element()
    grid = TimeGrid(0.0, 20.0, 201)
    v_pre = smooth_signal(rng, grid, -50.0, 40.0)
    s = memconductance(syn, Trajectory.constant(grid, -65.0), presynaptic=v_pre)
    synapse_flag = network_metric_check(NetworkMetric(grid, synapse_matrices(s))).psd_not_pd
    small = TimeGrid(0.0, 1.0, 8)
    certified = True
    worst = 0.0
    for n in (1, 2, 3, 4):
        A = rng.normal(size=(small.n_samples, n, n))
        mats = A @ np.swapaxes(A, 1, 2) + 0.1 * np.eye(n)
        rep = network_metric_check(NetworkMetric(small, mats))
        certified = certified and rep.certified
        for m, got in zip(mats, rep.min_eigenvalue):
            worst = max(worst, abs(got - oracles.min_eigenvalue(m.tolist())))
    ok = synapse_flag and certified and worst <= 1e-10
    assert verdict(
        10, "network metric", ok,
        f"synapse PSD-not-PD: {synapse_flag}, random PD certified: {certified}, "
        f"min eigenvalue vs characteristic polynomial {worst:.1e} (tol 1e-10)",
    )

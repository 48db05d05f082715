#!/usr/bin/env python3
"""Ion channel currents as gradients.

For a gated conductance g(u), the current g(u) u is the gradient of <u, u>/2
once trajectories are measured with the metric 1/g. We check this along
random directions, then recover <u, u>/2 as a co-content path integral.
"""
import numpy as np

from memgrad import (
    MetricWeight,
    TimeGrid,
    cocontent_path,
    dissipation_memristive,
    grad_memristive,
    inner,
    inner_weighted,
    load_bank,
    port_conductance,
)
from memgrad._suites import smooth_signal, spike_shape

rng = np.random.default_rng(0)
grid = TimeGrid(0.0, 50.0, 500)
bank = load_bank("hh1952")

for name in ("leak", "sodium", "potassium"):
    e = bank[name]
    v = smooth_signal(rng, grid, center=-60.0, spread=35.0)
    u = v - e.battery  # port voltage across the conductance
    g = port_conductance(e, u)
    i = grad_memristive(e, u, g=g)
    metric = MetricWeight.reciprocal_of(g)

    w = smooth_signal(rng, grid, 0.0, 1.0)
    lhs = inner_weighted(i, w, metric)
    rhs = inner(u, w)
    diss, vv = dissipation_memristive(i, u, g)
    print(f"{name:10s} <grad, w>_1/g = {lhs: .10e}   <u, w> = {rhs: .10e}")
    print(f"{'':10s} <i, u>_1/g    = {diss: .10e}   <u, u> = {vv: .10e}")

# co-content: integrate the gradient along a path from 0 to v_bar
v_bar = spike_shape(grid)
half = 0.5 * inner(v_bar, v_bar)
bend = smooth_signal(rng, grid, 0.0, 30.0)
print()
print(f"<v, v>/2 = {half:.10e}")
for name in ("sodium", "potassium"):
    straight = cocontent_path(bank[name], v_bar)
    bent = cocontent_path(bank[name], v_bar, waypoints=[bend])
    print(f"{name:10s} straight path {straight:.10e}   bent path {bent:.10e}")

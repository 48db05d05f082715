#!/usr/bin/env python3
"""A continuous Hopfield network slides down its potential.

C dV/dt = -W tanh(V) + I is a gradient flow when W is symmetric, so the
potential phi^T W phi / 2 - I^T phi never increases along a trajectory.
"""
import numpy as np

from memgrad import HopfieldNet, TimeGrid, hopfield_flow, hopfield_identity_check

rng = np.random.default_rng(3)
n = 8
A = rng.normal(size=(n, n))
net = HopfieldNet(np.ones(n), A @ A.T / n + 0.1 * np.eye(n))
I = rng.normal(size=n)
grid = TimeGrid(0.0, 20.0, 401)

for trial in range(3):
    V0 = rng.normal(scale=2.0, size=n)
    V, potential = hopfield_flow(net, I, V0, grid)
    p = potential.samples
    print(f"trial {trial}: potential {p[0]:+.4f} -> {p[-1]:+.4f}, largest step up {np.diff(p).max():.1e}")

check = hopfield_identity_check(net, rng.normal(size=n), rng.normal(size=n))
print()
print(check.record())

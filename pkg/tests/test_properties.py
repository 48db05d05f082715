import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from memgrad.circuits import Segment, SolverConfig, hopfield_flow, rc_gradient_flow
from memgrad.elements import load_bank, memconductance
from memgrad.gradient import (
    HopfieldNet,
    StaticConductance,
    dissipation_memristive,
    gradient_identity_checks,
    jacobi_eigenvalues,
    port_conductance,
)
from memgrad.neuron import ExperimentSpec
from memgrad.trajectory import TimeGrid, Trajectory, inner, norm
from memgrad._suites import smooth_signal

HH = load_bank("hh1952")
ELEMENTS = [HH[n] for n in ("leak", "sodium", "potassium")]
GRID = TimeGrid(0.0, 20.0, 201)

seeds = st.integers(0, 2**32 - 1)
elements = st.sampled_from(ELEMENTS)
PROP = settings(max_examples=30, deadline=None)


def membrane(seed, grid=GRID):
    return smooth_signal(np.random.default_rng(seed), grid, center=-60.0, spread=35.0)


@PROP
@given(seeds, elements)
def test_conductance_between_zero_and_gmax(seed, e):
    g = memconductance(e, membrane(seed)).samples
    assert np.all(g >= 0.0) and np.all(g <= e.g_max * (1 + 1e-12))


@PROP
@given(seeds, elements)
def test_gradient_identity(seed, e):
    rng = np.random.default_rng(seed)
    u = membrane(seed) - e.battery
    dirs = [smooth_signal(rng, GRID, 0.0, 1.0) for _ in range(3)]
    assert all(c.passed for c in gradient_identity_checks(e, u, dirs, tol=1e-10))


@PROP
@given(seeds, elements)
def test_dissipation_identity(seed, e):
    u = membrane(seed) - e.battery
    g = port_conductance(e, u)
    i = Trajectory(GRID, g.samples * u.samples)
    lhs, rhs = dissipation_memristive(i, u, g)
    assert abs(lhs - rhs) <= 1e-12 * rhs


@PROP
@given(seeds, seeds, st.integers(1, GRID.n_samples - 2), elements)
def test_memconductance_is_causal(seed, other, k, e):
    a = membrane(seed)
    b = Trajectory(GRID, np.concatenate([a.samples[: k + 1], membrane(other).samples[k + 1:]]))
    ga, gb = memconductance(e, a).samples, memconductance(e, b).samples
    np.testing.assert_array_equal(ga[: k + 1], gb[: k + 1])


@PROP
@given(seeds, st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_inner_is_symmetric_and_bilinear(seed, a, b):
    rng = np.random.default_rng(seed)
    x, y, z = (smooth_signal(rng, GRID, 0.0, 1.0) for _ in range(3))
    assert inner(x, y) == inner(y, x)
    lhs = inner(a * x + b * y, z)
    assert math.isclose(lhs, a * inner(x, z) + b * inner(y, z), rel_tol=1e-12, abs_tol=1e-11 * norm(z) * (norm(x) + norm(y)))
    assert norm(x) >= 0.0


@PROP
@given(st.floats(0.1, 2.0), st.floats(0.0, 0.01), st.floats(0.2, 3.0), st.floats(-5.0, 5.0), st.floats(-20.0, 20.0))
def test_rc_potential_descends(g0, g2, C, i, v0):
    g = StaticConductance.polynomial(g0, 0.0, g2, domain=(-100.0, 100.0))
    _, pot = rc_gradient_flow(g, C, i, v0, TimeGrid(0.0, 10.0, 401))
    assert np.all(np.diff(pot.samples) <= 1e-9)


@PROP
@given(seeds)
def test_hopfield_potential_descends(seed):
    rng = np.random.default_rng(seed)
    n = 8
    A = rng.normal(size=(n, n))
    net = HopfieldNet(rng.uniform(0.5, 2.0, n), A @ A.T / n + 0.1 * np.eye(n))
    _, pot = hopfield_flow(net, rng.normal(size=n), rng.normal(scale=2.0, size=n), TimeGrid(0.0, 10.0, 201))
    assert np.all(np.diff(pot.samples) <= 1e-9)


@PROP
@given(seeds, st.integers(1, 6))
def test_jacobi_matches_lapack(seed, n):
    A = np.random.default_rng(seed).normal(size=(n, n))
    A = A + A.T
    np.testing.assert_allclose(np.sort(jacobi_eigenvalues(A)), np.linalg.eigvalsh(A), atol=1e-10 * max(1.0, np.abs(A).max()))


finite = st.floats(-50.0, 50.0, allow_nan=False)


@st.composite
def specs(draw):
    t0 = draw(st.floats(-10.0, 10.0))
    dur = draw(st.floats(1.0, 100.0))
    grid = TimeGrid(t0, t0 + dur, draw(st.integers(2, 2000)))
    cuts = sorted(draw(st.lists(st.floats(0.0, 1.0), min_size=0, max_size=6, unique=True)))
    segs = [Segment(t0 + dur * a, t0 + dur * b, draw(finite)) for a, b in zip(cuts[::2], cuts[1::2]) if b > a]
    solver = SolverConfig(draw(st.floats(1e-12, 1e-2)), draw(st.integers(1, 500)))
    branches = draw(st.lists(st.sampled_from(["leak", "sodium", "potassium"]), max_size=3, unique=True))
    cap = draw(st.none() | st.floats(0.1, 10.0))
    return ExperimentSpec("hh1952", grid, tuple(segs), solver, tuple(branches), cap)


@settings(max_examples=100, deadline=None)
@given(specs())
def test_spec_round_trip(spec):
    back = ExperimentSpec.loads(spec.dumps())
    assert back == spec
    assert back.dumps() == spec.dumps()

import numpy as np
import pytest
import yaml

from memgrad import ConfigError
from memgrad.circuits import Segment, SolverConfig, ode_solve, rest_state
from memgrad.elements import load_bank
from memgrad.gradient import grad_memristive
from memgrad.neuron import (
    ExperimentSpec,
    build_circuit,
    build_hh,
    count_spikes,
    role_branches,
    run_experiment,
    spike_experiment,
)
from memgrad.trajectory import TimeGrid, Trajectory, norm

import oracles


@pytest.fixture(scope="module")
def spike_run():
    return run_experiment(spike_experiment())


def test_hh_branches_in_role_order():
    bank = load_bank("hh1952")
    c = build_hh()
    assert [b.name for b in c.branches] == list(role_branches(bank))
    leak, na, k = c.branches
    assert leak.gates == ()
    assert k.battery < leak.battery < na.battery
    assert (leak.battery, na.battery, k.battery) == (-54.4, 50.0, -77.0)
    assert c.C == 1.0


def test_leak_preset_is_one_gateless_branch():
    c = build_hh("leak")
    assert len(c.branches) == 1 and c.branches[0].gates == ()


def test_rest_conductances_against_oracle():
    c = build_hh()
    v_rest, states = rest_state(c)
    m, h, n = (float(oracles.x_inf(g, v_rest)) for g in "mhn")
    leak, na, k = c.branches
    assert na.conductance_from_gates(states[1].values) == pytest.approx(oracles.G_NA * m**3 * h, rel=1e-9)
    assert k.conductance_from_gates(states[2].values) == pytest.approx(oracles.G_K * n**4, rel=1e-9)
    # about 0.011 mS/cm^2 of sodium at rest
    assert na.conductance_from_gates(states[1].values) == pytest.approx(0.011, rel=0.2)


def test_count_spikes_hysteresis():
    g = TimeGrid(0.0, 6.0, 7)
    assert count_spikes(Trajectory(g, [-65, 5, -5, 5, -20, 5, -65])) == 2
    assert count_spikes(Trajectory.constant(g, -65.0)) == 0


def test_spike_experiment_metrics(spike_run):
    ode, relax, m = spike_run
    assert m.spikes_ode == 1 and m.spikes_relax == 1
    assert m.rel_l2 <= 2e-2
    assert m.peak_time_delta <= 0.5
    assert m.status == "converged" and m.n_iter == relax.n_iter
    # the spike returns to rest
    assert abs(ode.voltage.samples[-1] - ode.voltage.samples[0]) < 0.5
    assert abs(relax.voltage.samples[-1] - relax.voltage.samples[0]) < 0.5


def test_zero_stimulus_solvers_agree():
    ode, relax, m = run_experiment(ExperimentSpec())
    assert m.rel_l2 < 1e-6
    assert m.spikes_ode == 0 and m.spikes_relax == 0


def test_refractory_strong_pulse_still_one_spike():
    _, _, m = run_experiment(spike_experiment(amplitude=20.0))
    assert m.spikes_ode == 1


def test_subthreshold_pulse_no_spike():
    _, _, m = run_experiment(spike_experiment(amplitude=1.0))
    assert m.spikes_ode == 0 and m.spikes_relax == 0


def test_branch_currents_are_memristive_gradients(spike_run):
    ode, _, _ = spike_run
    c = build_circuit(spike_experiment())
    total_grad = np.zeros(ode.voltage.grid.n_samples)
    total_ode = np.zeros_like(total_grad)
    for b, g, i in zip(c.branches, ode.conductances, ode.branch_currents(c)):
        u = ode.voltage - b.battery
        total_grad += grad_memristive(b, u, g=g).samples
        total_ode += i.samples
    assert np.max(np.abs(total_grad - total_ode)) <= 1e-8 * np.max(np.abs(total_ode))


def test_spec_round_trip():
    spec = ExperimentSpec(
        "hh1952",
        TimeGrid(0.0, 30.0, 301),
        (Segment(12.0, 13.0, -2.5), Segment(2.0, 4.0, 7.0)),
        SolverConfig(1e-8, 20),
        ("leak", "sodium"),
        2.0,
    )
    back = ExperimentSpec.loads(spec.dumps())
    assert back == spec
    assert back.segments[0].start == 2.0


@pytest.mark.parametrize(
    "text",
    [
        "circuit: {bank: hh1952}\ngrid: {t_start: 0, t_end: 50, n_samples: 500}\nsolvr: {}\n",
        "circuit: {bank: hh1952}\ngrid: {t_start: 0, t_end: 50}\n",
        "circuit: {bank: nope}\ngrid: {t_start: 0, t_end: 50, n_samples: 500}\n",
        "circuit: {bank: hh1952}\ngrid: {t_start: 0, t_end: 50, n_samples: 1}\n",
        "circuit: {bank: hh1952}\ngrid: {t_start: 0, t_end: 50, n_samples: 500}\n"
        "stimulus: [{start: 1, end: 3, amplitude: 1}, {start: 2, end: 4, amplitude: 1}]\n",
        "circuit: {bank: hh1952, capacitance: -1}\ngrid: {t_start: 0, t_end: 50, n_samples: 500}\n",
        "circuit: {bank: hh1952}\ngrid: {t_start: 0, t_end: 50, n_samples: 500}\nsolver: {tol: 0}\n",
        "circuit: [\n",
    ],
)
def test_bad_specs_raise_config_error(text):
    with pytest.raises(ConfigError):
        build_circuit(ExperimentSpec.loads(text))


def test_unknown_branch_name():
    with pytest.raises(ConfigError):
        build_circuit(ExperimentSpec(branches=("leak", "ca")))


def test_battery_order_is_enforced(tmp_path):
    bank = load_bank("hh1952").to_dict()
    for el in bank["elements"]:
        if el["name"] == bank["roles"]["leak"]:
            el["battery"] = 60.0
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(bank))
    with pytest.raises(ConfigError):
        build_circuit(ExperimentSpec(bank="bad.yaml"), base_dir=tmp_path)


def test_ode_matches_textbook_rest():
    c = build_hh()
    v = ode_solve(c).voltage
    assert np.max(np.abs(v.samples - float(oracles.hh_rest()))) < 1e-6
    assert norm(v - v.samples[0]) == pytest.approx(0.0, abs=1e-6)

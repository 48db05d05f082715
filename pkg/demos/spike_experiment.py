#!/usr/bin/env python3
"""One action potential, solved twice.

A Hodgkin-Huxley membrane gets a 2 ms current pulse at 20 ms. We integrate
the coupled ODE, then solve the same circuit by alternating between
"conductances along a voltage" and "voltage under frozen conductances"
until the voltage stops changing.
"""
import numpy as np

from memgrad import build_circuit, energy_balance, run_experiment, spike_experiment

spec = spike_experiment(amplitude=10.0, n_samples=500)
ode, relax, metrics = run_experiment(spec)

# residual of each sweep: |v_k - v_{k-1}| / |v_{k-1}|
print("sweep  residual")
for k, r in enumerate(relax.residual_history, 1):
    print(f"{k:5d}  {r:.3e}")

print()
print(f"status            {relax.status} after {relax.n_iter} sweeps")
print(f"spikes            ode {metrics.spikes_ode}, relaxation {metrics.spikes_relax}")
print(f"relative L2 gap   {metrics.rel_l2:.3e}")
print(f"peak              {ode.voltage.samples.max():.2f} mV at {ode.voltage.times[np.argmax(ode.voltage.samples)]:.2f} ms")

# the ODE solution is the reference; coarse ASCII trace of it
t, v = ode.voltage.times, ode.voltage.samples
print()
for lo in range(40, -90, -10):
    row = "".join("*" if lo <= x < lo + 10 else " " for x in v[::5])
    print(f"{lo:4d} |{row}")
print("     +" + "-" * len(v[::5]))
print(f"      0 ms{' ' * (len(v[::5]) - 14)}{t[-1]:.0f} ms")

# energy bookkeeping: branches are passive, the balance closes up to discretisation
c = build_circuit(spec)
for name, report in (("ode", ode), ("relaxation", relax)):
    eb = energy_balance(c, report)
    print(f"{name:10s} closed residual / branch power = {abs(eb.residual_closed) / eb.branch_power_scale:.2e}")
    for b, d in zip(eb.branch_names, eb.per_branch_dissipation):
        print(f"           dissipation[{b}] = {d:.1f}")

"""Reference computations that share no code with the package.

Rate functions are written out in their textbook form, integrals as explicit
loops, and roots and eigenvalues in extended precision with mpmath.
"""
from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy.integrate import solve_ivp

mpmath.mp.dps = 40

# HH 1952, voltage in mV with rest near -65 mV
G_NA, G_K, G_L = 120.0, 36.0, 0.3
E_NA, E_K, E_L = 50.0, -77.0, -54.4
C_M = 1.0


def alpha_m(v):
    x = v + 40.0
    if abs(x) < 1e-7:
        return 1.0 + x / 20.0
    return 0.1 * x / (1.0 - mpmath.exp(-x / 10.0))


def beta_m(v):
    return 4.0 * mpmath.exp(-(v + 65.0) / 18.0)


def alpha_h(v):
    return 0.07 * mpmath.exp(-(v + 65.0) / 20.0)


def beta_h(v):
    return 1.0 / (1.0 + mpmath.exp(-(v + 35.0) / 10.0))


def alpha_n(v):
    x = v + 55.0
    if abs(x) < 1e-7:
        return 0.1 + x / 200.0
    return 0.01 * x / (1.0 - mpmath.exp(-x / 10.0))


def beta_n(v):
    return 0.125 * mpmath.exp(-(v + 65.0) / 80.0)


RATES = {"m": (alpha_m, beta_m), "h": (alpha_h, beta_h), "n": (alpha_n, beta_n)}


def x_inf(gate, v):
    a, b = RATES[gate]
    v = mpmath.mpf(v)
    return a(v) / (a(v) + b(v))


def tau(gate, v):
    a, b = RATES[gate]
    v = mpmath.mpf(v)
    return 1 / (a(v) + b(v))


def steady_current(v):
    v = mpmath.mpf(v)
    m, h, n = x_inf("m", v), x_inf("h", v), x_inf("n", v)
    return G_NA * m**3 * h * (v - E_NA) + G_K * n**4 * (v - E_K) + G_L * (v - E_L)


def hh_rest():
    """Rest voltage of the HH 1952 membrane to ~30 digits."""
    return mpmath.findroot(steady_current, mpmath.mpf(-65))


def trapezoid(y, dt):
    total = 0.0
    for k in range(len(y) - 1):
        total += 0.5 * dt * (y[k] + y[k + 1])
    return total


def rc_step_response(t, v_l, di, g, C, t_on=0.0):
    """Leak membrane at rest, current step ``di`` switched on at ``t_on``."""
    t = np.asarray(t, dtype=float)
    s = np.clip(t - t_on, 0.0, None)
    return v_l + di / g * (1.0 - np.exp(-s * g / C))


def _f(v, m, h, n):
    return (
        G_NA * m**3 * h * (v - E_NA) + G_K * n**4 * (v - E_K) + G_L * (v - E_L)
    )


def _fl(rate, v):
    return float(rate(mpmath.mpf(v)))


def hh_reference(t_eval, pulses, v0, rtol=1e-11, atol=1e-11):
    """High-accuracy HH solution with an adaptive 8th-order integrator, pulse by pulse."""
    m0, h0, n0 = (float(x_inf(g, v0)) for g in "mhn")
    y = np.array([float(v0), m0, h0, n0])

    def rates(v):
        return {g: (_fl(a, v), _fl(b, v)) for g, (a, b) in RATES.items()}

    def rhs_for(i_amp):
        def rhs(t, s):
            v, m, h, n = s
            r = rates(v)
            return [
                (i_amp - _f(v, m, h, n)) / C_M,
                r["m"][0] * (1 - m) - r["m"][1] * m,
                r["h"][0] * (1 - h) - r["h"][1] * h,
                r["n"][0] * (1 - n) - r["n"][1] * n,
            ]
        return rhs

    # split the window at every discontinuity of the input
    t_eval = np.asarray(t_eval, dtype=float)
    cuts = sorted({t_eval[0], t_eval[-1], *[p for a, b, _ in pulses for p in (a, b)]})
    out = np.empty((len(t_eval), 4))
    for a, b in zip(cuts[:-1], cuts[1:]):
        amp = sum(i for s, e, i in pulses if s <= a and b <= e)
        mask = (t_eval >= a) & (t_eval <= b)
        sol = solve_ivp(rhs_for(amp), (a, b), y, method="DOP853", t_eval=t_eval[mask], rtol=rtol, atol=atol)
        out[mask] = sol.y.T
        y = solve_ivp(rhs_for(amp), (a, b), y, method="DOP853", rtol=rtol, atol=atol).y[:, -1]
    return out


def charpoly(A):
    """Characteristic polynomial coefficients by the Faddeev-LeVerrier recursion (mpmath)."""
    n = len(A)
    A = mpmath.matrix(A)
    coeffs = [mpmath.mpf(1)]
    M = mpmath.zeros(n, n)
    I = mpmath.eye(n)
    for k in range(1, n + 1):
        M = A * M + coeffs[-1] * I
        AM = A * M
        c = -sum(AM[i, i] for i in range(n)) / k
        coeffs.append(c)
    return coeffs


def min_eigenvalue(A):
    """Smallest root of the characteristic polynomial (real symmetric ``A``)."""
    roots = mpmath.polyroots(charpoly(A), maxsteps=200, extraprec=200)
    return float(min(mpmath.re(r) for r in roots))


def gaussian_cocontent_half(amplitude, width, dt, n):
    """Half the squared trapezoid norm of a sampled Gaussian bump, by explicit loop."""
    t = [k * dt for k in range(n)]
    c = t[-1] / 2
    y = [(amplitude * math.exp(-0.5 * ((x - c) / width) ** 2)) ** 2 for x in t]
    return 0.5 * trapezoid(y, dt)

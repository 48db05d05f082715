"""Fixed-step classical Runge-Kutta helpers."""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

STABLE_STEP = 1.5  # target h * stiffness; RK4's real-axis stability limit is about 2.79


def substeps_for(h: float, stiffness: float) -> int:
    """Number of equal RK4 substeps keeping ``h_sub * stiffness`` at or below ``STABLE_STEP``."""
    if not stiffness > 0:
        return 1
    return max(1, math.ceil(h * stiffness / STABLE_STEP))


def affine_step_coefficients(a0, c0, am, cm, a1, c1, h):
    """RK4 step of ``dx/dt = a(t) - c(t) x`` written as ``x -> P x + Q``.

    ``a`` and ``c`` are sampled at the step start, midpoint and end; arrays
    give one step per entry.
    """
    def step(x):
        k1 = a0 - c0 * x
        k2 = am - cm * (x + 0.5 * h * k1)
        k3 = am - cm * (x + 0.5 * h * k2)
        k4 = a1 - c1 * (x + h * k3)
        return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    q = step(0.0)
    return step(1.0) - q, q


def composed_affine_coefficients(coef_at: Callable[[float], tuple], h: float, m: int):
    """Affine map over one grid interval made of ``m`` RK4 substeps.

    ``coef_at(theta)`` returns ``(a, c)`` arrays (one entry per grid interval)
    at the fractional position ``theta`` in [0, 1] of each interval.
    """
    hs = h / m
    P = Q = None
    start = coef_at(0.0)
    for j in range(m):
        mid = coef_at((j + 0.5) / m)
        end = coef_at((j + 1.0) / m)
        Pj, Qj = affine_step_coefficients(start[0], start[1], mid[0], mid[1], end[0], end[1], hs)
        if P is None:
            P, Q = Pj, Qj
        else:
            P, Q = Pj * P, Pj * Q + Qj
        start = end
    return P, Q


def iterate_affine(P: np.ndarray, Q: np.ndarray, x0: float, lo: float | None = None, hi: float | None = None):
    """Run ``x_{k+1} = P_k x_k + Q_k`` from ``x0``, optionally clamping to ``[lo, hi]``."""
    x = np.empty(len(P) + 1)
    x[0] = xk = float(x0)
    clamp = lo is not None
    for k in range(len(P)):
        xk = P[k] * xk + Q[k]
        if clamp:
            if xk < lo:
                xk = lo
            elif xk > hi:
                xk = hi
        x[k + 1] = xk
    return x


def solve(rhs: Callable[[float, np.ndarray], np.ndarray], y0, times: np.ndarray, post=None, substeps: int = 1):
    """Integrate ``dy/dt = rhs(t, y)`` on the uniform ``times``; returns shape ``(len(times), dim)``.

    Each grid interval is covered by ``substeps`` equal RK4 steps. ``post`` is
    applied after every step (e.g. clamping). Raises ``FloatingPointError``
    carrying the time of the first non-finite state.
    """
    y = np.array(y0, dtype=float).reshape(-1)
    out = np.empty((len(times), y.size))
    out[0] = y
    for k in range(len(times) - 1):
        h = (times[k + 1] - times[k]) / substeps
        for j in range(substeps):
            t = times[k] + j * h
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = rhs(t + h, y + h * k3)
            y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if post is not None:
                y = post(y)
        if not np.all(np.isfinite(y)):
            err = FloatingPointError(f"non-finite state at t={times[k + 1]:.6g} ms")
            err.time = float(times[k + 1])
            raise err
        out[k + 1] = y
    return out

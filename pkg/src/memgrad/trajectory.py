"""Sampled signals on a finite past window and their inner products.

A :class:`Trajectory` stands in for an element of the space of square
integrable past signals. The infinite past is truncated to a window
``[t_start, t_end]``; before ``t_start`` every signal is taken to sit at
rest at its first sample. All integrals use the composite trapezoid rule on
the uniform grid.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

EPSILON_FLOOR = 1e-9  # mS, lower bound for metric weights


class GridMismatchError(ValueError):
    """Raised when signals combined in one operation live on different grids."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on ``[t_start, t_end]`` (ms).

    ``n_samples == 1`` is allowed only for the degenerate single-point grid
    produced by :func:`time_shift_project` at the window start.
    """

    t_start: float
    t_end: float
    n_samples: int

    def __post_init__(self):
        n = int(self.n_samples)
        if n != self.n_samples or n < 1:
            raise ValueError(f"n_samples must be a positive integer, got {self.n_samples!r}")
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ValueError("grid bounds must be finite")
        if n == 1:
            if self.t_end != self.t_start:
                raise ValueError("a single-sample grid must have t_end == t_start")
        elif not self.t_end > self.t_start:
            raise ValueError(f"t_end ({self.t_end}) must exceed t_start ({self.t_start})")

    @property
    def dt(self) -> float:
        if self.n_samples == 1:
            return 0.0
        return (self.t_end - self.t_start) / (self.n_samples - 1)

    @property
    def times(self) -> np.ndarray:
        if self.n_samples == 1:
            return np.array([float(self.t_start)])
        return np.linspace(self.t_start, self.t_end, self.n_samples)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def trapezoid_weights(self) -> np.ndarray:
        """Quadrature weights so that ``weights @ f`` is the trapezoid integral."""
        w = np.full(self.n_samples, self.dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def shifted(self, offset: float) -> "TimeGrid":
        return TimeGrid(self.t_start + offset, self.t_end + offset, self.n_samples)

    def refined(self, factor: int = 2) -> "TimeGrid":
        """Grid with ``factor`` times as many intervals over the same window."""
        return TimeGrid(self.t_start, self.t_end, (self.n_samples - 1) * factor + 1)


def _as_samples(samples, n: int) -> np.ndarray:
    arr = np.array(samples, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValueError(f"expected {n} samples, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("trajectory samples must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A real signal sampled on a :class:`TimeGrid`."""

    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "samples", _as_samples(self.samples, self.grid.n_samples))

    @classmethod
    def constant(cls, grid: TimeGrid, value: float) -> "Trajectory":
        return cls(grid, np.full(grid.n_samples, float(value)))

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "Trajectory":
        return cls(grid, np.broadcast_to(fn(grid.times), (grid.n_samples,)))

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __len__(self):
        return self.grid.n_samples

    def with_samples(self, samples) -> "Trajectory":
        return Trajectory(self.grid, samples)

    def _check(self, other: "Trajectory"):
        if not isinstance(other, Trajectory):
            return other
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} != {other.grid}")
        return other.samples

    def __add__(self, other):
        return Trajectory(self.grid, self.samples + self._check(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Trajectory(self.grid, self.samples - self._check(other))

    def __rsub__(self, other):
        return Trajectory(self.grid, self._check(other) - self.samples)

    def __mul__(self, other):
        return Trajectory(self.grid, self.samples * self._check(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Trajectory(self.grid, self.samples / self._check(other))

    def __neg__(self):
        return Trajectory(self.grid, -self.samples)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.samples, other.samples)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class VectorTrajectory:
    """Several channels sharing one grid; ``samples`` has shape ``(n_channels, n_samples)``."""

    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] != self.grid.n_samples:
            raise ValueError(f"bad channel array shape {arr.shape} for {self.grid}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("trajectory samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @classmethod
    def from_channels(cls, channels: Sequence[Trajectory]) -> "VectorTrajectory":
        if not channels:
            raise ValueError("need at least one channel")
        grid = channels[0].grid
        for ch in channels[1:]:
            if ch.grid != grid:
                raise GridMismatchError("all channels must share one grid")
        return cls(grid, np.stack([ch.samples for ch in channels]))

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def channels(self) -> tuple[Trajectory, ...]:
        return tuple(Trajectory(self.grid, row) for row in self.samples)


@dataclass(frozen=True, eq=False)
class MetricWeight:
    """Positive per-sample weights defining a weighted inner product.

    Pass conductances for the g-metric and reciprocal conductances for the
    1/g-metric; :meth:`reciprocal_of` builds the latter with flooring.
    """

    grid: TimeGrid
    weights: np.ndarray
    floor: float = EPSILON_FLOOR

    def __post_init__(self):
        w = _as_samples(self.weights, self.grid.n_samples)
        if np.any(w < self.floor):
            k = int(np.argmin(w))
            raise ValueError(
                f"metric weight {w[k]:.3g} at t={self.grid.times[k]:.6g} is below floor {self.floor:g}"
            )
        object.__setattr__(self, "weights", w)

    @classmethod
    def of(cls, g: Trajectory, floor: float = EPSILON_FLOOR) -> "MetricWeight":
        """The g-metric, with g floored at ``floor``."""
        return cls(g.grid, np.maximum(g.samples, floor), floor)

    @classmethod
    def reciprocal_of(cls, g: Trajectory, floor: float = EPSILON_FLOOR) -> "MetricWeight":
        """The 1/g-metric. g is floored at ``floor`` before inversion."""
        return cls(g.grid, 1.0 / np.maximum(g.samples, floor), floor)


def _shared_grid(*trajs) -> TimeGrid:
    grid = trajs[0].grid
    for t in trajs[1:]:
        if t.grid != grid:
            raise GridMismatchError(f"{grid} != {t.grid}")
    return grid


def integrate(f: Trajectory) -> float:
    """Trapezoid integral of ``f`` over its window."""
    return float(f.grid.trapezoid_weights() @ f.samples)


def inner(v: Trajectory, w: Trajectory) -> float:
    """Unweighted inner product ``int v(t) w(t) dt``."""
    grid = _shared_grid(v, w)
    return float(grid.trapezoid_weights() @ (v.samples * w.samples))


def norm(v: Trajectory) -> float:
    return math.sqrt(max(inner(v, v), 0.0))


def inner_lambda(v: Trajectory, w: Trajectory, lam: float) -> float:
    """Exponentially faded inner product, with ``t_end`` playing the role of time 0.

    Integrates ``v w exp(2 lam (t - t_end))``; recent samples weigh most.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    grid = _shared_grid(v, w)
    fade = np.exp(2.0 * lam * (grid.times - grid.t_end))
    return float(grid.trapezoid_weights() @ (v.samples * w.samples * fade))


def inner_weighted(v: Trajectory, w: Trajectory, m: MetricWeight) -> float:
    """Metric-weighted inner product ``int v(t) w(t) m(t) dt``."""
    grid = _shared_grid(v, w, m)
    if np.any(m.weights <= 0):
        raise ValueError("non-positive metric weight")
    return float(grid.trapezoid_weights() @ (v.samples * w.samples * m.weights))


def directional_derivative(
    F: Callable[[Trajectory], float],
    v: Trajectory,
    w: Trajectory,
    h: float | None = None,
) -> float:
    """Central-difference derivative of the functional ``F`` at ``v`` along ``w``.

    The default step is ``1e-4 * |v| / |w|`` (``1e-4 / |w|`` when ``v`` is zero).
    """
    _shared_grid(v, w)
    nw = norm(w)
    if nw == 0.0:
        return 0.0
    if h is None:
        nv = norm(v)
        h = 1e-4 * (nv if nv > 0 else 1.0) / nw
    if not h > 0:
        raise ValueError("step h must be positive")
    fp = F(v + h * w)
    fm = F(v - h * w)
    if not (math.isfinite(fp) and math.isfinite(fm)):
        raise FloatingPointError("functional evaluated to a non-finite value")
    return (fp - fm) / (2.0 * h)


def time_shift_project(v: Trajectory, t: float) -> Trajectory:
    """Past of ``v`` up to time ``t``, re-labelled so that ``t`` becomes time 0.

    Keeps every sample with time <= ``t`` (to within a hundredth of a step).
    """
    grid = v.grid
    slack = 1e-9 * max(1.0, abs(grid.t_start), abs(grid.t_end))
    if t < grid.t_start - slack or t > grid.t_end + slack:
        raise ValueError(f"t={t} outside window [{grid.t_start}, {grid.t_end}]")
    if grid.n_samples == 1:
        k = 0
    else:
        k = int(math.floor((t - grid.t_start) / grid.dt + 1e-2))
        k = min(max(k, 0), grid.n_samples - 1)
    t_last = grid.t_start + k * grid.dt if k < grid.n_samples - 1 else grid.t_end
    new_grid = TimeGrid(grid.t_start - t_last, 0.0, k + 1) if k > 0 else TimeGrid(0.0, 0.0, 1)
    return Trajectory(new_grid, v.samples[: k + 1])


def write_csv(traj: Trajectory, path: str | Path) -> None:
    """Write ``time,value`` rows at full double precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "value"])
        for t, x in zip(traj.times, traj.samples):
            writer.writerow([format(float(t), ".17g"), format(float(x), ".17g")])


def read_csv(path: str | Path) -> Trajectory:
    """Read a ``time,value`` CSV written by :func:`write_csv`; the grid must be uniform."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["time", "value"]:
            raise ValueError(f"expected header 'time,value', got {header}")
        rows = [(float(a), float(b)) for a, b in reader]
    if not rows:
        raise ValueError("no samples")
    times = np.array([r[0] for r in rows])
    values = np.array([r[1] for r in rows])
    grid = TimeGrid(float(times[0]), float(times[-1]), len(times))
    if len(times) > 1 and not np.allclose(times, grid.times, rtol=0, atol=1e-9 * max(1.0, grid.duration)):
        raise ValueError("CSV times are not a uniform grid")
    return Trajectory(grid, values)


__all__ = [
    "EPSILON_FLOOR",
    "GridMismatchError",
    "TimeGrid",
    "Trajectory",
    "VectorTrajectory",
    "MetricWeight",
    "integrate",
    "inner",
    "norm",
    "inner_lambda",
    "inner_weighted",
    "directional_derivative",
    "time_shift_project",
    "write_csv",
    "read_csv",
]

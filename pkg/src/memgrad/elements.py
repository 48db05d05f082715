"""Memristive one-ports built from gating-variable kinetics.

An element is a maximal conductance times a product of gate powers, in
series with a battery. Each gate obeys first-order kinetics

    tau(v) dx/dt = -x + x_inf(v),   tau = 1/(alpha+beta),  x_inf = alpha/(alpha+beta)

so the element maps a past voltage trajectory to a conductance trajectory
(its memconductance). An element without gates is a plain resistor.

Voltage conventions: ``memconductance`` and ``branch_current`` take the
membrane voltage ``v``. The port voltage across the memristive part alone is
``v - battery``; the gradient module works with that shifted signal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from ._rk4 import composed_affine_coefficients, iterate_affine
from ._schema import ConfigError, fields, integer, number
from .trajectory import Trajectory, time_shift_project

PHYSIOLOGICAL_RANGE = (-120.0, 60.0)  # mV

RATE_FORMS = {
    "constant": ("a",),
    "exponential": ("a", "v0", "k"),
    "linexp": ("a", "v0", "k"),
    "sigmoid": ("a", "v0", "k"),
}


class IntegrationError(FloatingPointError):
    """Gate or circuit integration produced a non-finite state."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:.6g} ms")
        self.time = time


@dataclass(frozen=True)
class RateLaw:
    """Transition rate (1/ms) as a function of voltage (mV).

    Forms::

        constant     a
        exponential  a * exp(-(v - v0) / k)
        linexp       a * (v - v0) / (1 - exp(-(v - v0) / k))     (a*k at v = v0)
        sigmoid      a / (1 + exp(-(v - v0) / k))
    """

    form: str
    a: float
    v0: float = 0.0
    k: float = 1.0

    def __post_init__(self):
        if self.form not in RATE_FORMS:
            raise ValueError(f"unknown rate form {self.form!r}")
        if self.form != "constant" and self.k == 0:
            raise ValueError("rate law scale k must be non-zero")
        probe = self(np.linspace(*PHYSIOLOGICAL_RANGE, 1801))
        if not np.all(np.isfinite(probe)) or np.any(probe < 0):
            raise ValueError(f"{self} is negative or non-finite on {PHYSIOLOGICAL_RANGE} mV")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.form == "constant":
            return np.full(v.shape, self.a)[()]
        x = (v - self.v0) / self.k
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            if self.form == "exponential":
                out = self.a * np.exp(-x)
            elif self.form == "sigmoid":
                out = self.a / (1.0 + np.exp(-x))
            else:
                small = np.abs(x) < 1e-7
                xs = np.where(small, 1.0, x)
                ratio = np.where(small, 1.0 + 0.5 * x, xs / -np.expm1(-xs))
                out = self.a * self.k * ratio
        return out[()]

    def scalar(self, v: float) -> float:
        """Fast evaluation at a single voltage."""
        if self.form == "constant":
            return self.a
        x = (v - self.v0) / self.k
        if self.form == "exponential":
            return self.a * math.exp(-x)
        if self.form == "sigmoid":
            return self.a / (1.0 + math.exp(-x))
        if abs(x) < 1e-7:
            return self.a * self.k * (1.0 + 0.5 * x)
        return self.a * self.k * x / -math.expm1(-x)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in ("form",) + RATE_FORMS[self.form]}

    @classmethod
    def from_dict(cls, data: Mapping, where: str = "rate") -> "RateLaw":
        form = data.get("form") if isinstance(data, Mapping) else None
        if form not in RATE_FORMS:
            raise ConfigError(f"{where}: form must be one of {sorted(RATE_FORMS)}, got {form!r}")
        d = fields(data, where, ("form",) + RATE_FORMS[form])
        kwargs = {k: number(d[k], f"{where}.{k}") for k in RATE_FORMS[form]}
        try:
            return cls(form, **kwargs)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class GateSpec:
    name: str
    alpha: RateLaw
    beta: RateLaw
    exponent: int = 1
    drive: str = "self"  # "self": own membrane voltage, "pre": presynaptic voltage

    def __post_init__(self):
        if int(self.exponent) != self.exponent or self.exponent < 1:
            raise ValueError(f"gate exponent must be a positive integer, got {self.exponent}")
        if self.drive not in ("self", "pre"):
            raise ValueError(f"gate drive must be 'self' or 'pre', got {self.drive!r}")

    def rates(self, v):
        return self.alpha(v), self.beta(v)

    def steady_state(self, v):
        a, b = self.rates(v)
        total = a + b
        if np.any(total <= 0):
            raise ValueError(f"gate {self.name!r}: alpha + beta vanishes; degenerate kinetics")
        return a / total

    def time_constant(self, v):
        a, b = self.rates(v)
        return 1.0 / (a + b)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "exponent": int(self.exponent),
            "alpha": self.alpha.to_dict(),
            "beta": self.beta.to_dict(),
        }
        if self.drive != "self":
            d["drive"] = self.drive
        return d

    @classmethod
    def from_dict(cls, data: Mapping, where: str = "gate") -> "GateSpec":
        d = fields(data, where, ("name", "alpha", "beta"), ("exponent", "drive"))
        try:
            return cls(
                name=str(d["name"]),
                alpha=RateLaw.from_dict(d["alpha"], f"{where}.alpha"),
                beta=RateLaw.from_dict(d["beta"], f"{where}.beta"),
                exponent=integer(d.get("exponent", 1), f"{where}.exponent"),
                drive=str(d.get("drive", "self")),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class MemristiveElement:
    """``g_max * prod(x_j ** p_j)`` in series with a battery of ``battery`` mV."""

    name: str
    g_max: float
    gates: tuple[GateSpec, ...] = ()
    battery: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if not self.g_max > 0:
            raise ValueError(f"element {self.name!r}: g_max must be positive")

    @property
    def is_memoryless(self) -> bool:
        return not self.gates

    @property
    def needs_presynaptic(self) -> bool:
        return any(g.drive == "pre" for g in self.gates)

    def conductance_from_gates(self, gate_values) -> np.ndarray:
        """Instantaneous conductance for gate values stacked along the first axis."""
        g = np.asarray(self.g_max, dtype=float)
        for spec, x in zip(self.gates, gate_values):
            g = g * np.asarray(x, dtype=float) ** spec.exponent
        return g

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "g_max": self.g_max,
            "battery": self.battery,
            "gates": [g.to_dict() for g in self.gates],
        }

    @classmethod
    def from_dict(cls, data: Mapping, where: str = "element") -> "MemristiveElement":
        d = fields(data, where, ("name", "g_max", "battery"), ("gates",))
        gates = d.get("gates") or []
        if not isinstance(gates, list):
            raise ConfigError(f"{where}.gates: expected a list")
        try:
            return cls(
                name=str(d["name"]),
                g_max=number(d["g_max"], f"{where}.g_max"),
                battery=number(d["battery"], f"{where}.battery"),
                gates=tuple(GateSpec.from_dict(g, f"{where}.gates[{i}]") for i, g in enumerate(gates)),
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class ElementState:
    """One value in [0, 1] per gate."""

    values: tuple[float, ...] = ()

    def __post_init__(self):
        vals = tuple(float(x) for x in self.values)
        for x in vals:
            if not (0.0 <= x <= 1.0):
                raise ValueError(f"gate value {x} outside [0, 1]")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)


def _drive_voltage(spec: GateSpec, v, presynaptic):
    if spec.drive == "pre":
        if presynaptic is None:
            raise ValueError(f"gate {spec.name!r} is driven by a presynaptic voltage; none given")
        return presynaptic
    return v


def gate_steady_state(e: MemristiveElement, v: float, v_pre: float | None = None) -> ElementState:
    """Fixed point of every gate at constant voltage ``v``."""
    if not math.isfinite(v):
        raise ValueError("voltage must be finite")
    return ElementState(tuple(float(g.steady_state(_drive_voltage(g, v, v_pre))) for g in e.gates))


def _check_state(e: MemristiveElement, x0: ElementState):
    if len(x0) != len(e.gates):
        raise ValueError(f"element {e.name!r} has {len(e.gates)} gates, state has {len(x0)}")


def integrate_gates(
    e: MemristiveElement,
    v: Trajectory,
    x0: ElementState | None = None,
    presynaptic: Trajectory | None = None,
    substeps: int = 1,
) -> tuple[Trajectory, ...]:
    """Gate trajectories along the voltage ``v``.

    Classical RK4 with the grid step (or ``substeps`` equal steps per grid
    interval); the voltage is linearly interpolated inside each interval.
    ``x0`` defaults to the steady state at ``v(t_start)``. Gate values are
    clamped to [0, 1] after each grid step.
    """
    grid = v.grid
    if presynaptic is not None and presynaptic.grid != grid:
        raise ValueError("presynaptic trajectory must share the voltage grid")
    if x0 is None:
        pre0 = None if presynaptic is None else presynaptic.samples[0]
        x0 = gate_steady_state(e, v.samples[0], pre0)
    _check_state(e, x0)
    times = grid.times
    out = []
    for spec, x_init in zip(e.gates, x0.values):
        drive = _drive_voltage(spec, v, presynaptic).samples
        left, step = drive[:-1], np.diff(drive)

        def coef_at(theta, spec=spec, left=left, step=step):
            a, b = spec.rates(left + theta * step)
            a = np.broadcast_to(a, left.shape)
            return a, a + np.broadcast_to(b, left.shape)

        with np.errstate(over="ignore", invalid="ignore"):
            P, Q = composed_affine_coefficients(coef_at, grid.dt, substeps)
        bad = ~(np.isfinite(P) & np.isfinite(Q))
        if np.any(bad):
            k = int(np.argmax(bad))
            raise IntegrationError(f"gate {spec.name!r} of {e.name!r}: non-finite step", times[k])
        out.append(Trajectory(grid, iterate_affine(P, Q, x_init, 0.0, 1.0)))
    return tuple(out)


def memconductance(
    e: MemristiveElement,
    v: Trajectory,
    x0: ElementState | None = None,
    presynaptic: Trajectory | None = None,
) -> Trajectory:
    """Conductance trajectory (mS) of ``e`` driven by membrane voltage ``v``."""
    if e.is_memoryless:
        return Trajectory.constant(v.grid, e.g_max)
    gates = integrate_gates(e, v, x0, presynaptic)
    return Trajectory(v.grid, e.conductance_from_gates([g.samples for g in gates]))


def branch_current(
    e: MemristiveElement,
    v: Trajectory,
    x0: ElementState | None = None,
    presynaptic: Trajectory | None = None,
) -> Trajectory:
    """``g(v)(t) * (v(t) - battery)``."""
    g = memconductance(e, v, x0, presynaptic)
    return Trajectory(v.grid, g.samples * (v.samples - e.battery))


def fading_memory_gap(
    e: MemristiveElement,
    v1: Trajectory,
    v2: Trajectory,
    delta: float,
    x0_1: ElementState | None = None,
    x0_2: ElementState | None = None,
) -> float:
    """Terminal conductance discrepancy for two pasts that agree on the last ``delta`` ms."""
    if v1.grid != v2.grid:
        raise ValueError("trajectories must share a grid")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    grid = v1.grid
    # a zero-length window constrains nothing
    tail = grid.times >= grid.t_end - delta - 1e-9 * grid.dt if delta > 0 else np.zeros(grid.n_samples, bool)
    if not np.array_equal(v1.samples[tail], v2.samples[tail]):
        raise ValueError(f"trajectories differ inside the final {delta} ms window")
    g1 = memconductance(e, v1, x0_1).samples[-1]
    g2 = memconductance(e, v2, x0_2).samples[-1]
    return float(abs(g1 - g2))


def causal_prefix(e: MemristiveElement, v: Trajectory, t: float, x0: ElementState | None = None) -> Trajectory:
    """Memconductance computed from the past of ``v`` up to ``t`` only (time re-labelled)."""
    return memconductance(e, time_shift_project(v, t), x0)


# --- element banks ---------------------------------------------------------

BANK_ROLES = ("leak", "excitatory", "inhibitory")


@dataclass(frozen=True)
class ElementBank:
    """A named set of elements plus a membrane capacitance (uF/cm^2)."""

    name: str
    capacitance: float
    elements: Mapping[str, MemristiveElement]
    roles: Mapping[str, str] = field(default_factory=dict)
    description: str = ""

    def __getitem__(self, name: str) -> MemristiveElement:
        try:
            return self.elements[name]
        except KeyError:
            raise KeyError(f"bank {self.name!r} has no element {name!r}") from None

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "capacitance": self.capacitance,
            "elements": [el.to_dict() for el in self.elements.values()],
        }
        if self.roles:
            d["roles"] = dict(self.roles)
        if self.description:
            d["description"] = self.description
        return d

    @classmethod
    def from_dict(cls, data: Mapping, where: str = "bank") -> "ElementBank":
        d = fields(data, where, ("name", "capacitance", "elements"), ("roles", "description"))
        if not isinstance(d["elements"], list) or not d["elements"]:
            raise ConfigError(f"{where}.elements: expected a non-empty list")
        elements = {}
        for i, raw in enumerate(d["elements"]):
            el = MemristiveElement.from_dict(raw, f"{where}.elements[{i}]")
            if el.name in elements:
                raise ConfigError(f"{where}.elements[{i}]: duplicate name {el.name!r}")
            elements[el.name] = el
        roles = d.get("roles") or {}
        roles = fields(roles, f"{where}.roles", (), BANK_ROLES)
        for role, name in roles.items():
            if name not in elements:
                raise ConfigError(f"{where}.roles.{role}: no element named {name!r}")
        capacitance = number(d["capacitance"], f"{where}.capacitance")
        if not capacitance > 0:
            raise ConfigError(f"{where}.capacitance: must be positive")
        return cls(str(d["name"]), capacitance, elements, roles, str(d.get("description", "")))


def preset_names() -> list[str]:
    root = resources.files("memgrad") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_bank(source: str | Path) -> ElementBank:
    """Load a bank from a YAML file path or a shipped preset name (e.g. ``"hh1952"``)."""
    path = Path(source)
    if path.suffix in (".yaml", ".yml") or path.exists():
        if not path.exists():
            raise ConfigError(f"bank file {path} does not exist")
        text = path.read_text()
        where = str(path)
    else:
        res = resources.files("memgrad") / "presets" / f"{source}.yaml"
        if not res.is_file():
            raise ConfigError(f"unknown preset {source!r}; available: {', '.join(preset_names())}")
        text = res.read_text()
        where = f"preset {source}"
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    return ElementBank.from_dict(data, where)


def dump_bank(bank: ElementBank) -> str:
    return yaml.safe_dump(bank.to_dict(), sort_keys=False)


def synapse_element(
    g_syn: float = 0.5,
    battery: float = 0.0,
    rise: float = 1.1,
    decay: float = 0.19,
    v_half: float = 2.0,
    slope: float = 5.0,
) -> MemristiveElement:
    """First-order kinetic synapse: one gate ``s`` driven by the presynaptic voltage.

    ``alpha(v_pre) = rise / (1 + exp(-(v_pre - v_half)/slope))`` and a constant
    closing rate ``decay`` (1/ms).
    """
    s = GateSpec(
        "s",
        alpha=RateLaw("sigmoid", rise, v_half, slope),
        beta=RateLaw("constant", decay),
        exponent=1,
        drive="pre",
    )
    return MemristiveElement("synapse", g_syn, (s,), battery)


def synapse_matrices(g_syn_s: Trajectory) -> np.ndarray:
    """Per-sample two-port conductance ``diag(0, g_syn s)`` acting on ``(v_pre, v_post)``."""
    n = g_syn_s.grid.n_samples
    G = np.zeros((n, 2, 2))
    G[:, 1, 1] = g_syn_s.samples
    return G


__all__ = [
    "RateLaw",
    "GateSpec",
    "MemristiveElement",
    "ElementState",
    "ElementBank",
    "IntegrationError",
    "gate_steady_state",
    "integrate_gates",
    "memconductance",
    "branch_current",
    "fading_memory_gap",
    "causal_prefix",
    "load_bank",
    "dump_bank",
    "preset_names",
    "synapse_element",
    "synapse_matrices",
]

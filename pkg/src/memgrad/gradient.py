"""Dissipation, co-content and Riemannian gradients of resistive and memristive elements.

For a resistor ``i = g(v) v`` and for a memristive element ``i = g(v)(t) v(t)``
the current is the gradient of the quadratic ``E(v) = <v, v>/2`` once the
voltage space carries the metric ``1/g``. The functions here compute both
sides of those identities so that they can be checked numerically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from .elements import ElementState, MemristiveElement, memconductance
from .trajectory import (
    EPSILON_FLOOR,
    MetricWeight,
    TimeGrid,
    Trajectory,
    VectorTrajectory,
    inner,
    inner_weighted,
)


class ConsistencyError(ArithmeticError):
    """A gradient identity that holds algebraically failed numerically."""


@dataclass(frozen=True)
class IdentityCheck:
    """One numerically checked identity ``lhs == rhs``."""

    name: str
    lhs: float
    rhs: float
    tol: float
    scale: float | None = None

    @property
    def rel_err(self) -> float:
        scale = self.scale if self.scale is not None else max(abs(self.lhs), abs(self.rhs))
        diff = abs(self.lhs - self.rhs)
        if scale == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / scale

    @property
    def passed(self) -> bool:
        return self.rel_err <= self.tol

    def record(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{self.name} lhs={self.lhs:.17g} rhs={self.rhs:.17g} "
            f"rel_err={self.rel_err:.3e} tol={self.tol:.1e} {status}"
        )


# --- resistive elements -----------------------------------------------------

@dataclass(frozen=True)
class StaticConductance:
    """Voltage-dependent conductance ``g(v)`` (mS) of a memoryless resistor.

    ``form`` is ``"constant"`` (``coefficients = (g,)``), ``"polynomial"``
    (coefficients in increasing powers of v) or ``"tabulated"`` (``nodes`` and
    ``coefficients`` as values, linear interpolation).
    """

    form: str
    coefficients: tuple[float, ...]
    nodes: tuple[float, ...] = ()
    domain: tuple[float, float] = (-200.0, 200.0)

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "nodes", tuple(float(c) for c in self.nodes))
        if self.form not in ("constant", "polynomial", "tabulated"):
            raise ValueError(f"unknown conductance form {self.form!r}")
        if self.form == "constant" and len(self.coefficients) != 1:
            raise ValueError("constant conductance takes one coefficient")
        if self.form == "tabulated":
            if len(self.nodes) != len(self.coefficients) or len(self.nodes) < 2:
                raise ValueError("tabulated conductance needs matching nodes and values")
            if np.any(np.diff(self.nodes) <= 0):
                raise ValueError("tabulation nodes must increase")
            object.__setattr__(self, "domain", (self.nodes[0], self.nodes[-1]))
        probe = self._eval(np.linspace(*self.domain, 2001))
        if np.any(probe < EPSILON_FLOOR):
            raise ValueError(f"conductance drops below {EPSILON_FLOOR:g} mS on {self.domain}")

    @classmethod
    def constant(cls, g: float) -> "StaticConductance":
        return cls("constant", (g,))

    @classmethod
    def polynomial(cls, *coefficients: float, domain=(-200.0, 200.0)) -> "StaticConductance":
        return cls("polynomial", coefficients, domain=domain)

    @classmethod
    def tabulated(cls, nodes: Sequence[float], values: Sequence[float]) -> "StaticConductance":
        return cls("tabulated", tuple(values), tuple(nodes))

    def _eval(self, v):
        v = np.asarray(v, dtype=float)
        if self.form == "constant":
            return np.full(v.shape, self.coefficients[0])
        if self.form == "polynomial":
            return np.polynomial.polynomial.polyval(v, self.coefficients)
        return np.interp(v, self.nodes, self.coefficients)

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        lo, hi = self.domain
        if np.any((v < lo) | (v > hi)):
            raise ValueError(f"voltage outside conductance domain {self.domain}")
        return self._eval(v)[()]


def dissipation_resistive(g: StaticConductance, v: float) -> float:
    """Instantaneous power ``g(v) v**2``."""
    return float(g(v) * v * v)


def cocontent_resistive(g: StaticConductance, v_bar, n_nodes: int = 129):
    """``int_0^v_bar g(v) v dv`` by composite Simpson; vectorised over ``v_bar``."""
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError("Simpson needs an odd node count >= 3")
    v_bar = np.asarray(v_bar, dtype=float)
    s = np.linspace(0.0, 1.0, n_nodes)
    v = v_bar[..., None] * s
    out = simpson(g(v) * v, x=s, axis=-1) * v_bar
    return out[()] if out.ndim == 0 else out


def grad_resistive_weighted(g: StaticConductance, v: float, check: bool = True) -> float:
    """Gradient of ``v**2/2`` under the metric ``1/g(v)``, i.e. the current ``g(v) v``.

    With ``check`` the identity ``<i, v>_{1/g} = v**2`` is confirmed to 1e-12.
    """
    gv = float(g(v))
    i = gv * v
    if check:
        lhs = i * v / gv
        rhs = v * v
        if abs(lhs - rhs) > 1e-12 * max(abs(rhs), np.finfo(float).tiny):
            raise ConsistencyError(f"<i,v>_(1/g) = {lhs!r} but v^2 = {rhs!r}")
    return i


# --- memristive elements ----------------------------------------------------

def port_conductance(
    e: MemristiveElement,
    u: Trajectory,
    x0: ElementState | None = None,
    presynaptic: Trajectory | None = None,
) -> Trajectory:
    """Memconductance as an operator on the port voltage ``u = v - battery``."""
    return memconductance(e, u + e.battery, x0, presynaptic)


def dissipation_memristive(i: Trajectory, v: Trajectory, g: Trajectory) -> tuple[float, float]:
    """Return ``(<i, v>_{1/g}, <v, v>)``; equal whenever ``i = g v``."""
    return inner_weighted(i, v, MetricWeight.reciprocal_of(g)), inner(v, v)


def grad_memristive(
    e: MemristiveElement,
    u: Trajectory,
    x0: ElementState | None = None,
    presynaptic: Trajectory | None = None,
    g: Trajectory | None = None,
) -> Trajectory:
    """Riemannian gradient of ``<u, u>/2`` under the metric ``1/g(u)``.

    Equals the element current ``g(u)(t) u(t)``, with ``g`` floored at the
    metric floor so that the same ``g`` defines the metric. A precomputed
    port conductance may be passed as ``g``.
    """
    if g is None:
        g = port_conductance(e, u, x0, presynaptic)
    return Trajectory(u.grid, np.maximum(g.samples, EPSILON_FLOOR) * u.samples)


def gradient_identity_checks(
    e: MemristiveElement,
    u: Trajectory,
    directions: Sequence[Trajectory],
    x0: ElementState | None = None,
    tol: float = 1e-10,
) -> list[IdentityCheck]:
    """Check ``<grad, w>_{1/g} = <u, w>`` for each direction, scaled by ``|u||w|``."""
    g = port_conductance(e, u, x0)
    grad = grad_memristive(e, u, g=g)
    metric = MetricWeight.reciprocal_of(g)
    nu = math.sqrt(inner(u, u))
    checks = []
    for k, w in enumerate(directions):
        scale = nu * math.sqrt(inner(w, w))
        checks.append(
            IdentityCheck(f"gradient_identity[{e.name}][{k}]", inner_weighted(grad, w, metric), inner(u, w), tol, scale)
        )
    return checks


def _simpson_nodes(n: int) -> np.ndarray:
    if n < 3 or n % 2 == 0:
        raise ValueError("n_path_nodes must be odd and >= 3")
    return np.linspace(0.0, 1.0, n)


def cocontent_path(
    e: MemristiveElement,
    v_bar: Trajectory,
    n_path_nodes: int = 33,
    waypoints: Sequence[Trajectory] | None = None,
) -> float:
    """Co-content of ``e`` at the port voltage ``v_bar`` as a path integral.

    Integrates ``<i_s, d/ds u_s>_{1/g_s}`` over ``s`` in [0, 1] by Simpson's
    rule, where ``u_s`` runs piecewise linearly from zero through the optional
    ``waypoints`` to ``v_bar``. At every node the element is re-evaluated on
    ``u_s`` from the steady state at ``u_s(t_start)``. The exact value is
    ``<v_bar, v_bar>/2`` whatever the path.
    """
    s_nodes = _simpson_nodes(n_path_nodes)
    points = [Trajectory.constant(v_bar.grid, 0.0), *(waypoints or ()), v_bar]
    total = 0.0
    for start, end in zip(points[:-1], points[1:]):
        if start.grid != v_bar.grid or end.grid != v_bar.grid:
            raise ValueError("waypoints must share the grid of v_bar")
        du = end - start
        integrand = np.empty(len(s_nodes))
        for k, s in enumerate(s_nodes):
            u_s = start + s * du
            g_s = port_conductance(e, u_s)
            i_s = grad_memristive(e, u_s, g=g_s)
            integrand[k] = inner_weighted(i_s, du, MetricWeight.reciprocal_of(g_s))
        total += float(simpson(integrand, x=s_nodes))
    return total


# --- networks -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NetworkMetric:
    """Per-sample ``n x n`` conductance matrices, shape ``(n_samples, n, n)``."""

    grid: TimeGrid
    matrices: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrices, dtype=float)
        if m.ndim != 3 or m.shape[0] != self.grid.n_samples or m.shape[1] != m.shape[2]:
            raise ValueError(f"bad metric shape {m.shape} for {self.grid}")
        if not np.all(np.isfinite(m)):
            raise ValueError("metric entries must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "matrices", m)

    @property
    def size(self) -> int:
        return self.matrices.shape[1]

    @classmethod
    def diagonal(cls, conductances: Sequence[Trajectory]) -> "NetworkMetric":
        grid = conductances[0].grid
        diag = np.stack([g.samples for g in conductances], axis=1)
        return cls(grid, diag[:, :, None] * np.eye(len(conductances)))


def network_apply(G: NetworkMetric, V: VectorTrajectory) -> VectorTrajectory:
    """``I(t) = G(t) V(t)`` sample by sample."""
    if G.grid != V.grid:
        raise ValueError("metric and voltages must share a grid")
    if G.size != V.n_channels:
        raise ValueError(f"metric is {G.size}x{G.size} but voltage has {V.n_channels} channels")
    return VectorTrajectory(V.grid, np.einsum("tij,jt->it", G.matrices, V.samples))


def inner_vector(A: VectorTrajectory, B: VectorTrajectory, matrices: np.ndarray | None = None) -> float:
    """``int A(t)^T M(t) B(t) dt`` (``M = I`` when ``matrices`` is None)."""
    if A.grid != B.grid or A.n_channels != B.n_channels:
        raise ValueError("vector trajectories must share grid and channel count")
    if matrices is None:
        pointwise = np.einsum("it,it->t", A.samples, B.samples)
    else:
        pointwise = np.einsum("it,tij,jt->t", A.samples, matrices, B.samples)
    return float(A.grid.trapezoid_weights() @ pointwise)


def network_power(G: NetworkMetric, V: VectorTrajectory) -> float:
    """Dissipated energy ``<G V, V>``; non-negative for a passive network."""
    return inner_vector(network_apply(G, V), V)


def network_gradient_checks(
    G: NetworkMetric,
    V: VectorTrajectory,
    directions: Sequence[VectorTrajectory],
    tol: float = 1e-10,
) -> list[IdentityCheck]:
    """MIMO gradient identity ``<G V, W>_{G^-1} = <V, W>`` for each direction."""
    I = network_apply(G, V)
    Ginv = np.linalg.inv(G.matrices)
    nv = math.sqrt(inner_vector(V, V))
    return [
        IdentityCheck(
            f"network_gradient_identity[{k}]",
            inner_vector(I, W, Ginv),
            inner_vector(V, W),
            tol,
            nv * math.sqrt(inner_vector(W, W)),
        )
        for k, W in enumerate(directions)
    ]


def jacobi_eigenvalues(A: np.ndarray, max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted ascending."""
    a = np.array(A, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > 16:
        raise ValueError("cyclic Jacobi is limited to n <= 16")
    a = 0.5 * (a + a.T)
    scale = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= 1e-17 * scale or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))


@dataclass(frozen=True)
class NetworkMetricReport:
    symmetry_defect: np.ndarray
    min_eigenvalue: np.ndarray
    classification: tuple[str, ...]  # per sample: "pd", "psd", "indefinite", "asymmetric"
    epsilon: float

    @property
    def violations(self) -> np.ndarray:
        """Indices of samples that are not symmetric positive definite above epsilon."""
        return np.array([k for k, c in enumerate(self.classification) if c != "pd"], dtype=int)

    @property
    def certified(self) -> bool:
        return len(self.violations) == 0

    @property
    def psd_not_pd(self) -> bool:
        """Symmetric and semidefinite everywhere, but singular (or below epsilon) somewhere."""
        return not self.certified and all(c in ("pd", "psd") for c in self.classification)


def network_metric_check(G: NetworkMetric, epsilon: float = EPSILON_FLOOR) -> NetworkMetricReport:
    """Symmetry defect and minimum eigenvalue of every sample of ``G``."""
    mats = G.matrices
    defect = np.max(np.abs(mats - np.swapaxes(mats, 1, 2)), axis=(1, 2))
    mins = np.empty(len(mats))
    labels = []
    for k, m in enumerate(mats):
        size = max(1.0, float(np.max(np.abs(m))))
        mins[k] = jacobi_eigenvalues(m)[0]
        if defect[k] > 1e-12 * size:
            labels.append("asymmetric")
        elif mins[k] >= epsilon:
            labels.append("pd")
        elif mins[k] >= -1e-12 * size:
            labels.append("psd")
        else:
            labels.append("indefinite")
    return NetworkMetricReport(defect, mins, tuple(labels), epsilon)


# --- Hopfield networks --------------------------------------------------------

@dataclass(frozen=True)
class Activation:
    """Unit nonlinearity ``amplitude * tanh(gain * v)`` or the identity."""

    kind: str = "tanh"
    gain: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("tanh", "identity"):
            raise ValueError(f"unknown activation {self.kind!r}")

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "identity":
            return v.copy()
        return self.amplitude * np.tanh(self.gain * v)

    def derivative(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "identity":
            return np.ones_like(v)
        th = np.tanh(self.gain * v)
        return self.amplitude * self.gain * (1.0 - th * th)


@dataclass(frozen=True, eq=False)
class HopfieldNet:
    """``C dV/dt = -W phi(V) + I`` with diagonal capacitance and symmetric ``W``."""

    C: np.ndarray
    W: np.ndarray
    phi: Activation = Activation()

    def __post_init__(self):
        C = np.array(self.C, dtype=float).reshape(-1)
        W = np.array(self.W, dtype=float)
        if W.shape != (C.size, C.size):
            raise ValueError("W must be n x n for n capacitances")
        if np.any(C <= 0):
            raise ValueError("capacitances must be positive")
        if not np.allclose(W, W.T, rtol=0, atol=1e-12 * max(1.0, np.abs(W).max())):
            raise ValueError("W must be symmetric")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "W", W)

    @property
    def n(self) -> int:
        return self.C.size

    def metric(self, V) -> np.ndarray:
        """Diagonal of the metric ``diag(phi'(V))``."""
        d = self.phi.derivative(V)
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise ValueError("activation is not strictly increasing at V; metric undefined")
        return d

    def energy(self, V) -> float:
        p = self.phi(V)
        return 0.5 * float(p @ self.W @ p)

    def potential(self, V, I) -> float:
        return self.energy(V) - float(np.asarray(I) @ self.phi(V))


def hopfield_gradient(net: HopfieldNet, V) -> np.ndarray:
    """Gradient of ``phi(V)^T W phi(V) / 2`` in the metric ``diag(phi'(V))``: ``W phi(V)``."""
    V = np.asarray(V, dtype=float)
    net.metric(V)
    return net.W @ net.phi(V)


def hopfield_identity_check(net: HopfieldNet, V, w, tol: float = 1e-12) -> IdentityCheck:
    """``<grad, w>_G`` against the directional derivative ``phi^T W diag(phi') w``."""
    V = np.asarray(V, dtype=float)
    w = np.asarray(w, dtype=float)
    d = net.metric(V)
    grad = hopfield_gradient(net, V)
    lhs = float(grad @ (d * w))
    rhs = float(net.phi(V) @ net.W @ (d * w))
    scale = float(np.linalg.norm(grad) * np.linalg.norm(d * w))
    return IdentityCheck("hopfield_gradient_identity", lhs, rhs, tol, scale)


__all__ = [
    "ConsistencyError",
    "IdentityCheck",
    "StaticConductance",
    "dissipation_resistive",
    "cocontent_resistive",
    "grad_resistive_weighted",
    "port_conductance",
    "dissipation_memristive",
    "grad_memristive",
    "gradient_identity_checks",
    "cocontent_path",
    "NetworkMetric",
    "NetworkMetricReport",
    "network_apply",
    "network_power",
    "network_gradient_checks",
    "inner_vector",
    "jacobi_eigenvalues",
    "network_metric_check",
    "Activation",
    "HopfieldNet",
    "hopfield_gradient",
    "hopfield_identity_check",
]

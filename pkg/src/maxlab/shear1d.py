"""1D damped shear waves.

Unknowns are the shear velocity ``u`` and shear stress ``tau`` of

    u_t - tau_y = f
    tau_t - G u_y = -xi tau

Characteristic form uses ``w+ = tau + sqrt(G) u`` and ``w- = tau - sqrt(G) u``::

    w+_t - sqrt(G) w+_y = +sqrt(G) f - xi/2 (w+ + w-)
    w-_t + sqrt(G) w-_y = -sqrt(G) f - xi/2 (w+ + w-)

so ``w+`` travels left at speed sqrt(G) and ``w-`` travels right. Every
upwind direction and boundary reconstruction below follows from that one
convention.

The scheme is Lie splitting: upwind transport of each Riemann variable, then
exact integration of the relaxation (``tau *= exp(-xi dt)``) together with a
midpoint-in-time forcing kick on ``u``. At CFL = 1 the transport is an exact
cell shift and the relaxation is exact, so the discrete energy

    E = 1/2 * sum(tau**2 + G u**2) * dy      ( = 1/4 * sum(w+**2 + w-**2) * dy )

obeys its balance law to round-off. ``energy_audit`` and ``prop1_audit``
evaluate those balances step by step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ConfigurationError, MaterialParams, StabilityError


class SingularBoundaryError(ValueError):
    """Boundary relation does not determine the incoming characteristic."""


@dataclass
class ShearState1D:
    y_min: float
    y_max: float
    u: np.ndarray
    tau: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.tau = np.asarray(self.tau, dtype=float)
        if not self.y_max > self.y_min:
            raise ValueError("need y_max > y_min")
        if self.u.ndim != 1 or self.u.shape != self.tau.shape:
            raise ValueError("u and tau must be 1D arrays of equal length")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.tau))):
            raise ValueError("u and tau must be finite")

    @property
    def N(self) -> int:
        return self.u.size

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.N

    @property
    def centers(self) -> np.ndarray:
        return self.y_min + (np.arange(self.N) + 0.5) * self.dy

    @classmethod
    def from_functions(cls, y_min, y_max, N, u0, tau0, t=0.0):
        y = y_min + (np.arange(N) + 0.5) * (y_max - y_min) / N
        u = np.broadcast_to(np.asarray(u0(y), dtype=float), y.shape).copy()
        tau = np.broadcast_to(np.asarray(tau0(y), dtype=float), y.shape).copy()
        return cls(y_min, y_max, u, tau, t)


BC_KINDS = ("dissipative", "dirichlet_velocity", "periodic")


@dataclass(frozen=True)
class BoundarySpec:
    """Linear boundary relation ``c_u * u + c_tau * tau = g(t)`` on one side.

    ``g`` is a constant or a callable of time. ``dirichlet_velocity`` is the
    degenerate ``c_tau = 0`` relation needed by the impulsively started wall.
    """

    side: str
    kind: str = "dissipative"
    c_u: float = 1.0
    c_tau: float = 0.0
    g: object = 0.0

    def __post_init__(self):
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")
        if self.kind not in BC_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "dirichlet_velocity" and (self.c_u != 1.0 or self.c_tau != 0.0):
            raise ValueError("dirichlet_velocity requires c_u = 1, c_tau = 0")

    @classmethod
    def periodic(cls, side):
        return cls(side, "periodic", 0.0, 0.0, 0.0)

    @classmethod
    def dirichlet_velocity(cls, side, g=0.0):
        return cls(side, "dirichlet_velocity", 1.0, 0.0, g)

    @classmethod
    def dissipative(cls, side, c_u, c_tau, g=0.0):
        return cls(side, "dissipative", float(c_u), float(c_tau), g)

    def data(self, t: float) -> float:
        return float(self.g(t)) if callable(self.g) else float(self.g)

    def validate(self, G: float) -> None:
        """Sign conditions for a maximally dissipative relation.

        Left needs ``c_u c_tau < 0``, right ``c_u c_tau > 0``. Under these the
        incoming characteristic is always recoverable; the explicit
        non-characteristic check covers hand-built specs.
        """
        if self.kind != "dissipative":
            return
        prod = self.c_u * self.c_tau
        if self.side == "left" and not prod < 0:
            raise ValueError("left dissipative boundary needs c_u * c_tau < 0")
        if self.side == "right" and not prod > 0:
            raise ValueError("right dissipative boundary needs c_u * c_tau > 0")
        _incoming_coefficients(self, math.sqrt(G))


def _incoming_coefficients(bc: BoundarySpec, s: float):
    """Coefficients (of outgoing, of incoming) in ``c_u u + c_tau tau``."""
    coef_p = 0.5 * bc.c_tau + 0.5 * bc.c_u / s
    coef_m = 0.5 * bc.c_tau - 0.5 * bc.c_u / s
    scale = abs(bc.c_tau) + abs(bc.c_u) / s
    if bc.side == "left":
        out, inc = coef_p, coef_m
    else:
        out, inc = coef_m, coef_p
    if abs(inc) <= 1e-14 * scale:
        raise SingularBoundaryError(
            f"{bc.side} boundary (c_u={bc.c_u}, c_tau={bc.c_tau}) only constrains "
            "the outgoing characteristic"
        )
    return out, inc


def incoming_value(bc: BoundarySpec, w_out: float, g: float, G: float) -> float:
    out, inc = _incoming_coefficients(bc, math.sqrt(G))
    return (g - out * w_out) / inc


def to_riemann(state: ShearState1D, G: float):
    s = math.sqrt(G)
    return state.tau + s * state.u, state.tau - s * state.u


def from_riemann(w_plus, w_minus, G: float):
    """Inverse of ``to_riemann``: returns ``(u, tau)``."""
    s = math.sqrt(G)
    return (w_plus - w_minus) / (2.0 * s), 0.5 * (w_plus + w_minus)


@dataclass(frozen=True)
class BoundaryTrace:
    """Characteristic pair seen by one boundary during a step: (outgoing, incoming)."""

    w_out: float
    w_in: float
    g: float


def advect_step(w_plus, w_minus, G, dt, dy, bc_left, bc_right, g_left=0.0, g_right=0.0):
    """Upwind transport of both Riemann variables over one step.

    Returns ``(w_plus, w_minus, traces)`` where ``traces`` maps side to the
    :class:`BoundaryTrace` used (``None`` for periodic sides).
    """
    s = math.sqrt(G)
    nu = s * dt / dy
    if nu > 1.0 + 1e-12:
        raise StabilityError(f"CFL number {nu:.6g} exceeds 1")
    periodic = bc_left.kind == "periodic"
    if periodic != (bc_right.kind == "periodic"):
        raise ConfigurationError("periodic boundaries must be used on both sides")

    wp = np.asarray(w_plus, dtype=float)
    wm = np.asarray(w_minus, dtype=float)
    traces = {"left": None, "right": None}
    if periodic:
        ghost_p = wp[0]
        ghost_m = wm[-1]
    else:
        # w+ leaves through the left wall, w- through the right one
        ghost_m = incoming_value(bc_left, wp[0], g_left, G)
        ghost_p = incoming_value(bc_right, wm[-1], g_right, G)
        traces["left"] = BoundaryTrace(float(wp[0]), float(ghost_m), float(g_left))
        traces["right"] = BoundaryTrace(float(wm[-1]), float(ghost_p), float(g_right))

    right_nbr = np.append(wp[1:], ghost_p)
    left_nbr = np.insert(wm[:-1], 0, ghost_m)
    if abs(nu - 1.0) <= 1e-12:
        return right_nbr, left_nbr, traces
    return wp + nu * (right_nbr - wp), wm - nu * (wm - left_nbr), traces


def source_step(w_plus, w_minus, xi, dt, G=None, f=None):
    """Exact relaxation ``tau -> tau exp(-xi dt)`` with ``u`` untouched.

    With ``f`` (array of forcing values at the step midpoint) the velocity
    also receives the kick ``u += dt f``; ``G`` is then required.
    """
    if xi < 0 or dt <= 0:
        raise ValueError("need xi >= 0 and dt > 0")
    wp = np.asarray(w_plus, dtype=float)
    wm = np.asarray(w_minus, dtype=float)
    tau = 0.5 * (wp + wm)
    # -(1 - e^{-xi dt}) tau, written to stay exact when xi dt is tiny
    dtau = np.expm1(-xi * dt) * tau
    wp = wp + dtau
    wm = wm + dtau
    if f is not None:
        kick = math.sqrt(G) * dt * np.asarray(f, dtype=float)
        wp = wp + kick
        wm = wm - kick
    return wp, wm


def shear_energy(u, tau, G, dy):
    """1/2 * integral(tau^2 + G u^2) by the midpoint rule (works on stacks too)."""
    return 0.5 * dy * np.sum(tau**2 + G * u**2, axis=-1)


@dataclass
class StepRecord:
    t0: float
    dt: float
    traces: dict
    f_mid: Optional[np.ndarray] = None
    numerical_dissipation: float = 0.0


@dataclass
class EnergyLedger:
    """Rates (per unit time, averaged over one step) of the energy balance.

    ``(energy - energy_prev)/dt + boundary_out + dissipation_rate
    + numerical_dissipation = forcing_power + boundary_in + residual``.

    ``numerical_dissipation`` is the loss of the upwind average on steps with
    CFL number below one (zero for exact shifts).
    """

    t: float
    dt: float
    energy_prev: float
    energy: float
    dissipation_rate: float
    boundary_out: float
    boundary_in: float
    forcing_power: float
    residual: float
    numerical_dissipation: float = 0.0

    @property
    def relative_residual(self) -> float:
        scale = max(self.energy_prev, self.energy, np.finfo(float).tiny)
        return abs(self.residual) / scale


def _boundary_terms(bc: BoundarySpec, trace: Optional[BoundaryTrace], G: float):
    """(outflow, inflow) energy rates at one wall, both reported as in the balance."""
    if bc.kind == "periodic" or trace is None:
        return 0.0, 0.0
    s = math.sqrt(G)
    if bc.side == "left":
        wp, wm = trace.w_out, trace.w_in
    else:
        wm, wp = trace.w_out, trace.w_in
    u = (wp - wm) / (2.0 * s)
    tau = 0.5 * (wp + wm)
    if bc.kind == "dirichlet_velocity":
        # wall power is signed; no dissipative split exists for c_tau = 0
        power = -G * tau * u if bc.side == "left" else G * tau * u
        return 0.0, power
    weight = G / (4.0 * abs(bc.c_u * bc.c_tau))
    z_tilde = bc.c_u * u - bc.c_tau * tau
    z = bc.c_u * u + bc.c_tau * tau
    return weight * z_tilde**2, weight * z**2


def energy_audit(prev: ShearState1D, nxt: ShearState1D, step: StepRecord, params: MaterialParams,
                 bc_left: BoundarySpec, bc_right: BoundarySpec) -> EnergyLedger:
    """Terms of the discrete energy balance between two consecutive states."""
    G, xi, dt, dy = params.G, params.xi, step.dt, prev.dy
    e0 = float(shear_energy(prev.u, prev.tau, G, dy))
    e1 = float(shear_energy(nxt.u, nxt.tau, G, dy))
    # time integral of xi*int(tau^2) over the exact relaxation sub-step
    diss = 0.5 * dy * float(np.sum(nxt.tau**2)) * math.expm1(2.0 * xi * dt) / dt
    forcing = 0.0
    if step.f_mid is not None:
        u_star = nxt.u - dt * step.f_mid
        forcing = G * dy * float(np.sum(step.f_mid * 0.5 * (u_star + nxt.u)))
    out_l, in_l = _boundary_terms(bc_left, step.traces.get("left"), G)
    out_r, in_r = _boundary_terms(bc_right, step.traces.get("right"), G)
    b_out, b_in = out_l + out_r, in_l + in_r
    num = step.numerical_dissipation
    residual = (e1 - e0) / dt + b_out + diss + num - forcing - b_in
    return EnergyLedger(nxt.t, dt, e0, e1, diss, b_out, b_in, forcing, residual, num)


def upwind_dissipation(before, after, nu: float, dy: float, dt: float) -> float:
    """Energy rate removed by an upwind step of CFL number ``nu`` (exact identity).

    For ``w' = w + nu (n - w)`` one has ``sum w'^2 = (1-nu) sum w^2 + nu sum n^2
    - nu (1-nu) sum (n - w)^2``; with ``n - w = (w' - w)/nu`` and the energy
    weight 1/4 this gives ``dy (1-nu) / (4 nu dt) sum (w' - w)^2``.
    """
    if nu >= 1.0 - 1e-12:
        return 0.0
    jump = sum(float(np.sum((a - b) ** 2)) for a, b in zip(after, before))
    return 0.25 * dy * (1.0 - nu) / (nu * dt) * jump


@dataclass
class ShearRun:
    """Trajectory of one run. ``u``/``tau`` rows are the recorded states."""

    params: MaterialParams
    y_min: float
    y_max: float
    dt: float
    bc_left: BoundarySpec
    bc_right: BoundarySpec
    times: np.ndarray
    u: np.ndarray
    tau: np.ndarray
    record_every: int
    steps: list = field(default_factory=list)
    ledgers: list = field(default_factory=list)

    @property
    def dy(self) -> float:
        return (self.y_max - self.y_min) / self.u.shape[1]

    def state(self, k: int) -> ShearState1D:
        return ShearState1D(self.y_min, self.y_max, self.u[k].copy(), self.tau[k].copy(), float(self.times[k]))

    @property
    def final(self) -> ShearState1D:
        return self.state(-1)


def _step_count(T: float, dt: float) -> int:
    n = T / dt
    if abs(n - round(n)) <= 1e-9 * max(1.0, n):
        return max(1, int(round(n)))
    return int(math.ceil(n))


def run_shear(initial: ShearState1D, params: MaterialParams, bc_left: BoundarySpec,
              bc_right: BoundarySpec, T: float, cfl: float = 1.0,
              forcing: Optional[Callable] = None, record_every: int = 1,
              record_times: Optional[Sequence[float]] = None) -> ShearRun:
    """Advance ``initial`` to time ``T`` and return the trajectory with per-step ledgers.

    States are kept every ``record_every`` steps (first and last always), or
    at the step ends closest to ``record_times`` when those are given.
    ``forcing(t, y)`` is sampled at the step midpoint.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if not 0 < cfl <= 1:
        raise StabilityError(f"cfl must lie in (0, 1], got {cfl}")
    G, xi = params.G, params.xi
    bc_left.validate(G)
    bc_right.validate(G)
    dy = initial.dy
    s = math.sqrt(G)
    dt = cfl * dy / s
    n_steps = _step_count(T, dt)
    y = initial.centers

    if record_times is not None:
        step_times = initial.t + dt * np.arange(1, n_steps + 1)
        step_times[-1] = initial.t + T
        keep = {int(np.argmin(np.abs(step_times - tr))) + 1 for tr in record_times if tr > initial.t}
    else:
        keep = {k for k in range(1, n_steps + 1) if k % record_every == 0}
    keep.add(n_steps)

    times, us, taus = [initial.t], [initial.u.copy()], [initial.tau.copy()]
    steps, ledgers = [], []
    wp, wm = to_riemann(initial, G)
    prev = ShearState1D(initial.y_min, initial.y_max, initial.u.copy(), initial.tau.copy(), initial.t)
    t = initial.t
    for k in range(1, n_steps + 1):
        h = dt if k < n_steps else (initial.t + T) - t
        if h <= 0:
            break
        t_mid = t + 0.5 * h
        wp0, wm0 = wp, wm
        wp, wm, traces = advect_step(wp, wm, G, h, dy, bc_left, bc_right,
                                     bc_left.data(t_mid), bc_right.data(t_mid))
        num = upwind_dissipation((wp, wm), (wp0, wm0), s * h / dy, dy, h)
        f_mid = None
        if forcing is not None:
            f_mid = np.broadcast_to(np.asarray(forcing(t_mid, y), dtype=float), y.shape).copy()
        wp, wm = source_step(wp, wm, xi, h, G, f_mid)
        t = initial.t + T if k == n_steps else t + h
        if not (np.all(np.isfinite(wp)) and np.all(np.isfinite(wm))):
            raise FloatingPointError(f"non-finite values after step {k} (t={t:.6g})")
        u, tau = from_riemann(wp, wm, G)
        nxt = ShearState1D(initial.y_min, initial.y_max, u, tau, t)
        step = StepRecord(t - h, h, traces, f_mid, num)
        steps.append(step)
        ledgers.append(energy_audit(prev, nxt, step, params, bc_left, bc_right))
        if k in keep:
            times.append(t)
            us.append(u)
            taus.append(tau)
        prev = nxt

    every = record_every if record_times is None else 0
    return ShearRun(params, initial.y_min, initial.y_max, dt, bc_left, bc_right,
                    np.array(times), np.array(us), np.array(taus), every, steps, ledgers)


def l2_difference(run1: ShearRun, run2: ShearRun) -> np.ndarray:
    """Spatial L2 norm of (u1 - u2, tau1 - tau2) at every recorded time."""
    _check_compatible(run1, run2)
    du = run1.u - run2.u
    dtau = run1.tau - run2.tau
    return np.sqrt(run1.dy * np.sum(du**2 + dtau**2, axis=1))


def _check_compatible(run1: ShearRun, run2: ShearRun) -> None:
    if run1.u.shape != run2.u.shape or run1.y_min != run2.y_min or run1.y_max != run2.y_max:
        raise ConfigurationError("runs live on different grids")
    if run1.dt != run2.dt or not np.array_equal(run1.times, run2.times):
        raise ConfigurationError("runs use different time steps or output times")
    if run1.params.G != run2.params.G:
        raise ConfigurationError("runs use different shear moduli")
    if (run1.bc_left, run1.bc_right) != (run2.bc_left, run2.bc_right):
        raise ConfigurationError("runs use different boundary conditions")
    if not (np.array_equal(run1.u[0], run2.u[0]) and np.array_equal(run1.tau[0], run2.tau[0])):
        raise ConfigurationError("runs start from different initial data")


@dataclass
class Prop1Step:
    t: float
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs


def _exp_integral(k: float, dt: float) -> float:
    """integral_0^dt exp(-k s) ds."""
    return dt if k == 0 else -math.expm1(-k * dt) / k


def prop1_audit(run1: ShearRun, run2: ShearRun) -> list[Prop1Step]:
    """Per-step check of the continuous-dependence inequality for xi1 >= xi2.

    With ``D = 1/2 int((tau1-tau2)^2 + G (u1-u2)^2)`` each step reports

        lhs = dD/dt + boundary outflow of the difference + (xi1+xi2)/2 int (tau1-tau2)^2
        rhs = (xi1-xi2)/2 int tau2^2

    where the time integrals over the relaxation sub-step are taken exactly
    (both stresses decay exponentially there). ``lhs <= rhs`` must hold.
    """
    _check_compatible(run1, run2)
    xi1, xi2 = run1.params.xi, run2.params.xi
    if xi1 < xi2:
        raise ConfigurationError("prop1_audit expects xi1 >= xi2")
    if run1.record_every != 1 or run2.record_every != 1:
        raise ConfigurationError("prop1_audit needs every step recorded (record_every=1)")
    G, dy = run1.params.G, run1.dy
    s = math.sqrt(G)
    du = run1.u - run2.u
    dtau = run1.tau - run2.tau
    D = 0.5 * dy * np.sum(dtau**2 + G * du**2, axis=1)
    report = []
    for n, (st1, st2) in enumerate(zip(run1.steps, run2.steps)):
        dt = st1.dt
        a = run1.tau[n + 1] * math.exp(xi1 * dt)
        b = run2.tau[n + 1] * math.exp(xi2 * dt)
        int_diff = dy * float(np.sum(a * a * _exp_integral(2 * xi1, dt)
                                     - 2 * a * b * _exp_integral(xi1 + xi2, dt)
                                     + b * b * _exp_integral(2 * xi2, dt)))
        int_ref = dy * float(np.sum(b * b)) * _exp_integral(2 * xi2, dt)
        outflow = 0.0
        for side in ("left", "right"):
            t1, t2 = st1.traces.get(side), st2.traces.get(side)
            if t1 is None:
                continue
            d_out, d_in = t1.w_out - t2.w_out, t1.w_in - t2.w_in
            outflow += 0.25 * s * (d_out**2 - d_in**2)
        lhs = (D[n + 1] - D[n]) / dt + outflow + 0.5 * (xi1 + xi2) * int_diff / dt
        rhs = 0.5 * (xi1 - xi2) * int_ref / dt
        report.append(Prop1Step(float(run1.times[n + 1]), float(lhs), float(rhs)))
    return report


def locate_front(state: ShearState1D):
    """Steepest jump in ``u``: returns (interface position, jump magnitude)."""
    jumps = np.abs(np.diff(state.u))
    k = int(np.argmax(jumps))
    return state.y_min + (k + 1) * state.dy, float(jumps[k])

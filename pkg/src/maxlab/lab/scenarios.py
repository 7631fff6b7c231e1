"""Scenario runners. Each returns result rows plus a JSON-ready report.

Sweep points are independent runs and are farmed out to a thread pool; results
are always collected in config order, so worker count never changes output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .. import entropy as ent
from ..core import MaterialParams
from ..multid import (HyperbolicityLoss, PrimitiveStateMD, density_bump_state, fv_step, max_wavespeed,
                      piola_residual, primitive_to_conserved, stable_dt, time_levels, totals)
from ..shear1d import ShearRun, ShearState1D, l2_difference, locate_front, prop1_audit, run_shear
from .config import ScenarioConfig
from .fitting import DataError, fit_rate

REPORT_SCHEMA_VERSION = 1
HORIZON_FRACTION = 0.25


@dataclass
class Row:
    scenario: str
    xi_1: float
    xi_2: Optional[float]
    t: float
    l2_diff: Optional[float] = None
    rel_entropy: Optional[float] = None
    energy: Optional[float] = None
    dissipation: Optional[float] = None
    piola_residual: Optional[float] = None
    constitutive_residual: Optional[float] = None


@dataclass
class ScenarioResult:
    rows: list
    report: dict
    status: int = 0
    extra: dict = field(default_factory=dict)


def _pool_map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _output_indices(times: np.ndarray, T: float, outputs: int) -> list:
    """Indices of the recorded times closest to ``outputs`` equal intervals of ``[t0, t0+T]``."""
    t0 = float(times[0])
    targets = t0 + np.linspace(0.0, T, outputs + 1)
    return sorted({int(np.argmin(np.abs(times - tt))) for tt in targets})


def _wrap_errors(fn):
    def run(x):
        try:
            return fn(x)
        except (FloatingPointError, HyperbolicityLoss, ArithmeticError) as exc:
            return exc
    return run


# -- 1D -------------------------------------------------------------------------

def shear_initial(cfg: ScenarioConfig) -> ShearState1D:
    (lo, hi), = cfg.domain
    ini = cfg.initial
    zero = lambda y: np.zeros_like(y)  # noqa: E731
    if ini["kind"] == "rest":
        u0 = zero
    else:
        amp, mode = ini["amplitude"], ini["mode"]
        u0 = lambda y: amp * np.sin(2 * np.pi * mode * (y - lo) / (hi - lo))  # noqa: E731
    return ShearState1D.from_functions(lo, hi, cfg.grid[0], u0, zero)


def _shear_run(cfg: ScenarioConfig, xi: float, every_step: bool) -> ShearRun:
    initial = shear_initial(cfg)
    params = cfg.params.with_xi(xi)
    left, right = cfg.bc
    if every_step:
        return run_shear(initial, params, left, right, cfg.T, cfl=cfg.cfl, record_every=1)
    times = initial.t + np.linspace(0.0, cfg.T, cfg.outputs + 1)
    return run_shear(initial, params, left, right, cfg.T, cfl=cfg.cfl, record_times=times)


def _cumulative_dissipation(run: ShearRun) -> np.ndarray:
    """Dissipated energy up to each recorded time."""
    ends = np.array([run.times[0]] + [led.t for led in run.ledgers])
    cum = np.concatenate([[0.0], np.cumsum([led.dissipation_rate * led.dt for led in run.ledgers])])
    idx = np.searchsorted(ends, run.times)
    return cum[np.minimum(idx, len(cum) - 1)]


def _energies(run: ShearRun) -> np.ndarray:
    return 0.5 * run.dy * np.sum(run.tau**2 + run.params.G * run.u**2, axis=1)


def _shear_abort(cfg, xi, exc) -> ScenarioResult:
    return ScenarioResult([], {"scenario": cfg.scenario, "error": f"run with xi={xi!r} aborted: {exc}"}, status=3)


def shear_xi_sweep(cfg: ScenarioConfig) -> ScenarioResult:
    xi_ref = cfg.xi_list[-1]
    runs = _pool_map(_wrap_errors(lambda xi: _shear_run(cfg, xi, every_step=True)), cfg.xi_list, cfg.threads)
    for xi, r in zip(cfg.xi_list, runs):
        if isinstance(r, Exception):
            return _shear_abort(cfg, xi, r)
    ref = runs[-1]
    idx = _output_indices(ref.times, cfg.T, cfg.outputs)
    rows, points, pairs = [], [], []
    for xi, run in zip(cfg.xi_list, runs):
        diff = l2_difference(run, ref)
        rel = 0.5 * run.dy * np.sum((run.tau - ref.tau) ** 2 + cfg.params.G * (run.u - ref.u) ** 2, axis=1)
        energy = _energies(run)
        diss = _cumulative_dissipation(run)
        for k in idx:
            rows.append(Row(cfg.scenario, xi, xi_ref, float(run.times[k]), float(diff[k]), float(rel[k]),
                            float(energy[k]), float(diss[k])))
        error = float(np.max(diff[idx]))
        slack = max(st.slack for st in prop1_audit(run, ref)) if xi > xi_ref else 0.0
        point = {"xi_1": xi, "xi_2": xi_ref, "delta_xi": abs(xi - xi_ref), "error": error,
                 "prop1_max_slack_over_energy": slack / max(energy[0], np.finfo(float).tiny),
                 "energy_max_relative_residual": max(led.relative_residual for led in run.ledgers)}
        if xi == xi_ref:
            point["excluded_from_fit"] = True
        else:
            pairs.append((abs(xi - xi_ref), error))
        points.append(point)
    report = {"scenario": cfg.scenario, "error_norm": "sup over output times of the spatial L2 norm",
              "points": points, "n_steps": len(ref.steps), "dt": ref.dt}
    report.update(_fit_block(pairs, cfg.seed))
    return ScenarioResult(rows, report)


def _fit_block(pairs, seed) -> dict:
    try:
        return {"fit": fit_rate(pairs, seed=seed).as_dict()}
    except DataError as exc:
        return {"fit": None, "fit_error": str(exc)}


def shear_energy_audit(cfg: ScenarioConfig) -> ScenarioResult:
    runs = _pool_map(_wrap_errors(lambda xi: _shear_run(cfg, xi, every_step=False)), cfg.xi_list, cfg.threads)
    rows, points = [], []
    homogeneous = all(bc.kind == "periodic" or bc.g == 0.0 for bc in cfg.bc)
    for xi, run in zip(cfg.xi_list, runs):
        if isinstance(run, Exception):
            return _shear_abort(cfg, xi, run)
        energy = _energies(run)
        diss = _cumulative_dissipation(run)
        for k in range(len(run.times)):
            rows.append(Row(cfg.scenario, xi, None, float(run.times[k]), energy=float(energy[k]),
                            dissipation=float(diss[k])))
        e0 = max(run.ledgers[0].energy_prev, np.finfo(float).tiny)
        rises = [led.energy - led.energy_prev for led in run.ledgers]
        points.append({"xi": xi, "n_steps": len(run.ledgers),
                       "max_relative_residual": max(led.relative_residual for led in run.ledgers),
                       "max_energy_increase_over_initial": max(rises) / e0,
                       "energy_nonincreasing": bool(all(r <= 1e-14 * e0 for r in rises))})
    report = {"scenario": cfg.scenario, "homogeneous_boundary_data": homogeneous,
              "nonincreasing_expected": homogeneous, "points": points}
    return ScenarioResult(rows, report)


def stokes_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Wall started impulsively at speed ``U = g``; tracks the front and its jump."""
    runs = _pool_map(_wrap_errors(lambda xi: _shear_run(cfg, xi, every_step=False)), cfg.xi_list, cfg.threads)
    left = cfg.bc[0]
    wall_speed = left.g
    c = math.sqrt(cfg.params.G)
    rows, points, warnings = [], [], []
    for xi, run in zip(cfg.xi_list, runs):
        if isinstance(run, Exception):
            return _shear_abort(cfg, xi, run)
        energy = _energies(run)
        diss = _cumulative_dissipation(run)
        fronts = []
        dy = run.dy
        for k in range(len(run.times)):
            t = float(run.times[k])
            rows.append(Row(cfg.scenario, xi, None, t, energy=float(energy[k]), dissipation=float(diss[k])))
            if k == 0:
                continue
            expected = run.y_min + c * t
            if expected >= run.y_max - 2 * dy:
                warnings.append(f"xi={xi!r}: front leaves the domain before t={t:.6g}; report truncated")
                break
            pos, jump = locate_front(run.state(k))
            amp = abs(wall_speed) * math.exp(-0.5 * xi * t)
            fronts.append({"t": t, "front": pos, "expected_front": expected,
                           "front_error_cells": abs(pos - expected) / dy, "jump": jump,
                           "expected_jump": amp,
                           "jump_relative_error": abs(jump - amp) / amp if amp > 0 else None})
        points.append({"xi": xi, "dy": dy, "fronts": fronts})
    report = {"scenario": cfg.scenario, "wall_speed": wall_speed, "points": points, "warnings": warnings}
    return ScenarioResult(rows, report)


# -- multi-D -------------------------------------------------------------------------

def multid_initial(cfg: ScenarioConfig) -> np.ndarray:
    lower = tuple(b[0] for b in cfg.domain)
    upper = tuple(b[1] for b in cfg.domain)
    ini = cfg.initial
    state = density_bump_state(cfg.grid, amplitude=ini["amplitude"], compatible=ini["compatible"],
                               lower=lower, upper=upper)
    return primitive_to_conserved(state)


def _dx(cfg: ScenarioConfig) -> tuple:
    return tuple((hi - lo) / n for (lo, hi), n in zip(cfg.domain, cfg.grid))


@dataclass
class _March:
    xi: float
    levels: np.ndarray
    snaps: dict
    dissipation: dict
    drift: float
    piola: dict
    error: Optional[dict] = None


def _relaxation_loss_rate(U, G, xi, vol) -> float:
    return -vol * float(np.sum(ent.entropy_production(U, G, xi)))


def _march(U0, dx, cfg: ScenarioConfig, xi: float, dt: float, keep: set, outputs: set) -> _March:
    """Fixed-step run keeping the levels in ``keep``; bookkeeping at ``outputs``."""
    G = cfg.params.G
    vol = float(np.prod(dx))
    levels = time_levels(cfg.T, dt)
    d = len(dx)
    cons = slice(0, 1 + d + d * d)  # rho, rho u, rho F
    base = totals(U0, dx)[cons]
    scale = np.maximum(1.0, np.abs(base))
    U = U0.copy()
    snaps, diss, piola = {}, {}, {}
    if 0 in keep:
        snaps[0] = U.copy()
    cum, rate = 0.0, _relaxation_loss_rate(U, G, xi, vol)
    diss[0] = 0.0
    piola[0] = float(np.max(piola_residual(U, dx)))
    drift = 0.0
    for k in range(1, len(levels)):
        h = levels[k] - levels[k - 1]
        try:
            U = fv_step(U, h, dx, cfg.eos, G, xi)
        except HyperbolicityLoss as exc:
            return _March(xi, levels[:k], snaps, diss, drift, piola,
                          {"t_abort": float(levels[k]), "reason": str(exc), "hyperbolicity": exc.report.as_dict()})
        new_rate = _relaxation_loss_rate(U, G, xi, vol)
        cum += 0.5 * h * (rate + new_rate)
        rate = new_rate
        drift = max(drift, float(np.max(np.abs(totals(U, dx)[cons] - base) / scale)))
        if k in keep:
            snaps[k] = U.copy()
        if k in outputs:
            diss[k] = cum
            piola[k] = float(np.max(piola_residual(U, dx)))
    return _March(xi, levels, snaps, diss, drift, piola)


def _plan(cfg: ScenarioConfig, U0, dx):
    dt = stable_dt(U0, dx, cfg.eos, cfg.params.G)
    levels = time_levels(cfg.T, dt)
    outputs = set(_output_indices(levels, cfg.T, cfg.outputs))
    keep = set()
    for k in outputs:
        keep.update(j for j in (k - 1, k, k + 1) if 0 <= j < len(levels))
    return dt, levels, outputs, keep


def _horizon(cfg, U0) -> dict:
    speed = float(np.max(max_wavespeed(U0, cfg.eos, cfg.params.G)))
    crossing = min(hi - lo for lo, hi in cfg.domain) / speed
    frac = cfg.T / crossing
    out = {"max_initial_wavespeed": speed, "box_crossing_time": crossing, "T_over_crossing": frac,
           "default_fraction": HORIZON_FRACTION}
    if frac > HORIZON_FRACTION:
        out["warning"] = (f"T exceeds {HORIZON_FRACTION} of the box-crossing time; periodic images may "
                          "interact with the comparison")
    return out


def _uniform_spacing(levels, k) -> bool:
    if k <= 0 or k + 1 >= len(levels):
        return False
    a, b = levels[k] - levels[k - 1], levels[k + 1] - levels[k]
    return abs(a - b) <= 1e-12 * max(a, b)


def _constitutive_at(m: _March, k, dt, dx, params: MaterialParams) -> Optional[float]:
    if params.xi == 0 or not _uniform_spacing(m.levels, k):
        return None
    if not all(j in m.snaps for j in (k - 1, k, k + 1)):
        return None
    trio = [m.snaps[k - 1], m.snaps[k], m.snaps[k + 1]]
    return float(ent.constitutive_residual(trio, dt, dx, params)[0])


def multid_sweep(cfg: ScenarioConfig) -> ScenarioResult:
    U0 = multid_initial(cfg)
    dx = _dx(cfg)
    G = cfg.params.G
    vol = float(np.prod(dx))
    dt, levels, outputs, keep = _plan(cfg, U0, dx)
    marches = _pool_map(lambda xi: _march(U0, dx, cfg, xi, dt, keep, outputs), cfg.xi_list, cfg.threads)
    xi_ref = cfg.xi_list[-1]
    ref = marches[-1]
    report = {"scenario": cfg.scenario, "error_norm": "L2 at final time", "dt": dt, "n_steps": len(levels) - 1,
              "horizon": _horizon(cfg, U0), "initial": dict(cfg.initial)}
    if ref.error is not None:
        report["error"] = f"reference run (xi={xi_ref!r}) lost hyperbolicity"
        report["reference_abort"] = ref.error
        return ScenarioResult([], report, status=3)

    rows, points, pairs = [], [], []
    lo_band, hi_band, ratios = math.inf, -math.inf, []
    for xi, m in zip(cfg.xi_list, marches):
        params = cfg.params.with_xi(xi)
        point = {"xi_1": xi, "xi_2": xi_ref, "delta_xi": abs(xi - xi_ref), "conservation_drift": m.drift}
        final_err = None
        for k in sorted(outputs):
            if k not in m.snaps:
                break
            U1, U2 = m.snaps[k], ref.snaps[k]
            rep = ent.relative_entropy(U1, U2, cfg.eos, G, dx)
            if rep.l2_diff > 0:
                a, b = rep.equivalence_consts
                lo_band, hi_band = min(lo_band, a), max(hi_band, b)
                ratios.append(rep.rel_entropy / rep.l2_diff**2)
            rows.append(Row(cfg.scenario, xi, xi_ref, float(levels[k]), rep.l2_diff, rep.rel_entropy,
                            vol * float(np.sum(ent.eta(U1, cfg.eos, G))), m.dissipation[k], m.piola[k],
                            _constitutive_at(m, k, dt, dx, params)))
            final_err = rep.l2_diff if k == len(levels) - 1 else None
        if m.error is not None:
            point.update(aborted=True, **m.error)
        else:
            point["error"] = final_err
            if xi == xi_ref:
                point["excluded_from_fit"] = True
            else:
                pairs.append((abs(xi - xi_ref), final_err))
        points.append(point)
    report["points"] = points
    if ratios:
        band_ok = all(lo_band * (1 - 1e-9) <= r <= hi_band * (1 + 1e-9) for r in ratios)
        report["norm_equivalence"] = {"band": [lo_band, hi_band], "ratio_range": [min(ratios), max(ratios)],
                                      "consistent": band_ok}
    report.update(_fit_block(pairs, cfg.seed))
    return ScenarioResult(rows, report)


def _entropy_gates(rng, n=20) -> dict:
    from ..core import Eos
    eos, G = Eos(1.0), 1.0
    grad_err, min_eig = 0.0, math.inf
    for U in ent.sample_states(rng, n):
        V = ent.to_entropy_coords(U)
        g = ent.grad_eta(U, eos, G)
        fd = np.empty_like(V)
        for i in range(V.size):
            h = 1e-6 * max(1.0, abs(V[i]))
            e = np.zeros_like(V)
            e[i] = h
            fd[i] = (ent.eta_V(V + e, 2, eos, G) - ent.eta_V(V - e, 2, eos, G)) / (2 * h)
        grad_err = max(grad_err, float(np.linalg.norm(g - fd) / np.linalg.norm(g)))
        min_eig = min(min_eig, float(np.min(np.linalg.eigvalsh(ent.hess_eta(U, eos, G)))))
    return {"n_states": n, "max_grad_fd_relative_error": grad_err, "min_hessian_eigenvalue": min_eig}


def equilibrium_fixed_point(rng, n=(8, 8), G=1.0, c0=1.0) -> float:
    """Largest change over one step of a random uniform relaxation equilibrium."""
    from ..core import Eos, relaxation_target
    F = np.eye(2) + 0.2 * rng.uniform(-1, 1, size=(2, 2))
    shape = tuple(n)
    s = PrimitiveStateMD(np.full(shape, rng.uniform(0.5, 2.0)),
                         np.broadcast_to(rng.uniform(-0.5, 0.5, size=2), shape + (2,)).copy(),
                         np.broadcast_to(F, shape + (2, 2)).copy(),
                         np.broadcast_to(relaxation_target(F), shape + (2, 2)).copy())
    U = primitive_to_conserved(s)
    dx = (1.0 / n[0], 1.0 / n[1])
    eos = Eos(c0)
    V = fv_step(U, stable_dt(U, dx, eos, G), dx, eos, G, xi=1.0)
    return float(np.max(np.abs(V - U)))


def multid_audits(cfg: ScenarioConfig) -> ScenarioResult:
    U0 = multid_initial(cfg)
    dx = _dx(cfg)
    G = cfg.params.G
    vol = float(np.prod(dx))
    dt, levels, outputs, keep = _plan(cfg, U0, dx)
    marches = _pool_map(lambda xi: _march(U0, dx, cfg, xi, dt, keep, outputs), cfg.xi_list, cfg.threads)
    rows, points = [], []
    for xi, m in zip(cfg.xi_list, marches):
        params = cfg.params.with_xi(xi)
        balance = []
        for k in sorted(outputs):
            if k not in m.snaps:
                break
            cr = _constitutive_at(m, k, dt, dx, params)
            rows.append(Row(cfg.scenario, xi, None, float(levels[k]),
                            energy=vol * float(np.sum(ent.eta(m.snaps[k], cfg.eos, G))),
                            dissipation=m.dissipation[k], piola_residual=m.piola[k], constitutive_residual=cr))
            if _uniform_spacing(m.levels, k) and all(j in m.snaps for j in (k - 1, k + 1)):
                trio = [m.snaps[k - 1], m.snaps[k], m.snaps[k + 1]]
                balance.append(float(ent.entropy_balance_residual(trio, dt, dx, cfg.eos, G, xi)[0]))
        last = max(m.piola)
        point = {"xi": xi, "conservation_drift": m.drift, "piola_initial": m.piola[0],
                 "piola_final": m.piola[last],
                 "piola_ratio": m.piola[last] / m.piola[0] if m.piola[0] > 0 else None,
                 "entropy_balance_residual_max": max(balance) if balance else None}
        if m.error is not None:
            point.update(aborted=True, **m.error)
        points.append(point)
    rng = np.random.default_rng(cfg.seed)
    samples = ent.sample_states(rng, 32)
    bounds = ent.source_bounds_check(samples, rng)
    report = {"scenario": cfg.scenario, "dt": dt, "n_steps": len(levels) - 1, "horizon": _horizon(cfg, U0),
              "points": points,
              "entropy_gates": _entropy_gates(rng),
              "equilibrium_fixed_point_max_change": equilibrium_fixed_point(rng),
              "source_bounds": {"lipschitz": bounds.lipschitz.tolist(), "remainder": bounds.remainder.tolist(),
                                "n_samples": bounds.n_samples, "radius": bounds.radius,
                                "secant_ratio": bounds.secant_ratio}}
    status = 3 if any(p.get("aborted") for p in points) else 0
    return ScenarioResult(rows, report, status)


RUNNERS = {
    "shear-xi-sweep": shear_xi_sweep,
    "shear-stokes": stokes_scenario,
    "shear-energy-audit": shear_energy_audit,
    "multid-xi-sweep": multid_sweep,
    "multid-audits": multid_audits,
}


def execute(cfg: ScenarioConfig) -> ScenarioResult:
    result = RUNNERS[cfg.scenario](cfg)
    result.report.setdefault("schema_version", REPORT_SCHEMA_VERSION)
    result.report["eos"] = cfg.eos.kind
    return result

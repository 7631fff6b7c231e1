"""Quick invariant suite behind ``maxlab check`` (a few seconds on small grids)."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..core import Eos, MaterialParams
from ..multid import density_bump_state, fv_step, piola_residual, primitive_to_conserved, stable_dt, totals
from ..shear1d import BoundarySpec, ShearState1D, prop1_audit, run_shear
from .scenarios import _entropy_gates, equilibrium_fixed_point


def _shear_runs():
    y0 = ShearState1D.from_functions(0.0, 1.0, 128, lambda y: np.sin(2 * np.pi * y), np.zeros_like)
    per = BoundarySpec.periodic
    a = run_shear(y0, MaterialParams(xi=0.3), per("left"), per("right"), 0.5)
    b = run_shear(y0, MaterialParams(xi=0.0), per("left"), per("right"), 0.5)
    return a, b


def check_energy_identity(rng):
    a, _ = _shear_runs()
    worst = max(led.relative_residual for led in a.ledgers)
    return worst <= 1e-10, f"max relative residual {worst:.2e}"


def check_dissipative_walls(rng):
    y0 = ShearState1D.from_functions(0.0, 1.0, 128, lambda y: np.sin(2 * np.pi * y), np.zeros_like)
    run = run_shear(y0, MaterialParams(xi=0.2), BoundarySpec.dissipative("left", 1.0, -1.0),
                    BoundarySpec.dissipative("right", 1.0, 1.0), 1.0)
    rises = max(led.energy - led.energy_prev for led in run.ledgers)
    return rises <= 1e-14, f"largest per-step energy change {rises:.2e}"


def check_difference_inequality(rng):
    a, b = _shear_runs()
    slack = max(st.slack for st in prop1_audit(a, b))
    e0 = a.ledgers[0].energy_prev
    return slack <= 1e-8 * e0, f"max slack / E0 = {slack / e0:.2e}"


def check_entropy_calculus(rng):
    g = _entropy_gates(rng, n=10)
    ok = g["max_grad_fd_relative_error"] <= 1e-6 and g["min_hessian_eigenvalue"] > 0
    return ok, f"grad FD error {g['max_grad_fd_relative_error']:.1e}, min Hessian eig {g['min_hessian_eigenvalue']:.2e}"


def check_conservation(rng):
    n = (16, 16)
    dx = (1 / 16, 1 / 16)
    eos = Eos(1.0)
    U = primitive_to_conserved(density_bump_state(n))
    base = totals(U, dx)[:7]
    dt = stable_dt(U, dx, eos, 1.0)
    worst = 0.0
    for _ in range(10):
        U = fv_step(U, dt, dx, eos, 1.0, 0.5)
        worst = max(worst, float(np.max(np.abs(totals(U, dx)[:7] - base))))
    return worst <= 1e-12, f"max drift of rho, rho u, rho F totals {worst:.1e}"


def check_equilibrium(rng):
    change = equilibrium_fixed_point(rng)
    return change <= 1e-14, f"max change over one step {change:.1e}"


def check_piola_compatible_data(rng):
    U = primitive_to_conserved(density_bump_state((32, 32), compatible=True))
    r = float(np.max(piola_residual(U, (1 / 32, 1 / 32))))
    return r <= 1e-10, f"initial Piola residual {r:.1e}"


CHECKS: list[tuple[str, Callable]] = [
    ("1D discrete energy identity", check_energy_identity),
    ("1D dissipative walls do not create energy", check_dissipative_walls),
    ("1D difference inequality", check_difference_inequality),
    ("entropy gradient and Hessian", check_entropy_calculus),
    ("2D conservation of rho, rho u, rho F", check_conservation),
    ("2D relaxation equilibrium is a fixed point", check_equilibrium),
    ("compatible initial data satisfy the Piola identity", check_piola_compatible_data),
]


def run_checks(seed: int = 0, echo=print) -> bool:
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn in CHECKS:
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # report and keep going
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok

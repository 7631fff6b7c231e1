import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from maxlab.core import ConfigurationError, MaterialParams, StabilityError
from maxlab.shear1d import (BoundarySpec, ShearState1D, SingularBoundaryError, advect_step, from_riemann,
                            incoming_value, l2_difference, locate_front, prop1_audit, run_shear,
                            shear_energy, source_step, to_riemann)

PER = (BoundarySpec.periodic("left"), BoundarySpec.periodic("right"))
DISSIPATIVE = (BoundarySpec.dissipative("left", 1.0, -1.0), BoundarySpec.dissipative("right", 1.0, 1.0))


def sine_state(N=256, y_min=0.0, y_max=1.0, tau_amp=0.0):
    return ShearState1D.from_functions(y_min, y_max, N, lambda y: np.sin(2 * np.pi * y),
                                       lambda y: tau_amp * np.cos(2 * np.pi * y))


# -- Riemann variables ----------------------------------------------------------

@pytest.mark.parametrize("u, tau, G, expected", [
    (1.0, 2.0, 4.0, (4.0, 0.0)),
    (0.0, 0.7, 3.0, (0.7, 0.7)),
    (3.0, 0.0, 1.0, (3.0, -3.0)),
])
def test_riemann_examples(u, tau, G, expected):
    s = ShearState1D(0.0, 1.0, np.array([u]), np.array([tau]))
    wp, wm = to_riemann(s, G)
    assert (wp[0], wm[0]) == expected


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(u=arrays(float, 16, elements=finite), tau=arrays(float, 16, elements=finite), G=st.floats(1e-2, 1e2))
def test_riemann_round_trip(u, tau, G):
    u2, tau2 = from_riemann(*to_riemann(ShearState1D(0.0, 1.0, u, tau), G), G)
    scale = 1.0 + np.max(np.abs(u)) + np.max(np.abs(tau))
    assert np.max(np.abs(u2 - u)) <= 1e-14 * scale * max(1.0, 1 / math.sqrt(G)) * 4
    assert np.max(np.abs(tau2 - tau)) <= 1e-14 * scale * max(1.0, math.sqrt(G)) * 4


def test_state_invariants():
    s = sine_state(N=64, y_min=-1.0, y_max=3.0)
    assert s.N == 64 and s.dy == 4.0 / 64
    with pytest.raises(ValueError):
        ShearState1D(1.0, 1.0, np.zeros(4), np.zeros(4))
    with pytest.raises(ValueError):
        ShearState1D(0.0, 1.0, np.zeros(4), np.zeros(5))
    with pytest.raises(ValueError):
        ShearState1D(0.0, 1.0, np.array([np.nan]), np.zeros(1))


# -- boundary specs -------------------------------------------------------------

@pytest.mark.parametrize("side, c_u, c_tau", [("left", 1.0, 1.0), ("left", 0.0, 1.0), ("right", 1.0, -1.0)])
def test_sign_conditions_are_enforced(side, c_u, c_tau):
    with pytest.raises(ValueError):
        BoundarySpec.dissipative(side, c_u, c_tau).validate(1.0)


@pytest.mark.parametrize("G", [0.25, 1.0, 4.0])
def test_acceptance_walls_are_admissible(G):
    for bc in DISSIPATIVE:
        bc.validate(G)


def test_singular_boundary_relation():
    # c_tau = sqrt(G) c_u on the left only sees the outgoing characteristic
    bc = BoundarySpec.dissipative("left", 1.0, 1.0)
    with pytest.raises(SingularBoundaryError):
        incoming_value(bc, 0.3, 0.0, 1.0)


@pytest.mark.parametrize("bc", [BoundarySpec.dissipative("left", 2.0, -0.5, g=0.3),
                                BoundarySpec.dissipative("right", 1.0, 3.0, g=-1.0),
                                BoundarySpec.dirichlet_velocity("left", g=0.7),
                                BoundarySpec.dirichlet_velocity("right", g=-0.2)])
def test_incoming_value_satisfies_the_relation(bc):
    G = 2.0
    s = math.sqrt(G)
    w_out = 0.37
    w_in = incoming_value(bc, w_out, bc.g, G)
    wp, wm = (w_out, w_in) if bc.side == "left" else (w_in, w_out)
    u, tau = (wp - wm) / (2 * s), 0.5 * (wp + wm)
    assert bc.c_u * u + bc.c_tau * tau == pytest.approx(bc.g, abs=1e-14)


# -- sub-steps ------------------------------------------------------------------------

@pytest.mark.parametrize("bcs, u, tau", [
    (PER, 0.4, -1.2),
    ((BoundarySpec.dirichlet_velocity("left", 0.4), BoundarySpec.dirichlet_velocity("right", 0.4)), 0.4, -1.2),
    ((BoundarySpec.dissipative("left", 1.0, -2.0, g=0.4 + 2.4), BoundarySpec.dissipative("right", 1.0, 0.5, g=0.4 - 0.6)),
     0.4, -1.2),
])
@pytest.mark.parametrize("cfl", [1.0, 0.5])
def test_constants_are_transported_unchanged(bcs, u, tau, cfl):
    G, dy = 1.0, 0.01
    s = ShearState1D(0.0, 1.0, np.full(100, u), np.full(100, tau))
    wp, wm = to_riemann(s, G)
    wp2, wm2, _ = advect_step(wp, wm, G, cfl * dy, dy, *bcs, bcs[0].g, bcs[1].g)
    np.testing.assert_allclose(wp2, wp, atol=1e-14)
    np.testing.assert_allclose(wm2, wm, atol=1e-14)


def test_unit_cfl_shifts_by_one_cell():
    wm = np.zeros(64)
    wm[10:20] = 1.0
    wp = np.zeros(64)
    _, wm2, _ = advect_step(wp, wm, 1.0, 1 / 64, 1 / 64, *PER)
    expected = np.zeros(64)
    expected[11:21] = 1.0
    assert np.array_equal(wm2, expected)


def test_half_cfl_conserves_spike_mass():
    wm = np.zeros(64)
    wm[5] = 1.0
    wp, h = np.zeros(64), 1 / 64
    for _ in range(50):
        wp, wm, _ = advect_step(wp, wm, 1.0, 0.5 * h, h, *PER)
    assert abs(wm.sum() - 1.0) <= 1e-12


def test_cfl_above_one_is_rejected():
    with pytest.raises(StabilityError):
        advect_step(np.zeros(8), np.zeros(8), 4.0, 0.1, 0.1, *PER)
    with pytest.raises(StabilityError):
        run_shear(sine_state(), MaterialParams(), *PER, T=0.1, cfl=1.5)


def test_mixed_periodic_is_rejected():
    with pytest.raises(ConfigurationError):
        advect_step(np.zeros(8), np.zeros(8), 1.0, 0.1, 0.1, PER[0], DISSIPATIVE[1])


def test_source_step_examples(rng):
    wp, wm = rng.normal(size=8), rng.normal(size=8)
    np.testing.assert_array_equal(source_step(wp, wm, 0.0, 0.3)[0], wp)
    # u = 0, tau = 1, xi = 1, dt = ln 2
    a, b = source_step(np.ones(3), np.ones(3), 1.0, math.log(2.0))
    u, tau = from_riemann(a, b, 1.0)
    np.testing.assert_allclose(tau, 0.5, rtol=1e-15)
    np.testing.assert_allclose(u, 0.0, atol=1e-16)
    a, b = source_step(np.ones(3), -np.ones(3), 3.7, 0.21)
    assert np.array_equal(a, np.ones(3)) and np.array_equal(b, -np.ones(3))


# -- whole runs -------------------------------------------------------------------------

def test_uniform_relaxation_is_exact():
    # long domain so that the exact shift step is long as well
    s = ShearState1D(0.0, 64.0, np.zeros(64), np.full(64, 1.3))
    run = run_shear(s, MaterialParams(G=1.0, xi=0.8), *PER, T=5.0)
    expected = 1.3 * np.exp(-0.8 * run.times)[:, None]
    assert np.max(np.abs(run.tau - expected)) <= 1e-12
    assert np.max(np.abs(run.u)) <= 1e-12


@pytest.mark.parametrize("G", [1.0, 4.0])
def test_full_revolution_returns_initial_data(G):
    s = sine_state(N=200, tau_amp=0.4)
    period = (s.y_max - s.y_min) / math.sqrt(G)
    run = run_shear(s, MaterialParams(G=G), *PER, T=period)
    assert np.max(np.abs(run.final.u - s.u)) <= 1e-12
    assert np.max(np.abs(run.final.tau - s.tau)) <= 1e-12


def test_undamped_energy_is_constant():
    run = run_shear(sine_state(N=512, tau_amp=0.3), MaterialParams(), *PER, T=1.0)
    e = np.array([led.energy for led in run.ledgers])
    assert np.max(np.abs(e - e[0])) <= 1e-10 * e[0]


CASES = {
    "periodic": (PER, None),
    "dissipative": (DISSIPATIVE, None),
    "inhomogeneous walls": ((BoundarySpec.dirichlet_velocity("left", 0.5),
                             BoundarySpec.dissipative("right", 1.0, 2.0, g=0.3)), None),
    "forced": (PER, lambda t, y: np.cos(3 * t) * np.sin(4 * np.pi * y)),
}


@pytest.mark.parametrize("name", sorted(CASES))
@pytest.mark.parametrize("cfl", [1.0, 0.6])
def test_energy_identity_closes(name, cfl):
    bcs, f = CASES[name]
    run = run_shear(sine_state(tau_amp=0.3), MaterialParams(G=2.0, xi=0.7), *bcs, T=0.5, cfl=cfl, forcing=f)
    assert max(led.relative_residual for led in run.ledgers) <= 1e-10
    for led in run.ledgers:
        assert led.energy >= 0 and led.dissipation_rate >= 0 and led.numerical_dissipation >= 0
        if cfl == 1.0 and led.dt == run.dt:
            assert led.numerical_dissipation == 0.0


@pytest.mark.parametrize("bcs", [PER, DISSIPATIVE])
@pytest.mark.parametrize("xi", [0.0, 0.5])
def test_energy_never_grows_without_data(bcs, xi):
    run = run_shear(sine_state(tau_amp=0.3), MaterialParams(xi=xi), *bcs, T=1.0)
    for led in run.ledgers:
        assert led.energy <= led.energy_prev * (1 + 1e-14)


def test_difference_of_identical_runs_vanishes():
    a = run_shear(sine_state(), MaterialParams(xi=0.2), *PER, T=0.5)
    b = run_shear(sine_state(), MaterialParams(xi=0.2), *PER, T=0.5)
    assert np.all(l2_difference(a, b) == 0)
    for step in prop1_audit(a, b):
        assert step.lhs == 0 and step.rhs == 0


@pytest.mark.parametrize("bcs", [PER, DISSIPATIVE])
def test_difference_inequality_holds_stepwise(bcs):
    a = run_shear(sine_state(N=512), MaterialParams(xi=0.2), *bcs, T=1.0)
    b = run_shear(sine_state(N=512), MaterialParams(xi=0.0), *bcs, T=1.0)
    e0 = a.ledgers[0].energy_prev
    assert max(step.slack for step in prop1_audit(a, b)) <= 1e-8 * e0


def test_difference_audit_preconditions():
    a = run_shear(sine_state(), MaterialParams(xi=0.2), *PER, T=0.25)
    b = run_shear(sine_state(), MaterialParams(xi=0.0), *PER, T=0.25)
    with pytest.raises(ConfigurationError):
        prop1_audit(b, a)
    c = run_shear(sine_state(N=128), MaterialParams(xi=0.0), *PER, T=0.25)
    with pytest.raises(ConfigurationError):
        l2_difference(a, c)
    sparse = run_shear(sine_state(), MaterialParams(xi=0.2), *PER, T=0.25, record_every=4)
    with pytest.raises(ConfigurationError):
        prop1_audit(sparse, run_shear(sine_state(), MaterialParams(), *PER, T=0.25, record_every=4))


@pytest.mark.parametrize("xi, tol", [(0.0, 0.01), (0.5, 0.02)])
def test_stokes_front_and_jump(xi, tol):
    s = ShearState1D(0.0, 2.0, np.zeros(4096), np.zeros(4096))
    run = run_shear(s, MaterialParams(G=1.0, xi=xi), BoundarySpec.dirichlet_velocity("left", 1.0),
                    BoundarySpec.dissipative("right", 1.0, 1.0), T=1.0, record_times=[1.0])
    pos, jump = locate_front(run.final)
    assert abs(pos - 1.0) <= 2 * run.dy
    assert jump == pytest.approx(math.exp(-0.5 * xi), rel=tol)


def test_energy_helper_normalization():
    # E = 1/2 int(tau^2 + G u^2)
    assert shear_energy(np.ones(10), np.ones(10), 3.0, 0.1) == pytest.approx(2.0)

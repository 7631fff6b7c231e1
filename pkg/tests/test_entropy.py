import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxlab.core import DomainError, MaterialParams, relaxation_target
from maxlab.entropy import (constitutive_residual, constitutive_residual_field, effective_e0,
                            entropy_balance_residual, eta, eta_V, evaluate, from_entropy_coords, grad_eta,
                            hess_eta, n_entropy_vars, relative_entropy, relative_entropy_density, sample_states,
                            second_variation, source_bounds_check, taylor_remainder_Z, to_entropy_coords)
from maxlab.multid import (PrimitiveStateMD, conserved_to_primitive, density_bump_state, primitive_to_conserved,
                           run_multid, source_Pi)
from maxlab.shear1d import BoundarySpec, ShearState1D, run_shear

G = 1.0
I2 = np.eye(2)


def point(rho, u, F, A):
    return primitive_to_conserved(PrimitiveStateMD(rho, u, F, A))


def grid(U, shape=(4, 4)):
    return np.broadcast_to(U.reshape((-1,) + (1,) * len(shape)), U.shape + shape).copy()


def fd_gradient(V, eos, h_rel=1e-5):
    g = np.empty_like(V)
    for i in range(V.size):
        h = h_rel * max(1.0, abs(V[i]))
        e = np.zeros_like(V)
        e[i] = h
        g[i] = (eta_V(V + e, 2, eos, G) - eta_V(V - e, 2, eos, G)) / (2 * h)
    return g


@pytest.fixture(scope="module")
def states():
    return sample_states(np.random.default_rng(2024), 100)


# -- eta ----------------------------------------------------------------------------

def test_unit_state_energy_is_one(eos):
    assert eta(point(1.0, [0, 0], I2, I2), eos, G) == pytest.approx(1.0, abs=1e-15)


def test_kinetic_term_scales_quadratically(eos):
    F, A = np.array([[1.1, 0.2], [0.0, 0.9]]), np.diag([1.3, 0.8])
    base = eta(point(1.2, [0, 0], F, A), eos, G)
    e1 = eta(point(1.2, [0.4, -0.3], F, A), eos, G)
    e2 = eta(point(1.2, [0.8, -0.6], F, A), eos, G)
    assert e2 - base == pytest.approx(4 * (e1 - base), rel=1e-12)


def test_energy_lower_bound(eos):
    rng = np.random.default_rng(7)
    for U in sample_states(rng, 50):
        rho = U[0]
        assert eta(U, eos, G) >= rho * effective_e0(eos, G, 1 / rho)


def test_energy_in_both_coordinates_agrees(states, eos):
    for U in states[:20]:
        assert eta_V(to_entropy_coords(U), 2, eos, G) == pytest.approx(float(eta(U, eos, G)), rel=1e-13)


@settings(deadline=None, max_examples=40)
@given(seed=st.integers(0, 2**32 - 1), d=st.sampled_from([1, 2, 3]))
def test_entropy_coordinates_round_trip(seed, d):
    U = sample_states(np.random.default_rng(seed), 1, d=d)[0]
    V = to_entropy_coords(U)
    assert V.shape == (n_entropy_vars(d),)
    np.testing.assert_allclose(from_entropy_coords(V, d), U, rtol=1e-11, atol=1e-12)


def test_out_of_domain_is_rejected(eos):
    U = point(1.0, [0, 0], I2, np.diag([1.0, -0.5]))
    with pytest.raises(DomainError):
        eta(U, eos, G)


# -- derivatives ----------------------------------------------------------------------

def test_momentum_gradient_vanishes_at_rest(eos):
    g = grad_eta(point(1.3, [0, 0], np.diag([1.2, 0.9]), I2), eos, G)
    assert np.all(g[1:3] == 0)


def test_gradient_matches_finite_differences(states, eos):
    for U in states:
        g = grad_eta(U, eos, G)
        fd = fd_gradient(to_entropy_coords(U), eos)
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)


def test_hessian_is_symmetric_positive_definite(states, eos):
    for U in states:
        H = hess_eta(U, eos, G)
        assert np.max(np.abs(H - H.T)) <= 1e-10 * np.max(np.abs(H))
        assert np.min(np.linalg.eigvalsh(H)) > 0


def test_hessian_matches_gradient_differences(states, eos):
    for U in states[:25]:
        V = to_entropy_coords(U)
        H = hess_eta(U, eos, G)
        cols = []
        for i in range(V.size):
            h = 1e-6 * max(1.0, abs(V[i]))
            e = np.zeros_like(V)
            e[i] = h
            cols.append((grad_eta(from_entropy_coords(V + e, 2), eos, G)
                         - grad_eta(from_entropy_coords(V - e, 2), eos, G)) / (2 * h))
        fd = np.stack(cols, axis=1)
        assert np.max(np.abs(fd - H)) <= 1e-5 * np.max(np.abs(H))


def test_second_variation_is_the_hessian_form(states, eos):
    rng = np.random.default_rng(3)
    for U in states[:10]:
        V = to_entropy_coords(U)
        W = rng.normal(size=V.size)
        q = second_variation(V[:, None], W[:, None], 2, eos, G)[0]
        assert q == pytest.approx(W @ hess_eta(U, eos, G) @ W, rel=1e-12)


def test_evaluate_bundles_all_three(states, eos):
    ev = evaluate(states[0], eos, G)
    assert ev.eta == pytest.approx(float(eta(states[0], eos, G)))
    assert ev.grad.shape == (n_entropy_vars(2),) and ev.hess.shape == (n_entropy_vars(2),) * 2


# -- balance law ----------------------------------------------------------------------------

def test_uniform_equilibrium_balance(eos):
    F = np.array([[1.1, 0.3], [-0.1, 0.95]])
    U = grid(point(1.2, [0.3, -0.2], F, relaxation_target(F)))
    assert np.max(entropy_balance_residual([U, U, U], 0.01, (0.25, 0.25), eos, G, 0.7)) <= 1e-12


def test_uniform_relaxation_balance_matches_ode(eos):
    # u = 0, A != Aeq: d eta/dt equals the production term pointwise
    F = np.array([[1.2, 0.1], [0.0, 0.8]])
    A0 = np.diag([1.4, 0.6])
    xi, dt = 0.9, 1e-5
    target = relaxation_target(F)
    snaps = []
    for k in range(3):
        A = target + (A0 - target) * math.exp(-xi * k * dt)
        snaps.append(grid(point(1.1, [0, 0], F, A)))
    assert np.max(entropy_balance_residual(snaps, dt, (0.25, 0.25), eos, G, xi)) <= 1e-8


def _residual_near(run, t_star, fn):
    k = int(np.argmin(np.abs(run.times - t_star)))
    k = min(max(k, 1), len(run.snapshots) - 3)  # keep clear of the shortened last step
    return float(fn(run.snapshots[k - 1:k + 2], run.dt)[0])


def test_energy_balance_residual_is_first_order(eos):
    res = []
    for n in (32, 64, 128):
        U0 = primitive_to_conserved(density_bump_state((n, n), compatible=True))
        run = run_multid(U0, (1 / n, 1 / n), eos, G, 0.0, 0.06, dt=0.15 / n)
        res.append(_residual_near(run, 0.05, lambda s, dt: entropy_balance_residual(s, dt, (1 / n, 1 / n),
                                                                                      eos, G, 0.0)))
    ratios = [res[1] / res[0], res[2] / res[1]]
    assert all(0.4 <= r <= 0.6 for r in ratios), (res, ratios)


# -- relative entropy -------------------------------------------------------------------

def test_relative_entropy_of_identical_states_is_zero(eos):
    U = primitive_to_conserved(density_bump_state((8, 8)))
    rep = relative_entropy(U, U, eos, G, (1 / 8, 1 / 8))
    assert rep.rel_entropy == 0.0 and rep.l2_diff == 0.0


def test_relative_entropy_taylor_limit(states, eos):
    rng = np.random.default_rng(11)
    for U in states[:10]:
        V = to_entropy_coords(U)
        W = rng.normal(size=V.size)
        W *= 0.1 * np.linalg.norm(V) / np.linalg.norm(W)
        q = 0.5 * W @ hess_eta(U, eos, G) @ W
        r = {}
        for eps in (1e-2, 1e-3):
            U1 = from_entropy_coords(V + eps * W, 2)
            r[eps] = float(relative_entropy_density(U1[:, None], U[:, None], eos, G)[0]) / eps**2
        richardson = (10 * r[1e-3] - r[1e-2]) / 9
        assert richardson == pytest.approx(q, rel=1e-4)


def test_relative_entropy_is_nonnegative(eos):
    rng = np.random.default_rng(5)
    a, b = sample_states(rng, 100), sample_states(rng, 100)
    dens = relative_entropy_density(np.stack(a, axis=1), np.stack(b, axis=1), eos, G)
    assert np.all(dens >= 0)


def test_relative_entropy_is_symmetric_to_second_order(states, eos):
    rng = np.random.default_rng(8)
    U2 = states[3]
    W = rng.normal(size=to_entropy_coords(U2).size)
    ratios = []
    for eps in (1e-1, 5e-2, 2.5e-2):
        U1 = from_entropy_coords(to_entropy_coords(U2) + eps * W, 2)
        d12 = relative_entropy_density(U1[:, None], U2[:, None], eos, G)[0]
        d21 = relative_entropy_density(U2[:, None], U1[:, None], eos, G)[0]
        ratios.append(abs(d12 - d21) / np.linalg.norm(U1 - U2) ** 3)
    # |RE12 - RE21| / |dU|^3 stays bounded as the pair merges
    assert all(r2 <= 1.1 * r1 for r1, r2 in zip(ratios, ratios[1:])), ratios


def test_equivalence_constants_bracket_the_ratio(eos):
    n = 16
    U2 = primitive_to_conserved(density_bump_state((n, n), compatible=True))
    rng = np.random.default_rng(4)
    V = to_entropy_coords(U2)
    U1 = from_entropy_coords(V + 1e-3 * rng.normal(size=V.shape) * np.abs(V).max(), 2)
    rep = relative_entropy(U1, U2, eos, G, (1 / n, 1 / n))
    lo, hi = rep.equivalence_consts
    assert 0 < lo <= rep.rel_entropy / rep.l2_diff**2 <= hi


def test_quadratic_entropy_has_no_remainder(rng):
    M = rng.normal(size=(5, 5))
    M = M @ M.T
    grad = lambda U: M @ U  # noqa: E731
    hess = lambda U: M  # noqa: E731
    a, b = rng.normal(size=5), rng.normal(size=5)
    np.testing.assert_allclose(taylor_remainder_Z(a, b, grad=grad, hess=hess), 0, atol=1e-12)


def test_remainder_is_quadratic(states, eos):
    U2 = states[0]
    assert np.all(taylor_remainder_Z(U2, U2, eos, G) == 0)
    W = np.random.default_rng(9).normal(size=to_entropy_coords(U2).size)
    ratios = []
    for eps in (1e-1, 1e-2, 1e-3):
        U1 = from_entropy_coords(to_entropy_coords(U2) + eps * W, 2)
        ratios.append(np.linalg.norm(taylor_remainder_Z(U1, U2, eos, G)) / eps**2)
    assert max(ratios) <= 1.25 * min(ratios)


# -- source bounds ----------------------------------------------------------------------

def test_equilibrium_pairs_have_equal_source():
    F1, F2 = np.diag([1.2, 0.8]), np.array([[1.0, 0.3], [0.0, 1.1]])
    a = point(1.0, [0, 0], F1, relaxation_target(F1))
    b = point(1.5, [0.2, 0], F2, relaxation_target(F2))
    assert np.max(np.abs(source_Pi(a) - source_Pi(b))) <= 1e-14


def test_source_constants_are_stable_under_doubling():
    # nested sample sets in a box well inside the domain
    S = sample_states(np.random.default_rng(1), 256, f_dev=0.1, u_max=0.5)
    small = source_bounds_check(S[:128], np.random.default_rng(2))
    large = source_bounds_check(S, np.random.default_rng(2))
    active = small.lipschitz > 0
    assert np.all(small.lipschitz[:7] == 0)  # rho, rho u, rho F carry no source
    assert np.all(np.isfinite(large.lipschitz)) and np.all(np.isfinite(large.remainder))
    assert np.all(large.lipschitz >= small.lipschitz)
    ratio = large.lipschitz[active] / small.lipschitz[active]
    assert np.all(ratio <= 1.25), ratio
    assert np.all(large.remainder[active] <= 2.0 * small.remainder[active])
    assert large.secant_ratio <= 1.5


# -- constitutive law --------------------------------------------------------------------

def test_constitutive_residual_at_equilibrium():
    F = np.array([[1.1, 0.2], [0.0, 0.9]])
    U = grid(point(1.3, [0.4, 0.1], F, relaxation_target(F)))
    params = MaterialParams(G=G, xi=0.5)
    assert np.max(constitutive_residual([U, U, U], 0.01, (0.25, 0.25), params)) <= 1e-12


def test_constitutive_residual_needs_finite_viscosity():
    U = grid(point(1.0, [0, 0], I2, I2))
    with pytest.raises(ValueError):
        constitutive_residual([U, U, U], 0.01, (0.25, 0.25), MaterialParams(xi=0.0))
    assert constitutive_residual([U, U, U], 0.01, (0.25, 0.25), MaterialParams(xi=0.0), rescaled=True)[0] == 0


def test_shear_embedding_matches_one_dimensional_law():
    N, xi = 256, 0.6
    init = ShearState1D.from_functions(0.0, 1.0, N, lambda y: np.sin(2 * np.pi * y), lambda y: 0.2 * np.cos(2 * np.pi * y))
    run = run_shear(init, MaterialParams(G=G, xi=xi), BoundarySpec.periodic("left"), BoundarySpec.periodic("right"), T=0.2)
    dt, dy = run.dt, run.dy

    def dudy(u):
        return (np.roll(u, -1) - np.roll(u, 1)) / (2 * dy)

    # shear strain gamma from F_t = (grad u) F, integrated by the trapezoid rule
    gamma = np.concatenate([[np.zeros(N)], np.cumsum(0.5 * dt * (dudy(run.u[1:]) + dudy(run.u[:-1])), axis=0)])
    snaps = []
    for k in range(len(run.times)):
        F = np.zeros((4, N, 2, 2))
        F[..., 0, 0] = F[..., 1, 1] = 1.0
        F[..., 0, 1] = gamma[k]
        tau_hat = np.zeros((4, N, 2, 2))
        tau_hat[..., 0, 1] = tau_hat[..., 1, 0] = run.tau[k]
        Finv = np.linalg.inv(F)
        A = Finv @ (np.eye(2) + tau_hat / G) @ np.swapaxes(Finv, -1, -2)
        u = np.zeros((4, N, 2))
        u[..., 0] = run.u[k]
        snaps.append(primitive_to_conserved(PrimitiveStateMD(np.ones((4, N)), u, F, A)))

    n = len(snaps) // 2
    field = constitutive_residual_field(snaps, dt, (0.25, dy), MaterialParams(G=G, xi=xi), n)[0, :, 0, 1]
    one_d = (run.tau[n + 1] - run.tau[n - 1]) / (2 * dt) - G * dudy(run.u[n]) + xi * run.tau[n]
    assert np.max(np.abs(field - one_d)) <= 1e-8 * np.max(np.abs(one_d))
    # the stress of the embedded state is the 1D stress
    s = conserved_to_primitive(snaps[n])
    assert np.max(np.abs(G * (s.F @ s.A @ np.swapaxes(s.F, -1, -2))[0, :, 0, 1] - run.tau[n])) <= 1e-12

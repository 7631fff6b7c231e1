r"""Energy functional, its calculus, and the relative-entropy machinery.

Energy density
--------------
With ``p = c0^2 rho`` and ``tau = rho G (F A F^T - I)`` the energy that is
actually conserved by the flux in :mod:`maxlab.multid` is

    eta = rho |u|^2 / 2 + rho e0(1/rho) - G rho ln(1/rho) + rho G/2 (F A : F)

The ``-G ln(nu)`` term is the stored energy of the isotropic part ``-rho G I``
of ``tau``; without it the balance picks up a spurious ``rho G div u``. For the
isothermal law the two logarithms merge into ``(c0^2 + G) rho ln rho``.

Entropy coordinates
-------------------
``eta`` is not convex in the solver variables ``(rho, rho u, rho F, rho A)``: it
is affine in ``rho A`` at fixed ``(rho, rho F)`` while the cross terms with
``rho F`` do not vanish, so its Hessian is indefinite. Calculus is therefore
done in

    V = (rho, m = rho u, P = rho F, Q = rho A^{-2})

with ``Q`` packed into its d(d+1)/2 upper-triangular entries. Writing
``S = Q^{-1/2}`` (so that ``rho^{-1/2} S = A``),

    eta(V) = |m|^2/(2 rho) + kappa rho ln rho + G/2 rho^{-1/2} tr(P S P^T),
    kappa = c0^2 + G.

Each term is jointly convex: ``|m|^2/rho`` and ``rho ln rho`` classically, and the
last one is the perspective of ``(F, C) -> tr(F C^{-1/2} F^T)``, itself the
matrix-fractional function composed with the operator-concave ``C^{1/2}``.
Strictness comes from the strict concavity of the square root plus
``kappa / rho > 0`` along the scaling direction.

First derivatives (``h = tr(S P^T P)``)::

    d/drho = -|u|^2/2 + kappa (ln rho + 1) - G/4 rho^{-3/2} h
    d/dm   = u
    d/dP   = G rho^{-1/2} P S                (= G F A)
    d/dQ   = G/2 rho^{-1/2} V (Gamma o V^T P^T P V) V^T

with ``Q = V diag(l) V^T`` and ``Gamma_ij = g[l_i, l_j]`` the first divided
difference of ``g(l) = l^{-1/2}``. The second derivative in ``Q`` uses the
second divided differences ``g[l_i, l_k, l_j]``. For this ``g`` both have
cancellation-free closed forms in ``r = sqrt(l)``::

    g[a, b]    = -1 / (r_a r_b (r_a + r_b))
    g[a, b, c] = (r_a + r_b + r_c) / (r_a r_b r_c (r_a + r_b)(r_b + r_c)(r_a + r_c))

so coincident eigenvalues (``A = I``) need no special casing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import ConfigurationError, DomainError, Eos, MaterialParams, left_conformation, symmetrize
from .multid import (conserved_to_primitive, dim_from_nvar, l2_norm, neo_hookean_stress,
                     primitive_to_conserved, PrimitiveStateMD, source_Pi)


# -- coordinates ------------------------------------------------------------

def n_entropy_vars(d: int) -> int:
    return 1 + d + d * d + d * (d + 1) // 2


def _triu(d):
    return np.triu_indices(d)


def sym_basis(d: int) -> list[np.ndarray]:
    """Symmetric matrices dual to the packed upper-triangular coordinates."""
    out = []
    for i, j in zip(*_triu(d)):
        E = np.zeros((d, d))
        E[i, j] = E[j, i] = 1.0
        out.append(E)
    return out


def to_entropy_coords(U) -> np.ndarray:
    """Map solver variables ``(nvar, *g)`` to packed ``V`` of shape ``(nV, *g)``."""
    U = np.asarray(U, dtype=float)
    d = dim_from_nvar(U.shape[0])
    s = conserved_to_primitive(U)
    _check(s)
    Ainv = np.linalg.inv(s.A)
    Q = s.rho[..., None, None] * (Ainv @ Ainv)
    iu = _triu(d)
    q = np.moveaxis(Q[..., iu[0], iu[1]], -1, 0)
    return np.concatenate([U[:1 + d + d * d], q], axis=0)


def from_entropy_coords(V, d: int) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    rho = V[0]
    if np.any(~(rho > 0)):
        raise DomainError("non-positive density")
    Q = _unpack_sym(V[1 + d + d * d:], d)
    lam, vec = np.linalg.eigh(Q)
    if np.any(~(lam > 0)):
        raise DomainError("Q is not positive definite")
    # A = (Q / rho)^{-1/2}
    A = (vec * ((lam / rho[..., None]) ** -0.5)[..., None, :]) @ np.swapaxes(vec, -1, -2)
    rhoA = rho[..., None, None] * symmetrize(A)
    rhoA = np.moveaxis(rhoA, (-2, -1), (0, 1)).reshape((d * d,) + rho.shape)
    return np.concatenate([V[:1 + d + d * d], rhoA], axis=0)


def _unpack_sym(q, d):
    g = q.shape[1:]
    Q = np.zeros(g + (d, d))
    for k, (i, j) in enumerate(zip(*_triu(d))):
        Q[..., i, j] = q[k]
        Q[..., j, i] = q[k]
    return Q


def _check(s: PrimitiveStateMD):
    if np.any(~(s.rho > 0)):
        raise DomainError("non-positive density")
    if np.any(~(np.linalg.eigvalsh(s.A) > 0)):
        raise DomainError("A is not positive definite")
    if np.any(~(np.abs(np.linalg.det(s.F)) > 0)):
        raise DomainError("singular deformation gradient")


# -- energy and its derivatives ----------------------------------------------

def effective_e0(eos: Eos, G: float, nu):
    """Stored energy per unit mass of all isotropic stresses (pressure and -rho G I)."""
    return eos.e0(nu) - G * np.log(nu)


def eta(U, eos: Eos, G: float):
    """Energy density of solver states ``(nvar, *g)``; returns an array over the grid."""
    s = conserved_to_primitive(np.asarray(U, dtype=float))
    _check(s)
    return _eta_prim(s, eos, G)


def _eta_prim(s, eos, G):
    kin = 0.5 * s.rho * np.sum(s.u * s.u, axis=-1)
    internal = s.rho * effective_e0(eos, G, 1.0 / s.rho)
    elastic = 0.5 * G * s.rho * np.trace(left_conformation(s.F, s.A), axis1=-2, axis2=-1)
    return kin + internal + elastic


def eta_V(V, d: int, eos: Eos, G: float):
    """Energy density written directly in entropy coordinates."""
    V = np.asarray(V, dtype=float)
    rho = V[0]
    m = V[1:1 + d]
    P = np.moveaxis(V[1 + d:1 + d + d * d].reshape((d, d) + rho.shape), (0, 1), (-2, -1))
    Q = _unpack_sym(V[1 + d + d * d:], d)
    lam, vec = np.linalg.eigh(Q)
    if np.any(~(rho > 0)) or np.any(~(lam > 0)):
        raise DomainError("state outside the convex domain")
    S = (vec * lam[..., None, :] ** -0.5) @ np.swapaxes(vec, -1, -2)
    h = np.trace(P @ S @ np.swapaxes(P, -1, -2), axis1=-2, axis2=-1)
    kappa = eos.c0**2 + G
    return np.sum(m * m, axis=0) / (2 * rho) + kappa * rho * np.log(rho) + 0.5 * G * rho**-0.5 * h


def _dd1(r):
    # first divided differences of l^{-1/2}, r = sqrt(eigenvalues), shape (..., d)
    ri = r[..., :, None]
    rj = r[..., None, :]
    return -1.0 / (ri * rj * (ri + rj))


def _dd2(r):
    a = r[..., :, None, None]
    b = r[..., None, :, None]
    c = r[..., None, None, :]
    return (a + b + c) / (a * b * c * (a + b) * (b + c) * (a + c))


@dataclass
class _Pieces:
    d: int
    rho: np.ndarray
    u: np.ndarray
    P: np.ndarray
    M: np.ndarray
    S: np.ndarray
    lam: np.ndarray
    vec: np.ndarray
    h: np.ndarray


def _pieces(U) -> _Pieces:
    U = np.asarray(U, dtype=float)
    d = dim_from_nvar(U.shape[0])
    s = conserved_to_primitive(U)
    _check(s)
    P = s.rho[..., None, None] * s.F
    Ainv = np.linalg.inv(s.A)
    Q = symmetrize(s.rho[..., None, None] * (Ainv @ Ainv))
    lam, vec = np.linalg.eigh(Q)
    S = (vec * lam[..., None, :] ** -0.5) @ np.swapaxes(vec, -1, -2)
    M = np.swapaxes(P, -1, -2) @ P
    h = np.trace(S @ M, axis1=-2, axis2=-1)
    return _Pieces(d, s.rho, s.u, P, M, S, lam, vec, h)


def grad_eta(U, eos: Eos, G: float) -> np.ndarray:
    """Gradient of ``eta`` in packed entropy coordinates, shape ``(nV, *g)``."""
    k = _pieces(U)
    d, rho = k.d, k.rho
    kappa = eos.c0**2 + G
    g_rho = (-0.5 * np.sum(k.u * k.u, axis=-1) + kappa * (np.log(rho) + 1)
             - 0.25 * G * rho**-1.5 * k.h)
    g_m = np.moveaxis(k.u, -1, 0)
    g_P = G * rho[..., None, None] ** -0.5 * (k.P @ k.S)
    Vt = np.swapaxes(k.vec, -1, -2)
    Mt = Vt @ k.M @ k.vec
    gQ = 0.5 * G * rho[..., None, None] ** -0.5 * (k.vec @ (_dd1(np.sqrt(k.lam)) * Mt) @ Vt)
    iu = _triu(d)
    weight = np.where(iu[0] == iu[1], 1.0, 2.0)
    g_q = np.moveaxis(gQ[..., iu[0], iu[1]] * weight, -1, 0)
    g_P = np.moveaxis(g_P, (-2, -1), (0, 1)).reshape((d * d,) + rho.shape)
    return np.concatenate([g_rho[None], g_m, g_P, g_q], axis=0)


def hess_eta(U, eos: Eos, G: float) -> np.ndarray:
    """Hessian of ``eta`` in packed entropy coordinates at a single state."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 1:
        raise ValueError("hess_eta expects a single state")
    k = _pieces(U)
    d, rho, P, S, vec = k.d, float(k.rho), k.P, k.S, k.vec
    kappa = eos.c0**2 + G
    n = n_entropy_vars(d)
    r = np.sqrt(k.lam)
    G1 = _dd1(r)
    G2 = _dd2(r)
    Vt = vec.T

    # split each basis direction into (dr, dm, dP, dQ)
    dirs = []
    for e in np.eye(n):
        dr = e[0]
        dm = e[1:1 + d]
        dP = e[1 + d:1 + d + d * d].reshape(d, d)
        dQ = _unpack_sym(e[1 + d + d * d:][:, None], d)[0]
        dirs.append((dr, dm, dP, dQ, Vt @ dQ @ vec))

    a0, a1, a2 = rho**-0.5, -0.5 * rho**-1.5, 0.75 * rho**-2.5
    Mt = Vt @ k.M @ vec
    u = k.u

    def dg(Kt):  # Frechet derivative of Q^{-1/2}, rotated back
        return vec @ (G1 * Kt) @ Vt

    def dh(dP, Kt):
        return 2 * np.trace(dP @ S @ P.T) + np.trace(P @ dg(Kt) @ P.T)

    dh_all = [dh(dP, Kt) for (_, _, dP, _, Kt) in dirs]
    H = np.zeros((n, n))
    for a, (r1, m1, P1, _, K1) in enumerate(dirs):
        for b in range(a, n):
            r2, m2, P2, _, K2 = dirs[b]
            val = (np.dot(m1 - u * r1, m2 - u * r2) / rho + kappa * r1 * r2 / rho)
            d2g = np.einsum("ikj,ik,kj->ij", G2, K1, K2) + np.einsum("ikj,ik,kj->ij", G2, K2, K1)
            d2h = (2 * np.trace(P1 @ S @ P2.T)
                   + 2 * np.trace(P1 @ dg(K2) @ P.T) + 2 * np.trace(P2 @ dg(K1) @ P.T)
                   + np.sum(d2g * Mt))
            val += 0.5 * G * (a2 * r1 * r2 * k.h + a1 * (r1 * dh_all[b] + r2 * dh_all[a]) + a0 * d2h)
            H[a, b] = H[b, a] = val
    return H


@dataclass
class EntropyEval:
    eta: float
    grad: np.ndarray
    hess: np.ndarray


def evaluate(U, eos: Eos, G: float) -> EntropyEval:
    return EntropyEval(float(eta(U, eos, G)), grad_eta(U, eos, G), hess_eta(U, eos, G))


# -- balance law ----------------------------------------------------------------

def entropy_flux(U, j: int, eos: Eos, G: float):
    """``Q_j = u_j eta + p u_j - tau_{ij} u_i`` (work done by the Cauchy stress)."""
    s = conserved_to_primitive(np.asarray(U, dtype=float))
    _check(s)
    e = _eta_prim(s, eos, G)
    tau = neo_hookean_stress(s.rho, s.F, s.A, G)
    p = eos.c0**2 * s.rho
    uj = s.u[..., j]
    return uj * e + p * uj - np.einsum("...i,...i->...", tau[..., :, j], s.u)


def entropy_production(U, G: float, xi: float):
    """``xi * D eta . Pi``, the rate of change of ``eta`` due to relaxation alone."""
    s = conserved_to_primitive(np.asarray(U, dtype=float))
    d = s.d
    trB = np.trace(left_conformation(s.F, s.A), axis1=-2, axis2=-1)
    return 0.5 * xi * G * s.rho * (d - trB)


def _centered(f, axis, h):
    return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2 * h)


def entropy_balance_residual(snapshots: Sequence[np.ndarray], dt: float, dx: Sequence[float],
                             eos: Eos, G: float, xi: float) -> np.ndarray:
    """Max-norm of ``d_t eta + div Q - xi D eta . Pi`` at each interior snapshot.

    ``snapshots`` must be equally spaced by ``dt``; derivatives are centered in
    time and space (periodic grid).
    """
    if len(snapshots) < 3:
        raise ValueError("need at least three snapshots")
    etas = [eta(U, eos, G) for U in snapshots]
    out = []
    for n in range(1, len(snapshots) - 1):
        U = snapshots[n]
        d = dim_from_nvar(U.shape[0])
        res = (etas[n + 1] - etas[n - 1]) / (2 * dt)
        for j in range(d):
            res = res + _centered(entropy_flux(U, j, eos, G), j, dx[j])
        res = res - entropy_production(U, G, xi)
        out.append(float(np.max(np.abs(res))))
    return np.array(out)


# -- relative entropy -------------------------------------------------------------

@dataclass
class RelEntropyReport:
    rel_entropy: float
    l2_diff: float
    equivalence_consts: tuple

    def as_dict(self) -> dict:
        return {"rel_entropy": self.rel_entropy, "l2_diff": self.l2_diff,
                "a_lower": self.equivalence_consts[0], "a_upper": self.equivalence_consts[1]}


def second_variation(V, W, d: int, eos: Eos, G: float):
    """``D^2 eta(V)[W, W]`` for gridded entropy coordinates ``V`` and directions ``W``."""
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    rho = V[0]
    g = rho.shape
    m = np.moveaxis(V[1:1 + d], 0, -1)
    P = np.moveaxis(V[1 + d:1 + d + d * d].reshape((d, d) + g), (0, 1), (-2, -1))
    lam, vec = np.linalg.eigh(_unpack_sym(V[1 + d + d * d:], d))
    if np.any(~(rho > 0)) or np.any(~(lam > 0)):
        raise DomainError("state outside the convex domain")
    r = W[0]
    n = np.moveaxis(W[1:1 + d], 0, -1)
    Pi = np.moveaxis(W[1 + d:1 + d + d * d].reshape((d, d) + g), (0, 1), (-2, -1))
    K = _unpack_sym(W[1 + d + d * d:], d)

    u = m / rho[..., None]
    w = n - u * r[..., None]
    out = np.sum(w * w, axis=-1) / rho + (eos.c0**2 + G) * r * r / rho

    Vt = np.swapaxes(vec, -1, -2)
    sq = np.sqrt(lam)
    S = (vec * (1.0 / sq)[..., None, :]) @ Vt
    M = np.swapaxes(P, -1, -2) @ P
    Mt = Vt @ M @ vec
    Kt = Vt @ K @ vec
    dS = vec @ (_dd1(sq) * Kt) @ Vt
    d2S_t = 2 * np.einsum("...ikj,...ik,...kj->...ij", _dd2(sq), Kt, Kt)
    tr = lambda X: np.trace(X, axis1=-2, axis2=-1)  # noqa: E731
    PiT = np.swapaxes(Pi, -1, -2)
    h = tr(S @ M)
    dh = 2 * tr(Pi @ S @ np.swapaxes(P, -1, -2)) + tr(dS @ M)
    d2h = 2 * tr(Pi @ S @ PiT) + 4 * tr(Pi @ dS @ np.swapaxes(P, -1, -2)) + np.sum(d2S_t * Mt, axis=(-2, -1))
    a0, a1, a2 = rho**-0.5, -0.5 * rho**-1.5, 0.75 * rho**-2.5
    return out + 0.5 * G * (a2 * r * r * h + 2 * a1 * r * dh + a0 * d2h)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def relative_entropy_density(U1, U2, eos: Eos, G: float, switch: float = 1e-2):
    """Cellwise ``eta(U1) - eta(U2) - D eta(U2) . (U1 - U2)``.

    Where the two states are close (relative distance in entropy coordinates
    below ``switch``) the integral form
    ``int_0^1 (1 - s) D^2 eta(V2 + s dV)[dV, dV] ds`` is used with 8-point
    Gauss-Legendre quadrature; the direct formula loses everything to
    cancellation once ``|dV|^2`` drops below machine epsilon.
    """
    V1 = to_entropy_coords(U1)
    V2 = to_entropy_coords(U2)
    d = dim_from_nvar(np.asarray(U1).shape[0])
    dV = V1 - V2
    direct = eta_V(V1, d, eos, G) - eta_V(V2, d, eos, G) - np.sum(grad_eta(U2, eos, G) * dV, axis=0)
    size = np.sqrt(np.sum(dV * dV, axis=0)) / (1.0 + np.sqrt(np.sum(V2 * V2, axis=0)))
    close = size < switch
    if not np.any(close):
        return direct
    s_nodes = 0.5 * (_GL_NODES + 1.0)
    quad = np.zeros_like(direct)
    for s, wgt in zip(s_nodes, 0.5 * _GL_WEIGHTS):
        quad = quad + wgt * (1 - s) * second_variation(V2 + s * dV, dV, d, eos, G)
    return np.where(close, quad, direct)


def relative_entropy(U1, U2, eos: Eos, G: float, dx: Sequence[float]) -> RelEntropyReport:
    """Integrated relative entropy of two gridded states, with the L2 distance of
    the solver variables and the range of their cellwise ratio."""
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    if U1.shape != U2.shape:
        raise ConfigurationError("states live on different grids")
    vol = float(np.prod(dx))
    dens = relative_entropy_density(U1, U2, eos, G)
    diff2 = np.sum((U1 - U2) ** 2, axis=0)
    # cells whose difference is at round-off level say nothing about the constants
    mask = diff2 > 1e-20 * (1.0 + np.sum(U2 * U2, axis=0))
    if np.any(mask):
        ratio = dens[mask] / diff2[mask]
        consts = (float(np.min(ratio)), float(np.max(ratio)))
    else:
        consts = (float("nan"), float("nan"))
    return RelEntropyReport(vol * float(np.sum(dens)), l2_norm(U1 - U2, dx), consts)


def taylor_remainder_Z(U1, U2, eos: Optional[Eos] = None, G: float = 1.0,
                       grad: Optional[Callable] = None, hess: Optional[Callable] = None,
                       coords: Optional[Callable] = None) -> np.ndarray:
    """``Z = D eta(U1) - D eta(U2) - D^2 eta(U2) (U1 - U2)`` for single states.

    ``grad``/``hess``/``coords`` default to the Maxwell energy in entropy
    coordinates; passing others allows checks against a test entropy.
    """
    if grad is None:
        grad = lambda U: grad_eta(U, eos, G)  # noqa: E731
        hess = lambda U: hess_eta(U, eos, G)  # noqa: E731
        coords = to_entropy_coords
    coords = coords or (lambda U: np.asarray(U, dtype=float))
    dV = coords(U1) - coords(U2)
    return grad(U1) - grad(U2) - hess(U2) @ dV


# -- source bounds -------------------------------------------------------------------

def sample_states(rng: np.random.Generator, n: int, d: int = 2, rho_range=(0.5, 2.0),
                  u_max=1.0, f_dev=0.3, a_range=(0.5, 2.0)) -> list[np.ndarray]:
    """Random in-domain solver states from a compact box.

    ``rho`` and the eigenvalues of ``A`` are uniform in their ranges, ``u`` in
    ``[-u_max, u_max]^d``, ``F = I + E`` with entries of ``E`` in ``[-f_dev, f_dev]``
    (which keeps ``det F > 0`` for ``f_dev <= 0.3`` in d = 2).
    """
    out = []
    while len(out) < n:
        rho = rng.uniform(*rho_range)
        u = rng.uniform(-u_max, u_max, d)
        F = np.eye(d) + rng.uniform(-f_dev, f_dev, (d, d))
        if np.linalg.det(F) <= 0.1:
            continue
        R, _ = np.linalg.qr(rng.normal(size=(d, d)))
        A = R @ np.diag(rng.uniform(*a_range, d)) @ R.T
        out.append(primitive_to_conserved(PrimitiveStateMD(rho, u, F, symmetrize(A))))
    return out


@dataclass
class SourceBoundsReport:
    lipschitz: np.ndarray
    remainder: np.ndarray
    n_samples: int
    radius: float
    box: dict = field(default_factory=dict)
    secant_ratio: float = 0.0


def _jacobian_fd(fun, U, h=1e-6):
    n = U.size
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        cols.append((fun(U + e) - fun(U - e)) / (2 * h))
    return np.stack(cols, axis=1)


def _perturbation(rng, U, d, sa, scale):
    """Random symmetric-in-A perturbation of norm ``scale`` that stays in the domain."""
    nvar = U.size
    for _ in range(20):
        dU = rng.normal(size=nvar)
        block = dU[sa].reshape(d, d)
        dU[sa] = (0.5 * (block + block.T)).ravel()
        dU *= scale / np.linalg.norm(dU)
        try:
            s = conserved_to_primitive(U + dU)
            if np.all(np.linalg.eigvalsh(s.A) > 0):
                return dU
        except DomainError:
            pass
        scale *= 0.5
    raise DomainError("no admissible perturbation found")


def source_bounds_check(samples: Sequence[np.ndarray], rng: np.random.Generator,
                        radius: float = 0.05, box: Optional[dict] = None,
                        directions: int = 8) -> SourceBoundsReport:
    """Empirical constants for ``Pi`` over the sampled states, per component ``m``.

    ``L_m`` is the largest gradient norm ``|D Pi_m(U)|`` (central differences).
    ``R_m = max |Pi_m(U + dU) - Pi_m(U) - D Pi_m(U) dU| / |dU|^2`` over
    ``directions`` random ``dU`` of norm ``radius * |U|`` per sample.
    ``secant_ratio`` is the largest ``|Pi_m(U + dU) - Pi_m(U)| / (L_m |dU|)``
    seen, which should stay near or below one.
    """
    nvar = samples[0].size
    d = dim_from_nvar(nvar)
    sa = slice(1 + d + d * d, nvar)
    L = np.zeros(nvar)
    R = np.zeros(nvar)
    secants = []
    for U in samples:
        P0 = source_Pi(U)
        J = _jacobian_fd(source_Pi, U)
        L = np.maximum(L, np.linalg.norm(J, axis=1))
        for _ in range(directions):
            dU = _perturbation(rng, U, d, sa, radius * np.linalg.norm(U))
            nrm = np.linalg.norm(dU)
            dP = source_Pi(U + dU) - P0
            R = np.maximum(R, np.abs(dP - J @ dU) / nrm**2)
            secants.append(np.abs(dP) / nrm)
    sec = np.max(np.stack(secants), axis=0) if secants else np.zeros(nvar)
    active = L > 0
    ratio = float(np.max(sec[active] / L[active])) if np.any(active) else 0.0
    return SourceBoundsReport(L, R, len(samples), radius, dict(box or {}), ratio)


# -- constitutive law ------------------------------------------------------------------

def constitutive_residual_field(snapshots: Sequence[np.ndarray], dt: float, dx: Sequence[float],
                                params: MaterialParams, n: int = 1) -> np.ndarray:
    """Rescaled Maxwell residual at snapshot ``n`` (needs ``n-1`` and ``n+1``)::

        tau_t + (u.grad) tau - L tau - tau L^T + (div u) tau + xi tau - 2 rho G D(u)

    with ``L_ij = d_j u_i``. Multiplying by ``lambda = 1/xi`` gives the Maxwell
    law ``lambda tau^diamond + tau = 2 mu_dot rho D(u)`` written with the
    density-weighted upper-convected rate, the form compatible with
    compressible flow; for ``div u = 0`` and ``rho = 1`` it is the plain UCM law.
    Returns the tensor field ``(*g, d, d)``.
    """
    G, xi = params.G, params.xi
    prev, cur, nxt = (conserved_to_primitive(snapshots[k]) for k in (n - 1, n, n + 1))
    taus = [neo_hookean_stress(s.rho, s.F, s.A, G) for s in (prev, cur, nxt)]
    d = cur.d
    u = cur.u
    tau = taus[1]
    dtau_dt = (taus[2] - taus[0]) / (2 * dt)
    L = np.stack([np.stack([_centered(u[..., i], j, dx[j]) for j in range(d)], axis=-1)
                  for i in range(d)], axis=-2)
    adv = sum(u[..., j, None, None] * _centered(tau, j, dx[j]) for j in range(d))
    div_u = np.trace(L, axis1=-2, axis2=-1)
    D = symmetrize(L)
    return (dtau_dt + adv - L @ tau - tau @ np.swapaxes(L, -1, -2)
            + div_u[..., None, None] * tau + xi * tau
            - 2 * G * cur.rho[..., None, None] * D)


def constitutive_residual(snapshots: Sequence[np.ndarray], dt: float, dx: Sequence[float],
                          params: MaterialParams, rescaled: bool = False) -> np.ndarray:
    """Grid max-norm of the Maxwell-law residual at every interior snapshot.

    The residual carries the factor ``lambda = 1/xi``; for ``xi = 0`` it is
    undefined and only ``rescaled=True`` (the residual times ``xi``) is allowed.
    """
    if params.xi == 0 and not rescaled:
        raise ValueError("xi = 0 makes the viscosity infinite; use rescaled=True")
    factor = 1.0 if rescaled else 1.0 / params.xi
    out = []
    for n in range(1, len(snapshots) - 1):
        field_ = constitutive_residual_field(snapshots, dt, dx, params, n)
        out.append(factor * float(np.max(np.abs(field_))))
    return np.array(out)

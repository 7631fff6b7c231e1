"""Multi-dimensional Maxwell fluid in conservation form.

Grids of conserved variables are arrays of shape ``(nvar, *grid)`` with the
components ordered

    rho | rho u_i | rho F_{i alpha} (row-major) | rho A_{alpha beta} (row-major)

so ``nvar = 1 + d + 2 d**2``. ``rho A`` is stored as a full matrix and
re-symmetrized after every update; its independent count is d(d+1)/2.

Fluxes in direction ``j`` come from mass and momentum balance with
``sigma = -p I + tau``, ``tau = rho G (F A F^T - I)``, the curl form of the
deformation-gradient transport reduced with the Piola involution
``div(rho F^T) = 0``,

    d_t(rho F_{ia}) + d_j(rho u_j F_{ia} - rho u_i F_{ja}) = 0,

and pure transport of ``rho A`` (the relaxation of ``A`` along particle paths
combined with mass conservation). The relaxation source acts on ``rho A``
only: ``xi * rho (F^{-1} F^{-T} - A)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (DomainError, Eos, StabilityError, left_conformation,
                   neo_hookean_stress, relaxation_target, symmetrize)

CFL_SAFETY = 0.45


def n_vars(d: int) -> int:
    return 1 + d + 2 * d * d


def dim_from_nvar(nvar: int) -> int:
    for d in (1, 2, 3):
        if n_vars(d) == nvar:
            return d
    raise ValueError(f"{nvar} components do not match any dimension")


def slots(d: int):
    """Slices of the mass, momentum, rho F and rho A blocks."""
    return (slice(0, 1), slice(1, 1 + d), slice(1 + d, 1 + d + d * d),
            slice(1 + d + d * d, 1 + d + 2 * d * d))


@dataclass
class PrimitiveStateMD:
    """Pointwise or gridded primitives.

    Shapes: ``rho (*g)``, ``u (*g, d)``, ``F (*g, d, d)``, ``A (*g, d, d)``.
    """

    rho: np.ndarray
    u: np.ndarray
    F: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        self.A = np.asarray(self.A, dtype=float)

    @property
    def d(self) -> int:
        return self.F.shape[-1]


@dataclass
class HyperbolicityReport:
    min_rho: float
    min_detF: float
    min_eig_A: float

    @property
    def in_domain(self) -> bool:
        return self.min_rho > 0 and self.min_detF > 0 and self.min_eig_A > 0

    def as_dict(self) -> dict:
        return {"min_rho": self.min_rho, "min_detF": self.min_detF,
                "min_eig_A": self.min_eig_A, "in_domain": self.in_domain}


class HyperbolicityLoss(DomainError):
    def __init__(self, message, report: HyperbolicityReport):
        super().__init__(message)
        self.report = report


def _to_matrix_block(block, d):
    # (d*d, *g) -> (*g, d, d)
    g = block.shape[1:]
    return np.moveaxis(block.reshape((d, d) + g), (0, 1), (-2, -1))


def _from_matrix_block(mat):
    # (*g, d, d) -> (d*d, *g)
    d = mat.shape[-1]
    moved = np.moveaxis(mat, (-2, -1), (0, 1))
    return moved.reshape((d * d,) + mat.shape[:-2])


def primitive_to_conserved(s: PrimitiveStateMD) -> np.ndarray:
    rho = s.rho
    parts = [rho[None],
             np.moveaxis(rho[..., None] * s.u, -1, 0),
             _from_matrix_block(rho[..., None, None] * s.F),
             _from_matrix_block(rho[..., None, None] * symmetrize(s.A))]
    return np.concatenate(parts, axis=0)


def conserved_to_primitive(U) -> PrimitiveStateMD:
    U = np.asarray(U, dtype=float)
    d = dim_from_nvar(U.shape[0])
    sr, sm, sf, sa = slots(d)
    rho = U[0]
    if np.any(~(rho > 0)):
        raise DomainError("non-positive density in conserved state")
    u = np.moveaxis(U[sm], 0, -1) / rho[..., None]
    F = _to_matrix_block(U[sf], d) / rho[..., None, None]
    A = symmetrize(_to_matrix_block(U[sa], d) / rho[..., None, None])
    return PrimitiveStateMD(rho, u, F, A)


def hyperbolicity_report(U) -> HyperbolicityReport:
    U = np.asarray(U, dtype=float)
    dim_from_nvar(U.shape[0])  # shape check
    rho = U[0]
    min_rho = float(np.min(rho))
    if not min_rho > 0:
        return HyperbolicityReport(min_rho, float("nan"), float("nan"))
    s = conserved_to_primitive(U)
    detF = np.linalg.det(s.F)
    eigA = np.linalg.eigvalsh(s.A)
    return HyperbolicityReport(min_rho, float(np.min(detF)), float(np.min(eigA)))


def _require_domain(s: PrimitiveStateMD):
    if np.any(~(s.rho > 0)):
        raise DomainError("non-positive density")
    if np.any(~(np.abs(np.linalg.det(s.F)) > 0)):
        raise DomainError("singular deformation gradient")


def flux(U, j: int, eos: Eos, G: float) -> np.ndarray:
    """Physical flux of the conserved variables in direction ``j`` (0-based)."""
    U = np.asarray(U, dtype=float)
    s = conserved_to_primitive(U)
    _require_domain(s)
    return _flux_from_primitive(s, j, eos, G)


def _flux_from_primitive(s: PrimitiveStateMD, j, eos, G):
    rho, u, F, A = s.rho, s.u, s.F, s.A
    uj = u[..., j]
    tau = neo_hookean_stress(rho, F, A, G)
    p = eos.c0**2 * rho

    mom = rho[..., None] * u * uj[..., None] - tau[..., :, j]
    mom[..., j] += p
    # rho (u_j F_{i a} - u_i F_{j a})
    fF = rho[..., None, None] * (uj[..., None, None] * F - u[..., :, None] * F[..., j, None, :])
    fA = (rho * uj)[..., None, None] * A
    return np.concatenate([(rho * uj)[None], np.moveaxis(mom, -1, 0),
                           _from_matrix_block(fF), _from_matrix_block(fA)], axis=0)


def source_Pi(U) -> np.ndarray:
    """Relaxation source per unit ``xi``: nonzero only in the ``rho A`` block."""
    U = np.asarray(U, dtype=float)
    d = dim_from_nvar(U.shape[0])
    s = conserved_to_primitive(U)
    _require_domain(s)
    out = np.zeros_like(U)
    target = relaxation_target(s.F)
    out[slots(d)[3]] = _from_matrix_block(s.rho[..., None, None] * (target - s.A))
    return out


def max_wavespeed(U, eos: Eos, G: float) -> np.ndarray:
    """Pointwise bound ``|u| + sqrt(p'(rho)) + sqrt(G lambda_max(F A F^T) + G)``."""
    s = conserved_to_primitive(np.asarray(U, dtype=float))
    _require_domain(s)
    return _wavespeed(s, eos, G)


def _wavespeed(s: PrimitiveStateMD, eos, G):
    B = symmetrize(left_conformation(s.F, s.A))
    lam = np.linalg.eigvalsh(B)[..., -1]
    c_shear = np.sqrt(G * np.maximum(lam, 0.0) + G)
    c_ac = np.sqrt(eos.dpressure(s.rho))
    return np.linalg.norm(s.u, axis=-1) + c_ac + c_shear


def _relax(U, dt, xi):
    d = dim_from_nvar(U.shape[0])
    if xi == 0:
        return U
    s = conserved_to_primitive(U)
    target = relaxation_target(s.F)
    # frozen F: exact exponential approach of A to F^{-1} F^{-T}
    A = target + (s.A - target) * math.exp(-xi * dt)
    out = U.copy()
    out[slots(d)[3]] = _from_matrix_block(s.rho[..., None, None] * symmetrize(A))
    return out


def fv_step(U, dt: float, dx: Sequence[float], eos: Eos, G: float, xi: float,
            cfl_safety: float = CFL_SAFETY) -> np.ndarray:
    """One Rusanov transport step on a periodic grid followed by exact relaxation."""
    U = np.asarray(U, dtype=float)
    d = dim_from_nvar(U.shape[0])
    if U.ndim - 1 != d or len(dx) != d:
        raise ValueError("grid dimension does not match the state dimension")
    s = conserved_to_primitive(U)
    _require_domain(s)
    speed = _wavespeed(s, eos, G)
    smax = float(np.max(speed))
    if not math.isfinite(smax):
        raise HyperbolicityLoss("non-finite wavespeed", hyperbolicity_report(U))
    if dt > cfl_safety * min(dx) / smax * (1 + 1e-12):
        raise StabilityError(f"dt={dt:.6g} exceeds CFL bound {cfl_safety * min(dx) / smax:.6g}")

    new = U.copy()
    for j in range(d):
        ax = j + 1
        f = _flux_from_primitive(s, j, eos, G)
        U_r = np.roll(U, -1, axis=ax)
        f_r = np.roll(f, -1, axis=ax)
        a = np.maximum(speed, np.roll(speed, -1, axis=j))
        # numerical flux at the face between cell k and k+1
        face = 0.5 * (f + f_r) - 0.5 * a[None] * (U_r - U)
        new -= dt / dx[j] * (face - np.roll(face, 1, axis=ax))

    sa = slots(d)[3]
    new[sa] = _from_matrix_block(symmetrize(_to_matrix_block(new[sa], d)))
    rep = hyperbolicity_report(new)
    if not rep.in_domain:
        raise HyperbolicityLoss("state left the hyperbolicity domain after transport", rep)
    new = _relax(new, dt, xi)
    if not np.all(np.isfinite(new)):
        raise HyperbolicityLoss("non-finite values after step", hyperbolicity_report(U))
    rep = hyperbolicity_report(new)
    if not rep.in_domain:
        raise HyperbolicityLoss("state left the hyperbolicity domain after relaxation", rep)
    return new


def piola_residual(U, dx: Sequence[float]) -> np.ndarray:
    """Max over cells of the centered ``div(rho F^T)``, one value per material index."""
    U = np.asarray(U, dtype=float)
    d = dim_from_nvar(U.shape[0])
    P = U[slots(d)[2]].reshape((d, d) + U.shape[1:])
    div = np.zeros((d,) + U.shape[1:])
    for j in range(d):
        div += (np.roll(P[j], -1, axis=j + 1) - np.roll(P[j], 1, axis=j + 1)) / (2 * dx[j])
    return np.max(np.abs(div.reshape(d, -1)), axis=1)


def totals(U, dx: Sequence[float]) -> np.ndarray:
    """Cell-volume weighted sums of every component."""
    U = np.asarray(U, dtype=float)
    vol = float(np.prod(dx))
    return vol * U.reshape(U.shape[0], -1).sum(axis=1)


# -- grids and initial data -------------------------------------------------

def cell_centers(n: Sequence[int], lower: Sequence[float], upper: Sequence[float]):
    axes = [lo + (np.arange(k) + 0.5) * (hi - lo) / k for k, lo, hi in zip(n, lower, upper)]
    return np.meshgrid(*axes, indexing="ij")


def density_bump_state(n: Sequence[int], amplitude: float = 0.1, compatible: bool = True,
                       lower=(0.0, 0.0), upper=(1.0, 1.0)) -> PrimitiveStateMD:
    """Smooth 2D rest state with a density bump ``~ 1 + amp sin(2 pi x) sin(2 pi y)``.

    With ``compatible`` the state comes from the reference map
    ``a = x - grad(phi)``: ``F = (I - hess phi)^{-1}``, ``rho = det(I - hess phi)``,
    which satisfies ``div(rho F^T) = 0`` exactly, and ``A = F^{-1} F^{-T}``.
    Otherwise ``rho = 1 + amp sin sin`` with ``F = A = I``.
    """
    x, y = cell_centers(n, lower, upper)
    k = 2 * np.pi
    grid = x.shape
    I = np.broadcast_to(np.eye(2), grid + (2, 2))
    u = np.zeros(grid + (2,))
    if not compatible:
        rho = 1.0 + amplitude * np.sin(k * x) * np.sin(k * y)
        return PrimitiveStateMD(rho, u, I.copy(), I.copy())
    # phi = c sin sin with Laplacian -amp sin sin to leading order
    c = amplitude / (2 * k * k)
    H = np.empty(grid + (2, 2))
    H[..., 0, 0] = 1 + c * k * k * np.sin(k * x) * np.sin(k * y)
    H[..., 1, 1] = H[..., 0, 0]
    H[..., 0, 1] = -c * k * k * np.cos(k * x) * np.cos(k * y)
    H[..., 1, 0] = H[..., 0, 1]
    rho = np.linalg.det(H)
    F = np.linalg.inv(H)
    A = symmetrize(H @ np.swapaxes(H, -1, -2))
    return PrimitiveStateMD(rho, u, F, A)


@dataclass
class MultidRun:
    xi: float
    dt: float
    dx: tuple
    times: np.ndarray
    snapshots: list
    step_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    piola: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]


def stable_dt(U, dx, eos, G, cfl_safety=CFL_SAFETY, margin=0.8) -> float:
    """Fixed step from the initial wavespeed, with headroom for its growth."""
    return margin * cfl_safety * min(dx) / float(np.max(max_wavespeed(U, eos, G)))


def time_levels(T: float, dt: float) -> np.ndarray:
    """``0, dt, 2 dt, ..., T``; the last step is shortened to land on ``T``."""
    n = T / dt
    n_steps = int(round(n)) if abs(n - round(n)) <= 1e-9 * max(n, 1.0) else int(math.ceil(n))
    levels = np.minimum(dt * np.arange(n_steps + 1), T)
    levels[-1] = T
    return levels


def run_multid(U0, dx, eos: Eos, G: float, xi: float, T: float, dt: Optional[float] = None,
               record: str = "all", record_times: Optional[Sequence[float]] = None,
               track_piola: bool = False) -> MultidRun:
    """March ``U0`` to ``T`` with a fixed step (last one shortened to land on ``T``).

    Runs that share ``U0``, ``dx``, ``dt`` and ``T`` march through the same
    time levels, so their states can be compared level by level.
    ``record`` is ``"all"``, ``"final"`` or ``"times"`` (with ``record_times``).
    """
    U = np.asarray(U0, dtype=float).copy()
    dx = tuple(float(h) for h in dx)
    if dt is None:
        dt = stable_dt(U, dx, eos, G)
    levels = time_levels(T, dt)
    n_steps = len(levels) - 1
    if record == "times":
        keep = {int(np.argmin(np.abs(levels - tr))) for tr in record_times}
        keep.add(n_steps)
    elif record == "final":
        keep = {n_steps}
    else:
        keep = set(range(n_steps + 1))
    keep.add(0)

    times, snaps, piola = [], [], []
    if 0 in keep:
        times.append(0.0)
        snaps.append(U.copy())
    if track_piola:
        piola.append(piola_residual(U, dx))
    for k in range(1, n_steps + 1):
        h = levels[k] - levels[k - 1]
        U = fv_step(U, h, dx, eos, G, xi)
        if track_piola:
            piola.append(piola_residual(U, dx))
        if k in keep:
            times.append(float(levels[k]))
            snaps.append(U.copy())
    return MultidRun(xi, dt, dx, np.array(times), snaps, levels, piola)


def l2_norm(V, dx) -> float:
    V = np.asarray(V, dtype=float)
    return math.sqrt(float(np.prod(dx)) * float(np.sum(V * V)))
